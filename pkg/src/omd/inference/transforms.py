"""Unconstrained parameterisations.

Stick breaks live on ``(0, 1)`` and are mapped through the logit; positive
scalars through the log. For ordered matrices the unconstrained vector holds
the *pre-sort* breaks and the sort is applied inside :meth:`StickMatrix.constrain`.
Sorting only permutes coordinates, so it adds no Jacobian term, and in the
backward pass the permutation is simply undone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, expit, logit

from ..errors import InvalidArgumentError, InvalidParameterError
from ..priors import (
    STICK_FLOOR,
    BandSpec,
    band_concentrations,
    break_sticks,
    matrix_to_sticks,
    sort_sticks,
    stick_concentrations,
    sticks_sorted,
)


def log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


@dataclass(frozen=True)
class Block:
    name: str
    shape: tuple
    transform: str
    start: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


class ParameterLayout:
    """Named, non-overlapping slices of a flat parameter vector."""

    def __init__(self, specs):
        self.blocks = {}
        start = 0
        for name, shape, transform in specs:
            if transform not in ("logit", "log", "identity"):
                raise InvalidArgumentError(f"unknown transform {transform!r}")
            shape = tuple(np.atleast_1d(shape).tolist())
            block = Block(name, shape, transform, start)
            self.blocks[name] = block
            start += block.size
        self.size = start

    def __contains__(self, name):
        return name in self.blocks

    @property
    def names(self):
        return list(self.blocks)

    def get(self, z, name) -> np.ndarray:
        block = self.blocks[name]
        return z[block.slice].reshape(block.shape)

    def split(self, z) -> dict:
        return {name: self.get(z, name) for name in self.blocks}

    def join(self, parts: dict) -> np.ndarray:
        z = np.empty(self.size)
        for name, block in self.blocks.items():
            z[block.slice] = np.asarray(parts[name], dtype=float).ravel()
        return z


@dataclass
class UnconstrainedState:
    vector: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float)
        if self.vector.shape != (self.layout.size,):
            raise InvalidArgumentError("vector length does not match layout")

    def __getitem__(self, name):
        return self.layout.get(self.vector, name)


class StickMatrix:
    """Logit-parameterised stick breaks of one stochastic matrix.

    Parameters
    ----------
    family : {"omd", "smd", "bmd"}
    n_rows, n_cols : int
        Matrix shape. ``bmd`` requires a square matrix.
    alpha : array_like, optional
        Concentration for ``omd``/``smd``.
    bandwidth, alpha3 :
        Band width and ``(escalating, de-escalating, steady)`` weights for ``bmd``.
    """

    def __init__(self, family, n_rows, n_cols, alpha=None, bandwidth=1, alpha3=(1.0, 1.0, 1.0)):
        self.family = family
        self.n_rows, self.n_cols = n_rows, n_cols
        if family in ("omd", "smd") and n_cols == 1:
            # a single column is the constant matrix of ones: nothing to sample
            self.a = self.b = np.zeros(0)
            self.size = 0
        elif family in ("omd", "smd"):
            a_par, b_par = stick_concentrations(np.ones(n_cols) if alpha is None else alpha)
            self.a = np.broadcast_to(a_par, (n_rows, n_cols - 1)).ravel()
            self.b = np.broadcast_to(b_par, (n_rows, n_cols - 1)).ravel()
            self.size = n_rows * (n_cols - 1)
        elif family == "bmd":
            if n_rows != n_cols:
                raise InvalidParameterError("banded matrices must be square")
            self.band = BandSpec(bandwidth, n_rows)
            self.segments = []
            a_all, b_all = [], []
            start = 0
            for k, conc in enumerate(band_concentrations(self.band, alpha3)):
                a_par, b_par = stick_concentrations(conc)
                self.segments.append((k, self.band.columns(k), slice(start, start + a_par.size)))
                start += a_par.size
                a_all.append(a_par)
                b_all.append(b_par)
            self.a = np.concatenate(a_all)
            self.b = np.concatenate(b_all)
            self.size = start
        else:
            raise InvalidParameterError(f"unknown family {family!r}")
        self._log_norm = float(np.sum(betaln(self.a, self.b)))

    def constrain(self, z):
        """Return the matrix and a cache for :meth:`backprop`."""
        beta = expit(np.asarray(z, dtype=float))
        if self.family == "bmd":
            m = np.zeros((self.n_rows, self.n_cols))
            rests = []
            for k, cols, sl in self.segments:
                row, rest = break_sticks(beta[sl][None, :], return_remaining=True)
                m[k, cols] = row[0]
                rests.append(rest[0])
            return m, (beta, rests)
        raw = beta.reshape(self.n_rows, self.n_cols - 1)
        if self.family == "omd":
            sticks, order = sort_sticks(raw)
        else:
            sticks, order = raw, None
        m, rest = break_sticks(sticks, return_remaining=True)
        return m, (beta, sticks, rest, order)

    def matrix(self, z) -> np.ndarray:
        return self.constrain(z)[0]

    def backprop(self, grad_m, cache) -> np.ndarray:
        """Chain ``d/dmatrix`` back to the logits."""
        grad_m = np.asarray(grad_m, dtype=float)
        if self.family == "bmd":
            beta, rests = cache
            g_beta = np.empty_like(beta)
            for (k, cols, sl), rest in zip(self.segments, rests):
                g_beta[sl] = _stick_backward(grad_m[k, cols][None, :], beta[sl][None, :], rest[None, :])[0]
            return g_beta * beta * (1.0 - beta)
        beta, sticks, rest, order = cache
        g_sticks = _stick_backward(grad_m, sticks, rest)
        if order is not None:
            # undo the sort: sorted[i, a] came from raw[order[i, a], a]
            g_raw = np.empty_like(g_sticks)
            np.put_along_axis(g_raw, order, g_sticks, axis=0)
        else:
            g_raw = g_sticks
        return g_raw.ravel() * beta * (1.0 - beta)

    def log_prior(self, z):
        """Beta prior on the breaks plus the logit Jacobian, and its gradient."""
        z = np.asarray(z, dtype=float)
        value = float(np.sum(self.a * log_sigmoid(z) + self.b * log_sigmoid(-z))) - self._log_norm
        grad = self.a * expit(-z) - self.b * expit(z)
        return value, grad

    def log_jacobian(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(np.sum(log_sigmoid(z) + log_sigmoid(-z)))

    def sample(self, rng) -> np.ndarray:
        """Logits of breaks drawn from their Beta priors."""
        beta = rng.beta(self.a, self.b)
        return logit(np.clip(beta, 1e-12, 1 - 1e-12))

    def unconstrain(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if m.shape != (self.n_rows, self.n_cols):
            raise InvalidArgumentError(f"expected a {self.n_rows}x{self.n_cols} matrix")
        if self.family == "bmd":
            if np.any(m[~self.band.mask()] != 0):
                raise InvalidArgumentError("matrix has mass outside the band")
            parts = [matrix_to_sticks(m[k, cols][None, :])[0] for k, cols, _ in self.segments]
            sticks = np.concatenate(parts)
        else:
            sticks = matrix_to_sticks(m)
            if self.family == "omd" and not sticks_sorted(sticks):
                raise InvalidArgumentError("matrix is outside the ordered support")
            sticks = sticks.ravel()
        if np.any(sticks <= 0) or np.any(sticks >= 1):
            raise InvalidArgumentError("matrix lies on the boundary of the simplex")
        return logit(sticks)


def _stick_backward(grad_phi, sticks, rest):
    """Reverse pass of :func:`omd.priors.break_sticks`.

    With ``phi_j = beta_j R_j``, ``R_{j+1} = (1 - beta_j) R_j`` and
    ``phi_last = R_last``.
    """
    n = sticks.shape[1]
    g_beta = np.empty_like(sticks)
    g_rest = grad_phi[:, n].copy()
    for j in range(n - 1, -1, -1):
        g_beta[:, j] = rest[:, j] * (grad_phi[:, j] - g_rest)
        g_rest = grad_phi[:, j] * sticks[:, j] + g_rest * (1.0 - sticks[:, j])
    # entries whose remaining mass hit the floor carry no signal
    g_beta[rest[:, :n] <= STICK_FLOOR] = 0.0
    return g_beta


class PositiveBlock:
    """Log transform for gamma-distributed parameters."""

    #: exp() arguments are clipped to this range to avoid overflow/underflow.
    LIMIT = 700.0

    @staticmethod
    def constrain(u):
        return np.exp(np.clip(u, -PositiveBlock.LIMIT, PositiveBlock.LIMIT))

    @staticmethod
    def unconstrain(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise InvalidArgumentError("positive parameter out of support")
        return np.log(x)

"""Dynamic Poisson Tucker decomposition of a country x country x action x time tensor.

Each count is Poisson with rate ::

    mu[i, j, a, t] = delta_a[a] * delta_t[t]
                     * sum_{c1, c2, k} psi[i, c1] psi[j, c2] core[t, c1, c2, k] phi[k, a]

The core tensor follows a gamma chain driven by the transition matrix,
``core[t] ~ Gam(tau0 * core[t-1] @ pi, tau0)``, and the time scales follow
``delta_t[t] ~ Gam(tau0 * delta_t[t-1], tau0)``. Both chains start from
``Gam(alpha0, alpha0)``, which is also the prior of ``psi`` and ``delta_a``.

Self-interactions (``i == j``) are not part of the data and never contribute
to the likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgumentError, InvalidParameterError
from .priors import PriorConfig, is_stochastic

#: Rates are floored here before taking logs.
RATE_FLOOR = 1e-12


@dataclass
class CountTensor:
    """Sparse ``V x V x A x T`` count tensor in coordinate format.

    ``coords`` rows are ``(i, j, a, t)``, 0-based. Duplicate coordinates are
    summed and zero counts dropped on construction. ``mask`` optionally lists
    held-out cells, which are excluded from the likelihood.
    """

    dims: tuple
    coords: np.ndarray
    counts: np.ndarray
    mask: np.ndarray | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 4 or self.dims[0] != self.dims[1]:
            raise InvalidArgumentError("dims must be (V, V, A, T)")
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 4)
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if coords.shape[0] != counts.shape[0]:
            raise InvalidArgumentError("coords and counts differ in length")
        self._check_bounds(coords)
        if np.any(counts < 0):
            raise InvalidArgumentError("counts must be non-negative")
        lin = np.ravel_multi_index(coords.T, self.dims) if coords.size else np.zeros(0, np.int64)
        uniq, inv = np.unique(lin, return_inverse=True)
        summed = np.bincount(inv, weights=counts, minlength=uniq.size).astype(np.int64)
        keep = summed > 0
        self.coords = np.stack(np.unravel_index(uniq[keep], self.dims), axis=1).astype(np.int64)
        self.coords = self.coords.reshape(-1, 4)
        self.counts = summed[keep]
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=np.int64).reshape(-1, 4)
            self._check_bounds(mask)
            mlin = np.unique(np.ravel_multi_index(mask.T, self.dims)) if mask.size else np.zeros(0, np.int64)
            self.mask = np.stack(np.unravel_index(mlin, self.dims), axis=1).astype(np.int64).reshape(-1, 4)

    def _check_bounds(self, coords):
        if coords.size and (np.any(coords < 0) or np.any(coords >= np.array(self.dims))):
            raise InvalidArgumentError("index outside tensor dims")

    @classmethod
    def from_dense(cls, dense, mask=None, labels=None) -> "CountTensor":
        dense = np.asarray(dense)
        idx = np.argwhere(dense > 0)
        return cls(dense.shape, idx, dense[tuple(idx.T)], mask=mask, labels=dict(labels or {}))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dims, dtype=np.int64)
        out[tuple(self.coords.T)] = self.counts
        return out

    @property
    def V(self) -> int:
        return self.dims[0]

    @property
    def A(self) -> int:
        return self.dims[2]

    @property
    def T(self) -> int:
        return self.dims[3]

    @property
    def nnz(self) -> int:
        return int(self.counts.size)

    def _masked_linear(self):
        if self.mask is None or self.mask.size == 0:
            return np.zeros(0, np.int64)
        return np.ravel_multi_index(self.mask.T, self.dims)

    def observed_entries(self):
        """Nonzero entries outside the mask and off the diagonal."""
        keep = self.coords[:, 0] != self.coords[:, 1]
        if self.mask is not None and self.mask.size:
            lin = np.ravel_multi_index(self.coords.T, self.dims)
            keep &= ~np.isin(lin, self._masked_linear())
        return self.coords[keep], self.counts[keep]

    def masked_cells(self) -> np.ndarray:
        """Masked off-diagonal cells (zero or not)."""
        if self.mask is None:
            return np.zeros((0, 4), np.int64)
        return self.mask[self.mask[:, 0] != self.mask[:, 1]]

    def count_at(self, cells) -> np.ndarray:
        """Counts at arbitrary ``(n, 4)`` cells (0 where absent)."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 4)
        lin = np.ravel_multi_index(self.coords.T, self.dims) if self.nnz else np.zeros(0, np.int64)
        q = np.ravel_multi_index(cells.T, self.dims)
        pos = np.searchsorted(lin, q)
        out = np.zeros(q.size, dtype=np.int64)
        ok = pos < lin.size
        ok[ok] = lin[pos[ok]] == q[ok]
        out[ok] = self.counts[pos[ok]]
        return out

    @property
    def n_observed_cells(self) -> int:
        V, _, A, T = self.dims
        return V * (V - 1) * A * T - int(self.masked_cells().shape[0])

    def with_mask(self, mask) -> "CountTensor":
        return CountTensor(self.dims, self.coords, self.counts, mask=mask, labels=dict(self.labels))

    def time_slice(self, start, stop) -> "CountTensor":
        """Steps ``start <= t < stop`` re-indexed from 0; masks are dropped."""
        keep = (self.coords[:, 3] >= start) & (self.coords[:, 3] < stop)
        coords = self.coords[keep].copy()
        coords[:, 3] -= start
        V, _, A, _ = self.dims
        return CountTensor((V, V, A, stop - start), coords, self.counts[keep], labels=dict(self.labels))


@dataclass
class DptParams:
    """Parameters of the dynamic Poisson Tucker model.

    ``psi`` is ``V x C`` (country-community rates) and ``core`` is
    ``T x C x C x K``. If ``psi_target`` is given it replaces ``psi`` for the
    receiving country; by default one matrix serves both roles.
    """

    psi: np.ndarray
    core: np.ndarray
    emission: np.ndarray
    transition: np.ndarray
    delta_a: np.ndarray
    delta_t: np.ndarray
    tau0: float = 1.0
    alpha0: float = 1.0
    psi_target: np.ndarray | None = None

    def __post_init__(self):
        for name in ("psi", "core", "emission", "transition", "delta_a", "delta_t"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.psi_target is not None:
            self.psi_target = np.asarray(self.psi_target, dtype=float)
        V, C = self.psi.shape
        T, C1, C2, K = self.core.shape
        if (C1, C2) != (C, C) or self.emission.shape[0] != K or self.transition.shape != (K, K):
            raise InvalidParameterError("inconsistent DPT parameter shapes")
        if self.delta_a.shape != (self.emission.shape[1],) or self.delta_t.shape != (T,):
            raise InvalidParameterError("scale vectors have the wrong length")
        if self.psi_target is not None and self.psi_target.shape != (V, C):
            raise InvalidParameterError("psi_target must match psi")
        if not (is_stochastic(self.emission, 1e-8) and is_stochastic(self.transition, 1e-8)):
            raise InvalidParameterError("emission and transition must be row-stochastic")
        if self.tau0 <= 0 or self.alpha0 <= 0:
            raise InvalidParameterError("tau0 and alpha0 must be positive")

    @property
    def dims(self):
        return (self.V, self.V, self.A, self.T)

    @property
    def V(self) -> int:
        return self.psi.shape[0]

    @property
    def C(self) -> int:
        return self.psi.shape[1]

    @property
    def K(self) -> int:
        return self.emission.shape[0]

    @property
    def A(self) -> int:
        return self.emission.shape[1]

    @property
    def T(self) -> int:
        return self.core.shape[0]

    @property
    def receiver(self) -> np.ndarray:
        return self.psi if self.psi_target is None else self.psi_target


def core_action(core, emission) -> np.ndarray:
    """``B[t, a, c1, c2] = sum_k core[t, c1, c2, k] * phi[k, a]``."""
    return np.einsum("tcdk,ka->tacd", core, emission)


def dpt_rate(params: DptParams, i, j, a, t) -> float:
    """Poisson rate of a single cell."""
    inner = params.core[t] @ params.emission[:, a]
    value = params.psi[i] @ inner @ params.receiver[j]
    return float(params.delta_a[a] * params.delta_t[t] * value)


def rate_tensor(params: DptParams, include_diagonal=False) -> np.ndarray:
    """Dense ``V x V x A x T`` rates; the ``i == j`` slices are zero unless asked for."""
    B = core_action(params.core, params.emission)
    rates = np.einsum("ic,tacd,jd->ijat", params.psi, B, params.receiver)
    rates *= params.delta_a[None, None, :, None] * params.delta_t[None, None, None, :]
    if not include_diagonal:
        idx = np.arange(params.V)
        rates[idx, idx] = 0.0
    return rates


def rates_at(params: DptParams, cells, B=None) -> np.ndarray:
    """Rates at an ``(n, 4)`` array of ``(i, j, a, t)`` cells."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 4)
    if B is None:
        B = core_action(params.core, params.emission)
    i, j, a, t = cells.T
    q = np.einsum("nc,ncd,nd->n", params.psi[i], B[t, a], params.receiver[j])
    return params.delta_a[a] * params.delta_t[t] * q


def total_rate(params: DptParams, B=None) -> float:
    """Sum of all off-diagonal rates, computed without touching individual cells."""
    if B is None:
        B = core_action(params.core, params.emission)
    send, recv = params.psi, params.receiver
    pair = np.outer(send.sum(axis=0), recv.sum(axis=0)) - send.T @ recv
    return float(np.einsum("t,a,tacd,cd->", params.delta_t, params.delta_a, B, pair))


def dpt_generate(params: DptParams, rng) -> CountTensor:
    """Draw every off-diagonal cell from its Poisson rate."""
    rates = rate_tensor(params)
    return CountTensor.from_dense(rng.poisson(rates))


def dpt_core_step(params: DptParams, t) -> np.ndarray:
    """``E[core[t] | core[t-1]] = core[t-1] @ pi`` for 0-based ``t >= 1``."""
    if t < 1:
        raise InvalidArgumentError("the core chain has no predecessor at t = 0")
    return params.core[t - 1] @ params.transition


def gamma_log_density(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def poisson_data_term(params: DptParams, data: CountTensor, B=None) -> float:
    """Poisson log-likelihood of every observed (non-masked, off-diagonal) cell."""
    if B is None:
        B = core_action(params.core, params.emission)
    coords, counts = data.observed_entries()
    mu = np.maximum(rates_at(params, coords, B), RATE_FLOOR)
    value = np.sum(counts * np.log(mu) - gammaln(counts + 1.0))
    value -= total_rate(params, B)
    masked = data.masked_cells()
    if masked.size:
        value += np.sum(rates_at(params, masked, B))
    return float(value)


def gamma_prior_terms(params: DptParams) -> float:
    """Log prior of the scales, community rates and the core chain."""
    a0, tau = params.alpha0, params.tau0
    total = np.sum(gamma_log_density(params.psi, a0, a0))
    if params.psi_target is not None:
        total += np.sum(gamma_log_density(params.psi_target, a0, a0))
    total += np.sum(gamma_log_density(params.delta_a, a0, a0))
    total += gamma_log_density(params.delta_t[0], a0, a0)
    total += np.sum(gamma_log_density(params.delta_t[1:], tau * params.delta_t[:-1], tau))
    total += np.sum(gamma_log_density(params.core[0], a0, a0))
    if params.T > 1:
        shape = tau * (params.core[:-1] @ params.transition)
        total += np.sum(gamma_log_density(params.core[1:], shape, tau))
    return float(total)


def dpt_log_joint(params: DptParams, data: CountTensor, config: PriorConfig) -> float:
    """Unnormalised log joint density of parameters and observed counts.

    Matrix priors are evaluated in stick coordinates (see
    :func:`omd.priors.matrix_log_prior`).
    """
    if tuple(data.dims) != params.dims:
        raise InvalidArgumentError(f"data dims {data.dims} do not match parameters {params.dims}")
    value = poisson_data_term(params, data)
    value += gamma_prior_terms(params)
    value += config.emission_log_prior(params.emission)
    value += config.transition_log_prior(params.transition)
    return float(value)


def sample_dpt_params(V, C, K, A, T, config: PriorConfig, rng, tau0=1.0, alpha0=1.0,
                      separate_receiver=False) -> DptParams:
    """Draw a full parameter set from the prior."""
    emission = config.sample_emission(K, A, rng)
    transition = config.sample_transition(K, rng)
    psi = rng.gamma(alpha0, 1.0 / alpha0, size=(V, C))
    psi_target = rng.gamma(alpha0, 1.0 / alpha0, size=(V, C)) if separate_receiver else None
    delta_a = rng.gamma(alpha0, 1.0 / alpha0, size=A)
    delta_t = np.empty(T)
    delta_t[0] = rng.gamma(alpha0, 1.0 / alpha0)
    for t in range(1, T):
        delta_t[t] = rng.gamma(tau0 * delta_t[t - 1], 1.0 / tau0)
    core = np.empty((T, C, C, K))
    core[0] = rng.gamma(alpha0, 1.0 / alpha0, size=(C, C, K))
    for t in range(1, T):
        core[t] = rng.gamma(tau0 * (core[t - 1] @ transition), 1.0 / tau0)
    # gamma draws with tiny shapes can underflow to exactly zero
    core = np.maximum(core, 1e-300)
    delta_t = np.maximum(delta_t, 1e-300)
    return DptParams(psi, core, emission, transition, delta_a, delta_t,
                     tau0=tau0, alpha0=alpha0, psi_target=psi_target)


@dataclass
class DptForecast:
    """Per-sample forecast rates, shape ``(S, V, V, A, horizon)``; ``t0`` is the first forecast step."""

    rates: np.ndarray
    t0: int

    @property
    def mean_rates(self) -> np.ndarray:
        return self.rates.mean(axis=0)

    expected_counts = mean_rates

    def rates_at(self, cells) -> np.ndarray:
        """``(S, n)`` rates at absolute-time cells ``(i, j, a, t)`` with ``t >= t0``."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 4)
        i, j, a, t = cells.T
        return self.rates[:, i, j, a, t - self.t0]


def extend_params(params: DptParams, horizon) -> DptParams:
    """Append ``horizon`` steps using the chains' conditional means."""
    core = [params.core]
    last = params.core[-1]
    for _ in range(horizon):
        last = last @ params.transition
        core.append(last[None])
    delta_t = np.concatenate([params.delta_t, np.full(horizon, params.delta_t[-1])])
    return replace(params, core=np.concatenate(core), delta_t=delta_t)


def dpt_forecast(samples, horizon) -> DptForecast:
    """Forecast rates for the ``horizon`` steps after the fitted range.

    Each posterior sample propagates its core by expected transitions and
    holds ``delta_t`` at its last value (the mean of the gamma chain).
    """
    if horizon < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    samples = list(samples)
    if not samples:
        raise InvalidArgumentError("need at least one parameter sample")
    t0 = samples[0].T
    out = []
    for p in samples:
        ext = extend_params(p, horizon)
        out.append(rate_tensor(ext)[..., t0:])
    return DptForecast(np.stack(out), t0)

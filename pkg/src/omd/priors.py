"""Priors over row-stochastic matrices.

Three families are provided:

* ``smd`` -- standard matrix Dirichlet, rows are independent Dirichlet draws.
* ``omd`` -- ordered matrix Dirichlet, a stick-breaking construction whose
  Beta breaks are sorted within each column so that every row is
  stochastically dominated by the next one.
* ``bmd`` -- banded matrix Dirichlet, square matrices whose rows put Dirichlet
  mass only on the ``2b + 1`` entries around the diagonal.

All samplers take an explicit :class:`numpy.random.Generator` and draw in a
fixed order so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from scipy.special import betaln

from .errors import InvalidArgumentError, InvalidParameterError

#: Lower bound on the remaining stick mass; keeps log-densities finite.
STICK_FLOOR = 1e-300

FAMILIES = ("omd", "smd", "bmd")


def as_concentration(alpha) -> np.ndarray:
    """Validate a concentration vector and return it as a float array."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2:
        raise InvalidParameterError("concentration must be a vector of length >= 2")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise InvalidParameterError(f"concentration entries must be positive, got {alpha}")
    return alpha


def stick_concentrations(alpha):
    """Beta parameters of the stick breaks for a Dirichlet(alpha) vector.

    Break ``a`` (0-based, ``a < A - 1``) is ``Beta(alpha[a], sum(alpha[a+1:]))``.
    """
    alpha = as_concentration(alpha)
    # correctly rounded tails, so the value does not depend on summation order
    tail = np.array([math.fsum(alpha[a + 1:]) for a in range(alpha.size - 1)])
    return alpha[:-1].copy(), tail


def break_sticks(betas, return_remaining=False):
    """Turn a ``K x (A-1)`` array of breaks into a ``K x A`` stochastic matrix.

    Entry ``a`` of a row takes the fraction ``betas[:, a]`` of the mass that is
    left after the first ``a`` entries; the last entry is the residual.
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    K, n = betas.shape
    phi = np.empty((K, n + 1))
    remaining = np.empty((K, n + 1))
    used = np.zeros(K)
    for a in range(n):
        rest = np.maximum(1.0 - used, STICK_FLOOR)
        remaining[:, a] = rest
        phi[:, a] = rest * betas[:, a]
        used = used + phi[:, a]
    rest = np.maximum(1.0 - used, STICK_FLOOR)
    remaining[:, n] = rest
    phi[:, n] = rest
    if return_remaining:
        return phi, remaining
    return phi


def matrix_to_sticks(m) -> np.ndarray:
    """Inverse of :func:`break_sticks`.

    Breaks taken from an empty remainder are undefined; they are set to 1, the
    choice that keeps boundary matrices in the closure of the sorted support.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    # suffix sums stay accurate where 1 - cumsum would cancel
    rest = np.cumsum(m[:, ::-1], axis=1)[:, ::-1][:, :-1]
    empty = rest <= STICK_FLOOR
    return np.where(empty, 1.0, m[:, :-1] / np.where(empty, 1.0, rest))


def sort_sticks(raw):
    """Sort each column of ``raw`` in descending order.

    Returns the sorted array and the ``argsort`` indices, so that
    ``sorted[i, a] == raw[order[i, a], a]``. Ties keep their original order.
    """
    raw = np.asarray(raw, dtype=float)
    order = np.argsort(-raw, axis=0, kind="stable")
    return np.take_along_axis(raw, order, axis=0), order


def sample_stick_variates(K, alpha, rng) -> np.ndarray:
    """Draw the unsorted ``K x (A-1)`` Beta breaks, one column at a time."""
    a_par, b_par = stick_concentrations(alpha)
    raw = np.empty((K, a_par.size))
    for a in range(a_par.size):
        raw[:, a] = rng.beta(a_par[a], b_par[a], size=K)
    return raw


def sticks_sorted(sticks, tol=1e-9) -> bool:
    """True if every column of ``sticks`` is non-increasing down the rows.

    This is the support of the ordered construction. It is strictly smaller
    than the set of well-ordered matrices.
    """
    sticks = np.asarray(sticks, dtype=float)
    return bool(np.all(np.diff(sticks, axis=0) <= tol))


def omd_from_sticks(raw) -> np.ndarray:
    """Deterministic tail of the ordered construction: sort, then break."""
    return break_sticks(sort_sticks(raw)[0])


def sample_omd(K, alpha, rng):
    """Sample a ``K x A`` matrix from the ordered matrix Dirichlet.

    Returns
    -------
    phi : ndarray, shape (K, A)
        Well-ordered row-stochastic matrix.
    raw : ndarray, shape (K, A-1)
        The pre-sort Beta variates. Column 0 holds the first-column draws,
        column ``a`` the breaks for entry ``a``.
    """
    if K < 1:
        raise InvalidParameterError("K must be >= 1")
    raw = sample_stick_variates(K, alpha, rng)
    return omd_from_sticks(raw), raw


def sample_smd(K, alpha, rng) -> np.ndarray:
    """``K`` independent Dirichlet(alpha) rows."""
    if K < 1:
        raise InvalidParameterError("K must be >= 1")
    alpha = as_concentration(alpha)
    return rng.dirichlet(alpha, size=K)


@dataclass(frozen=True)
class BandSpec:
    bandwidth: int
    height: int

    def __post_init__(self):
        if not 1 <= self.bandwidth < self.height:
            raise InvalidParameterError(
                f"bandwidth must satisfy 1 <= b < K, got b={self.bandwidth}, K={self.height}"
            )

    def columns(self, k) -> np.ndarray:
        """In-band column indices of row ``k``."""
        lo = max(0, k - self.bandwidth)
        hi = min(self.height, k + self.bandwidth + 1)
        return np.arange(lo, hi)

    def mask(self) -> np.ndarray:
        idx = np.arange(self.height)
        return np.abs(idx[:, None] - idx[None, :]) <= self.bandwidth


def band_concentrations(spec: BandSpec, alpha3=(1.0, 1.0, 1.0), offset_alpha=None):
    """Per-row Dirichlet concentrations over the in-band slots.

    ``alpha3`` is ``(escalating, de-escalating, steady)``, i.e. the weights of
    columns ``k+1``, ``k-1`` and ``k``. It is only used for ``b == 1``; wider
    bands use ``offset_alpha`` (length ``2b + 1``, offsets ``-b..b``) or a
    symmetric Dirichlet with the steady weight. Edge rows keep the subset of
    slots that exist.
    """
    alpha3 = np.asarray(alpha3, dtype=float)
    if alpha3.shape != (3,) or np.any(alpha3 <= 0):
        raise InvalidParameterError("alpha3 must be three positive reals")
    b = spec.bandwidth
    if offset_alpha is None:
        if b == 1:
            offset_alpha = np.array([alpha3[1], alpha3[2], alpha3[0]])
        else:
            offset_alpha = np.full(2 * b + 1, alpha3[2])
    offset_alpha = np.asarray(offset_alpha, dtype=float)
    if offset_alpha.shape != (2 * b + 1,) or np.any(offset_alpha <= 0):
        raise InvalidParameterError("offset_alpha must hold 2b+1 positive reals")
    out = []
    for k in range(spec.height):
        cols = spec.columns(k)
        out.append(offset_alpha[cols - k + b])
    return out


def sample_bmd(spec: BandSpec, alpha3, rng, offset_alpha=None) -> np.ndarray:
    """Sample a banded ``K x K`` stochastic matrix; out-of-band entries are exactly 0."""
    conc = band_concentrations(spec, alpha3, offset_alpha)
    K = spec.height
    out = np.zeros((K, K))
    for k in range(K):
        out[k, spec.columns(k)] = rng.dirichlet(conc[k])
    return out


def row_cdf(m) -> np.ndarray:
    """Cumulative sums along each row."""
    return np.cumsum(np.asarray(m, dtype=float), axis=1)


def check_well_ordered(m, tol=1e-12) -> bool:
    """True if every row's CDF is >= the CDF of every later row (up to ``tol``)."""
    cdf = row_cdf(m)
    if cdf.shape[0] < 2:
        return True
    # max over all later rows, per column
    later_max = np.maximum.accumulate(cdf[::-1], axis=0)[::-1]
    return bool(np.all(cdf[:-1] >= later_max[1:] - tol))


def is_stochastic(m, tol=1e-10) -> bool:
    m = np.asarray(m, dtype=float)
    return (
        m.ndim == 2
        and bool(np.all(m >= 0) and np.all(m <= 1))
        and bool(np.all(np.abs(m.sum(axis=1) - 1.0) <= tol))
    )


@dataclass
class PriorSummary:
    column_mean: np.ndarray
    mean_cdf: np.ndarray
    mean_matrix: np.ndarray
    n_samples: int


def prior_summary(samples) -> PriorSummary:
    """Average a list of equally-shaped stochastic matrices.

    ``column_mean[a]`` is the row-average of column ``a``, averaged over samples.
    """
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise InvalidArgumentError("prior_summary needs at least one sample")
    shape = samples[0].shape
    if any(s.shape != shape for s in samples):
        raise InvalidArgumentError("samples must share one shape")
    stack = np.stack(samples)
    mean = stack.mean(axis=0)
    return PriorSummary(
        column_mean=mean.mean(axis=0),
        mean_cdf=row_cdf(stack).mean(axis=0),
        mean_matrix=mean,
        n_samples=len(samples),
    )


def beta_log_density(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - betaln(a, b)


@dataclass(frozen=True)
class PriorConfig:
    """Prior families and concentrations for an emission/transition pair.

    ``None`` concentrations default to all-ones vectors of the right length.
    """

    emission_family: str = "omd"
    transition_family: str = "omd"
    emission_alpha: tuple | None = None
    transition_alpha: tuple | None = None
    band_alpha: tuple = (1.0, 1.0, 1.0)
    bandwidth: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.emission_family not in ("omd", "smd"):
            raise InvalidParameterError(f"unknown emission family {self.emission_family!r}")
        if self.transition_family not in FAMILIES:
            raise InvalidParameterError(f"unknown transition family {self.transition_family!r}")

    @property
    def name(self) -> str:
        return f"{self.emission_family}+{self.transition_family}".upper()

    @classmethod
    def from_name(cls, name: str, **kwargs) -> "PriorConfig":
        """Parse ``"omd+omd"``, ``"SMD+BMD"`` and friends (emission first)."""
        try:
            emission, transition = name.lower().split("+")
        except ValueError:
            raise InvalidParameterError(f"prior config must look like 'omd+omd', got {name!r}") from None
        return cls(emission_family=emission, transition_family=transition, **kwargs)

    def emission_concentration(self, A) -> np.ndarray:
        if self.emission_alpha is None:
            return np.ones(A)
        alpha = as_concentration(self.emission_alpha)
        if alpha.size != A:
            raise InvalidParameterError(f"emission_alpha has length {alpha.size}, expected {A}")
        return alpha

    def transition_concentration(self, K) -> np.ndarray:
        if self.transition_alpha is None:
            return np.ones(K)
        alpha = as_concentration(self.transition_alpha)
        if alpha.size != K:
            raise InvalidParameterError(f"transition_alpha has length {alpha.size}, expected {K}")
        return alpha

    def sample_emission(self, K, A, rng):
        alpha = self.emission_concentration(A)
        if self.emission_family == "omd":
            return sample_omd(K, alpha, rng)[0]
        return break_sticks(sample_stick_variates(K, alpha, rng))

    def sample_transition(self, K, rng):
        if K == 1:
            return np.ones((1, 1))
        if self.transition_family == "bmd":
            return sample_bmd(BandSpec(self.bandwidth, K), self.band_alpha, rng)
        alpha = self.transition_concentration(K)
        if self.transition_family == "omd":
            return sample_omd(K, alpha, rng)[0]
        return break_sticks(sample_stick_variates(K, alpha, rng))

    def emission_log_prior(self, phi) -> float:
        return matrix_log_prior(phi, self.emission_family, self.emission_concentration(np.shape(phi)[1]))

    def transition_log_prior(self, pi) -> float:
        K = np.shape(pi)[0]
        if K == 1:
            return 0.0 if np.asarray(pi).item() == 1.0 else -np.inf
        if self.transition_family == "bmd":
            return matrix_log_prior(
                pi, "bmd", band=BandSpec(self.bandwidth, K), alpha3=self.band_alpha
            )
        return matrix_log_prior(pi, self.transition_family, self.transition_concentration(K))


def matrix_log_prior(m, family, alpha=None, band=None, alpha3=(1.0, 1.0, 1.0)) -> float:
    """Log prior of a matrix expressed in stick coordinates.

    This is the sum of Beta log-densities of the breaks that rebuild ``m``:
    the pre-sort variates for ``omd`` (the sort only permutes them), the
    Dirichlet stick equivalents for ``smd`` and, for ``bmd``, for the in-band
    slots of each row. Returns ``-inf`` if ``m`` violates the family support.
    """
    m = np.asarray(m, dtype=float)
    if family in ("omd", "smd"):
        sticks = matrix_to_sticks(m)
        if family == "omd" and not sticks_sorted(sticks):
            return -np.inf
        a_par, b_par = stick_concentrations(alpha)
        return float(np.sum(beta_log_density(sticks, a_par, b_par)))
    if family == "bmd":
        if np.any(m[~band.mask()] != 0):
            return -np.inf
        total = 0.0
        for k, conc in enumerate(band_concentrations(band, alpha3)):
            row = m[k, band.columns(k)][None, :]
            a_par, b_par = stick_concentrations(conc)
            total += float(np.sum(beta_log_density(matrix_to_sticks(row), a_par, b_par)))
        return total
    raise InvalidParameterError(f"unknown family {family!r}")

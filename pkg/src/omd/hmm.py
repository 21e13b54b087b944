"""Hidden Markov model with categorical emissions over ordinal actions.

Observations are stored 0-based in an ``(N, T)`` integer array with
:data:`MISSING` marking held-out or unobserved entries. Missing entries are
marginalised out (their emission factor is 1) everywhere.

Likelihood and marginal recursions run in log space with a per-step max
shift; the sufficient statistics used for gradients use normalised messages.
Everything is vectorised over sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError
from .priors import is_stochastic

MISSING = -1


@dataclass(frozen=True)
class HmmParams:
    """Initial distribution, ``K x K`` transition and ``K x A`` emission matrices."""

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        emission = np.asarray(self.emission, dtype=float)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)
        K = transition.shape[0]
        if transition.shape != (K, K) or emission.shape[0] != K or initial.shape != (K,):
            raise InvalidParameterError("inconsistent HMM parameter shapes")
        if abs(initial.sum() - 1.0) > 1e-10 or np.any(initial < 0):
            raise InvalidParameterError("initial distribution must sum to 1")
        if not (is_stochastic(transition) and is_stochastic(emission)):
            raise InvalidParameterError("transition and emission must be row-stochastic")

    @classmethod
    def from_matrices(cls, transition, emission, initial=None) -> "HmmParams":
        """Build parameters with a uniform initial distribution unless one is given."""
        K = np.shape(transition)[0]
        if initial is None:
            initial = np.full(K, 1.0 / K)
        return cls(initial, transition, emission)

    @property
    def K(self) -> int:
        return self.transition.shape[0]

    @property
    def A(self) -> int:
        return self.emission.shape[1]

    def permuted(self, perm) -> "HmmParams":
        """Relabel states so that new state ``i`` is old state ``perm[i]``."""
        perm = np.asarray(perm)
        return HmmParams(
            self.initial[perm],
            self.transition[np.ix_(perm, perm)],
            self.emission[perm],
        )


@dataclass
class SequenceDataset:
    """``N`` equal-length action sequences; entries in ``[0, A)`` or :data:`MISSING`."""

    obs: np.ndarray
    n_actions: int

    def __post_init__(self):
        self.obs = np.atleast_2d(np.asarray(self.obs, dtype=np.int64))
        bad = (self.obs != MISSING) & ((self.obs < 0) | (self.obs >= self.n_actions))
        if np.any(bad):
            raise InvalidArgumentError("observations must lie in [0, A) or be MISSING")

    @property
    def N(self) -> int:
        return self.obs.shape[0]

    @property
    def T(self) -> int:
        return self.obs.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return self.obs == MISSING


def hmm_generate(params: HmmParams, N, T, rng):
    """Sample ``N`` sequences of length ``T``.

    Returns the dataset and the ``(N, T)`` array of latent states.
    """
    K, A = params.K, params.A
    states = np.empty((N, T), dtype=np.int64)
    obs = np.empty((N, T), dtype=np.int64)
    trans_cdf = np.cumsum(params.transition, axis=1)
    emit_cdf = np.cumsum(params.emission, axis=1)
    states[:, 0] = _inverse_cdf(np.cumsum(params.initial)[None, :], rng.random(N))
    for t in range(1, T):
        states[:, t] = _inverse_cdf(trans_cdf[states[:, t - 1]], rng.random(N))
    for t in range(T):
        obs[:, t] = _inverse_cdf(emit_cdf[states[:, t]], rng.random(N))
    np.clip(states, 0, K - 1, out=states)
    np.clip(obs, 0, A - 1, out=obs)
    return SequenceDataset(obs, A), states


def _inverse_cdf(cdf, u):
    cdf = np.broadcast_to(cdf, (u.size, cdf.shape[-1]))
    return np.minimum((u[:, None] >= cdf).sum(axis=1), cdf.shape[1] - 1)


def _as_obs(data):
    if isinstance(data, SequenceDataset):
        return data.obs
    return np.atleast_2d(np.asarray(data, dtype=np.int64))


def log_emission_terms(emission, obs) -> np.ndarray:
    """``(N, T, K)`` array of ``log phi[k, y_nt]``, 0 where missing."""
    with np.errstate(divide="ignore"):
        log_phi = np.log(emission)
    out = log_phi.T[np.where(obs == MISSING, 0, obs)]
    out[obs == MISSING] = 0.0
    return out


def _shift(x):
    m = x.max(axis=-1, keepdims=True)
    return np.where(np.isfinite(m), m, 0.0)


def forward(params: HmmParams, obs):
    """Log forward messages ``log p(y_{1:t}, z_t = k)``; shape ``(N, T, K)``."""
    obs = _as_obs(obs)
    N, T = obs.shape
    log_em = log_emission_terms(params.emission, obs)
    with np.errstate(divide="ignore"):
        log_init = np.log(params.initial)
    alpha = np.empty((N, T, params.K))
    alpha[:, 0] = log_init + log_em[:, 0]
    for t in range(1, T):
        prev = alpha[:, t - 1]
        m = _shift(prev)
        with np.errstate(divide="ignore"):
            alpha[:, t] = m + np.log(np.exp(prev - m) @ params.transition) + log_em[:, t]
    return alpha, log_em


def backward(params: HmmParams, obs, log_em=None):
    """Log backward messages ``log p(y_{t+1:T} | z_t = k)``; shape ``(N, T, K)``."""
    obs = _as_obs(obs)
    N, T = obs.shape
    if log_em is None:
        log_em = log_emission_terms(params.emission, obs)
    beta = np.zeros((N, T, params.K))
    for t in range(T - 2, -1, -1):
        nxt = log_em[:, t + 1] + beta[:, t + 1]
        m = _shift(nxt)
        with np.errstate(divide="ignore"):
            beta[:, t] = m + np.log(np.exp(nxt - m) @ params.transition.T)
    return beta


def _logsumexp(x, axis=-1):
    m = _shift(x) if axis == -1 else np.max(x, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def sequence_log_likelihoods(params: HmmParams, data) -> np.ndarray:
    """Per-sequence ``log p(y_n | params)``."""
    alpha, _ = forward(params, data)
    return _logsumexp(alpha[:, -1])


def hmm_log_likelihood(params: HmmParams, data) -> float:
    """Exact log marginal likelihood of all sequences, states summed out."""
    return float(np.sum(sequence_log_likelihoods(params, data)))


def smoothed_marginals(params: HmmParams, data):
    """Posterior state marginals ``p(z_t | y)`` for every sequence, ``(N, T, K)``.

    Also returns the per-sequence log likelihoods.
    """
    obs = _as_obs(data)
    alpha, log_em = forward(params, obs)
    beta = backward(params, obs, log_em)
    log_lik = _logsumexp(alpha[:, -1])
    gamma = np.exp(alpha + beta - log_lik[:, None, None])
    gamma /= gamma.sum(axis=-1, keepdims=True)
    return gamma, log_lik


def hmm_posterior_states(params: HmmParams, seq) -> np.ndarray:
    """Smoothed ``T x K`` state marginals of a single sequence."""
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1:
        raise InvalidArgumentError("hmm_posterior_states takes one sequence")
    return smoothed_marginals(params, seq[None, :])[0][0]


def expected_counts(params: HmmParams, obs, onehot=None):
    """Sufficient statistics under the posterior over state paths.

    Returns ``(log_lik, emit_counts, trans_counts)`` where ``emit_counts[k, a]``
    is the expected number of times state ``k`` emitted observed action ``a``
    and ``trans_counts[k, j]`` the expected number of ``k -> j`` transitions,
    both summed over sequences. These are the gradients of the log likelihood
    with respect to ``log phi`` and ``log pi``.

    Uses per-step normalised messages in probability space, which is several
    times faster than the log-space recursion and is what the samplers call.
    A ``-inf`` log likelihood is returned if every state underflows.
    """
    obs = _as_obs(obs)
    N, T = obs.shape
    K, A = params.K, params.A
    pi = params.transition
    em = params.emission.T[np.where(obs == MISSING, 0, obs)]
    em[obs == MISSING] = 1.0
    alpha = np.empty((N, T, K))
    norm = np.empty((N, T))
    a = params.initial * em[:, 0]
    norm[:, 0] = a.sum(axis=1)
    alpha[:, 0] = a / norm[:, 0, None]
    for t in range(1, T):
        a = (alpha[:, t - 1] @ pi) * em[:, t]
        norm[:, t] = a.sum(axis=1)
        alpha[:, t] = a / norm[:, t, None]
    if np.any(norm <= 0) or not np.all(np.isfinite(norm)):
        return -np.inf, np.zeros((K, A)), np.zeros((K, K))
    beta = np.empty((N, T, K))
    beta[:, -1] = 1.0
    weighted = np.empty((N, T, K))
    for t in range(T - 1, 0, -1):
        weighted[:, t] = em[:, t] * beta[:, t] / norm[:, t, None]
        beta[:, t - 1] = weighted[:, t] @ pi.T
    gamma = alpha * beta
    if onehot is None:
        onehot = np.zeros((N * T, A))
        flat = obs.ravel()
        seen = flat != MISSING
        onehot[np.nonzero(seen)[0], flat[seen]] = 1.0
    emit = gamma.reshape(N * T, K).T @ onehot
    trans = pi * (alpha[:, :-1].reshape(-1, K).T @ weighted[:, 1:].reshape(-1, K))
    return float(np.log(norm).sum()), emit, trans


@dataclass
class Forecast:
    """Predictive quantities for ``horizon`` steps past the observed prefix.

    Arrays have a leading sequence axis when produced by
    :func:`forecast_batch` and none when produced by :func:`hmm_forecast`.
    Expected indices are 0-based.
    """

    action_probs: np.ndarray
    state_probs: np.ndarray
    expected_action: np.ndarray
    expected_state: np.ndarray


def filtered_last(params: HmmParams, obs) -> np.ndarray:
    """``p(z_T | y_{1:T})`` for each sequence."""
    alpha, _ = forward(params, obs)
    last = alpha[:, -1]
    p = np.exp(last - _shift(last))
    return p / p.sum(axis=-1, keepdims=True)


def forecast_batch(params: HmmParams, obs, horizon) -> Forecast:
    """Propagate the filtered state distribution ``horizon`` steps ahead."""
    if horizon < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    p = filtered_last(params, obs)
    states = []
    for _ in range(horizon):
        p = p @ params.transition
        states.append(p)
    state_probs = np.stack(states, axis=1)
    action_probs = state_probs @ params.emission
    return Forecast(
        action_probs=action_probs,
        state_probs=state_probs,
        expected_action=action_probs @ np.arange(params.A),
        expected_state=state_probs @ np.arange(params.K),
    )


def hmm_forecast(params: HmmParams, seq, horizon) -> Forecast:
    """Forecast a single sequence prefix; see :func:`forecast_batch`."""
    seq = np.asarray(seq, dtype=np.int64)
    out = forecast_batch(params, seq[None, :], horizon)
    return Forecast(*(x[0] for x in (out.action_probs, out.state_probs,
                                      out.expected_action, out.expected_state)))


@dataclass
class Imputation:
    """Predictive distributions at the missing slots of one sequence.

    ``positions`` are the time indices of the missing entries; the other
    arrays are aligned with them.
    """

    positions: np.ndarray
    action_probs: np.ndarray
    expected_action: np.ndarray
    expected_state: np.ndarray


def impute_batch(params: HmmParams, obs):
    """``p(y_t | observed entries)`` and ``E[z_t | observed]`` at every slot, ``(N, T, .)``."""
    gamma, _ = smoothed_marginals(params, obs)
    action_probs = gamma @ params.emission
    return action_probs, gamma


def hmm_impute(params: HmmParams, seq) -> Imputation:
    seq = np.asarray(seq, dtype=np.int64)
    positions = np.nonzero(seq == MISSING)[0]
    if positions.size == 0:
        raise InvalidArgumentError("sequence has no MISSING entries to impute")
    action_probs, gamma = impute_batch(params, seq[None, :])
    probs = action_probs[0, positions]
    return Imputation(
        positions=positions,
        action_probs=probs,
        expected_action=probs @ np.arange(params.A),
        expected_state=gamma[0, positions] @ np.arange(params.K),
    )

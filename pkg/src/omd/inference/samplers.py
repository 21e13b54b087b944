"""MCMC over unconstrained parameter vectors.

Two algorithms are available:

``adaptive-rwm``
    Gaussian random-walk Metropolis whose proposal covariance is the running
    empirical covariance of the chain, rescaled by a Robbins-Monro factor that
    steers the acceptance rate towards ``target_accept`` (0.234 by default).
    Adaptation happens every ``adapt_interval`` proposals during burn-in only
    and is frozen afterwards.

``hmc``
    Hamiltonian Monte Carlo with a diagonal mass matrix and dual-averaging step
    size, both adapted during burn-in. Gradients come from the model when it
    provides ``log_target_and_grad`` and from central differences otherwise.

Both return a :class:`ChainTrace` of constrained samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError, SamplerError

logger = logging.getLogger(__name__)

ALGORITHMS = ("adaptive-rwm", "hmc")


@dataclass
class SamplerConfig:
    """Sampler settings.

    ``n_samples`` and ``burn_in`` count kept draws; with ``thin > 1`` every
    kept draw is separated by ``thin`` transitions (burn-in included).
    """

    algorithm: str = "adaptive-rwm"
    n_samples: int = 1000
    burn_in: int = 200
    thin: int = 1
    target_accept: float | None = None
    adapt_interval: int = 50
    initial_scale: float = 0.1
    max_halvings: int = 10
    step_size: float | None = None
    n_leapfrog: int = 16
    max_energy_error: float = 1000.0
    n_starts: int = 1
    pilot_iters: int = 100

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"algorithm must be one of {ALGORITHMS}")
        if self.n_samples < 1 or self.burn_in < 0 or self.thin < 1:
            raise InvalidArgumentError("need n_samples >= 1, burn_in >= 0 and thin >= 1")
        if self.n_starts < 1 or self.pilot_iters < 1:
            raise InvalidArgumentError("need n_starts >= 1 and pilot_iters >= 1")

    @property
    def accept_target(self) -> float:
        if self.target_accept is not None:
            return self.target_accept
        return 0.234 if self.algorithm == "adaptive-rwm" else 0.8


@dataclass
class ChainTrace:
    """Posterior draws of one chain.

    ``samples`` holds one dict of named constrained blocks per kept draw,
    ``log_joint_trace`` the model log joint (log target minus the transform
    Jacobian) at each of them, and ``unconstrained`` the raw vectors.
    """

    samples: list
    burn_in: int
    seed: int
    acceptance_rate: float
    log_joint_trace: list
    algorithm: str = "adaptive-rwm"
    thin: int = 1
    unconstrained: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def block_names(self):
        return list(self.samples[0]) if self.samples else []

    def stack(self, name) -> np.ndarray:
        if not self.samples:
            raise InvalidArgumentError("empty trace")
        if name not in self.samples[0]:
            raise InvalidArgumentError(f"unknown block {name!r}; have {self.block_names}")
        return np.stack([s[name] for s in self.samples])


def posterior_mean(trace: ChainTrace, name) -> np.ndarray:
    """Arithmetic mean of a constrained block over all kept draws."""
    return trace.stack(name).mean(axis=0)


def _run(config, model, z, rng):
    if config.algorithm == "adaptive-rwm":
        return _adaptive_rwm(config, model, z, rng)
    return _hmc(config, model, z, rng)


def _multi_start(config: SamplerConfig, model, rng):
    """Best end point of ``n_starts`` short pilot runs from prior draws.

    Pilots are part of burn-in: they only choose where the chain starts, so
    the kept draws are still a Markov chain targeting the posterior.
    """
    pilot = SamplerConfig(algorithm=config.algorithm, n_samples=1, burn_in=config.pilot_iters,
                          target_accept=config.target_accept, adapt_interval=config.adapt_interval,
                          initial_scale=config.initial_scale, max_halvings=config.max_halvings,
                          step_size=config.step_size, n_leapfrog=config.n_leapfrog,
                          max_energy_error=config.max_energy_error)
    best, best_logp = None, -np.inf
    for k in range(config.n_starts):
        try:
            (z, logp), = _run(pilot, model, model.initial_point(rng), rng)[0]
        except SamplerError as err:
            logger.debug("pilot %d failed: %s", k, err)
            continue
        if logp > best_logp:
            best, best_logp = z, logp
    if best is None:
        raise SamplerError(f"all {config.n_starts} pilot runs failed")
    return best


def run_chain(config: SamplerConfig, model, seed=0, init=None) -> ChainTrace:
    """Run one chain; the whole run is a deterministic function of ``seed``.

    With ``n_starts > 1`` and no ``init`` the chain starts from the best of
    several short pilot runs (see :func:`_multi_start`).
    """
    rng = np.random.default_rng(seed)
    if init is not None:
        z = np.array(init, dtype=float)
    elif config.n_starts > 1:
        z = _multi_start(config, model, rng)
    else:
        z = model.initial_point(rng)
    draws, rate = _run(config, model, z, rng)
    samples, log_joint = [], []
    for x, lt in draws:
        samples.append(model.record(x))
        log_joint.append(lt - model.log_jacobian(x))
    return ChainTrace(
        samples=samples,
        burn_in=config.burn_in,
        seed=int(seed),
        acceptance_rate=float(rate),
        log_joint_trace=[float(v) for v in log_joint],
        algorithm=config.algorithm,
        thin=config.thin,
        unconstrained=np.asarray([x for x, _ in draws]),
        meta={"n_samples": config.n_samples},
    )


def _finite_start(model, z, rng, tries=100):
    value = model.log_target(z)
    n = 0
    while not np.isfinite(value):
        if n >= tries:
            raise SamplerError("could not find an initial point with finite log target")
        z = model.initial_point(rng)
        value = model.log_target(z)
        n += 1
    return z, value


def _adaptive_rwm(config: SamplerConfig, model, z, rng):
    z, logp = _finite_start(model, z, rng)
    d = z.size
    target = config.accept_target
    log_scale = math.log(2.38 / math.sqrt(d))
    chol = config.initial_scale * np.eye(d)
    n_burn = config.burn_in * config.thin
    n_total = n_burn + config.n_samples * config.thin
    # running moments of burn-in states for the covariance estimate
    mean = z.copy()
    m2 = np.zeros((d, d))
    n_seen = 1
    window_accepts = 0
    zero_windows = 0
    n_windows = 0
    accepted_after = 0
    kept = []
    for it in range(n_total):
        prop = z + math.exp(log_scale) * (chol @ rng.standard_normal(d))
        logp_prop = model.log_target(prop)
        accept = np.isfinite(logp_prop) and math.log(rng.random()) < logp_prop - logp
        if accept:
            z, logp = prop, logp_prop
        if it < n_burn:
            window_accepts += accept
            n_seen += 1
            delta = z - mean
            mean += delta / n_seen
            m2 += np.outer(delta, z - mean)
            if (it + 1) % config.adapt_interval == 0:
                n_windows += 1
                rate = window_accepts / config.adapt_interval
                if window_accepts == 0:
                    zero_windows += 1
                    if zero_windows > config.max_halvings:
                        raise SamplerError(
                            f"no proposal accepted in {zero_windows} consecutive adaptation "
                            f"windows of {config.adapt_interval}; proposal scale "
                            f"{math.exp(log_scale):.3g}"
                        )
                    log_scale -= math.log(2.0)
                else:
                    zero_windows = 0
                    log_scale += (rate - target) * 3.0 / math.sqrt(n_windows)
                if n_seen > 2 * d and n_seen > 2 * config.adapt_interval:
                    cov = m2 / (n_seen - 1)
                    cov += (1e-10 + 1e-6 * np.trace(cov) / d) * np.eye(d)
                    try:
                        chol = np.linalg.cholesky(cov)
                    except np.linalg.LinAlgError:
                        pass
                window_accepts = 0
        else:
            accepted_after += accept
            if (it - n_burn + 1) % config.thin == 0:
                kept.append((z.copy(), logp))
    rate = accepted_after / max(1, n_total - n_burn)
    logger.debug("adaptive-rwm finished, acceptance %.3f", rate)
    return kept, rate


def _grad_fn(model):
    if hasattr(model, "log_target_and_grad"):
        return model.log_target_and_grad

    def numeric(z, h=1e-6):
        value = model.log_target(z)
        grad = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h
            grad[i] = (model.log_target(z + e) - model.log_target(z - e)) / (2 * h)
        return value, grad

    return numeric


def _leapfrog(grad_fn, z, p, g, eps, inv_mass, n_steps):
    p = p + 0.5 * eps * g
    logp = -np.inf
    for step in range(n_steps):
        z = z + eps * inv_mass * p
        logp, g = grad_fn(z)
        if not np.isfinite(logp):
            return z, p, -np.inf, g
        if step < n_steps - 1:
            p = p + eps * g
    p = p + 0.5 * eps * g
    return z, p, logp, g


def _adaptation_windows(n_burn):
    """Stan-style schedule: a fast initial buffer, doubling slow windows, a final buffer."""
    if n_burn < 20:
        return []
    init = max(1, int(0.15 * n_burn))
    term = max(1, int(0.1 * n_burn))
    ends = []
    size = 25 if n_burn >= 150 else max(5, (n_burn - init - term) // 3)
    start = init
    stop = n_burn - term
    while start < stop:
        end = start + size
        if end + 2 * size > stop:
            end = stop
        ends.append(end)
        start = end
        size *= 2
    return ends


class _DualAveraging:
    def __init__(self, eps, target):
        self.mu = math.log(10 * eps)
        self.target = target
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.n = 0

    def update(self, accept_prob):
        self.n += 1
        eta = 1.0 / (self.n + 10)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(self.n) / 0.05 * self.h_bar
        weight = self.n ** -0.75
        self.log_eps_bar = weight * log_eps + (1 - weight) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _initial_step(grad_fn, z, logp, g, inv_mass, rng):
    eps = 0.1
    p = rng.standard_normal(z.size) / np.sqrt(inv_mass)
    h0 = logp - 0.5 * p @ (inv_mass * p)

    def log_ratio(e):
        _, p1, logp1, _ = _leapfrog(grad_fn, z, p, g, e, inv_mass, 1)
        if not np.isfinite(logp1):
            return -np.inf
        # a blown-up momentum during the step-size search just means "too large"
        with np.errstate(over="ignore", invalid="ignore"):
            r = logp1 - 0.5 * p1 @ (inv_mass * p1) - h0
        return r if np.isfinite(r) else -np.inf

    direction = 1 if log_ratio(eps) > math.log(0.5) else -1
    for _ in range(50):
        r = log_ratio(eps)
        if direction == 1 and not r > math.log(0.5):
            break
        if direction == -1 and r > math.log(0.5):
            break
        eps = eps * 2.0 if direction == 1 else eps / 2.0
    return eps


def _hmc(config: SamplerConfig, model, z, rng):
    grad_fn = _grad_fn(model)
    z, _ = _finite_start(model, z, rng)
    logp, g = grad_fn(z)
    d = z.size
    inv_mass = np.ones(d)
    eps = config.step_size or _initial_step(grad_fn, z, logp, g, inv_mass, rng)
    n_burn = config.burn_in * config.thin
    n_total = n_burn + config.n_samples * config.thin
    windows = _adaptation_windows(n_burn)
    window_start = int(0.15 * n_burn) if windows else n_burn
    dual = _DualAveraging(eps, config.accept_target)
    buffer = []
    accepted_after = 0
    kept = []
    for it in range(n_total):
        p0 = rng.standard_normal(d) / np.sqrt(inv_mass)
        h0 = -logp + 0.5 * p0 @ (inv_mass * p0)
        step = eps * rng.uniform(0.9, 1.1)
        z1, p1, logp1, g1 = _leapfrog(grad_fn, z, p0, g, step, inv_mass, config.n_leapfrog)
        energy_error = np.inf
        if np.isfinite(logp1):
            with np.errstate(over="ignore", invalid="ignore"):
                energy_error = -logp1 + 0.5 * p1 @ (inv_mass * p1) - h0
        if not np.isfinite(energy_error) or energy_error > config.max_energy_error:
            accept_prob = 0.0
        else:
            accept_prob = math.exp(-max(energy_error, 0.0))
        accept = rng.random() < accept_prob
        if accept:
            z, logp, g = z1, logp1, g1
        if it < n_burn:
            eps = dual.update(accept_prob)
            if windows and window_start <= it:
                buffer.append(z.copy())
            if windows and it + 1 == windows[0]:
                windows.pop(0)
                draws = np.asarray(buffer)
                n = draws.shape[0]
                var = draws.var(axis=0) if n > 1 else np.ones(d)
                inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                buffer = []
                window_start = it + 1
                eps = _initial_step(grad_fn, z, logp, g, inv_mass, rng)
                dual = _DualAveraging(eps, config.accept_target)
            if it + 1 == n_burn:
                eps = dual.final
        else:
            accepted_after += accept
            if (it - n_burn + 1) % config.thin == 0:
                kept.append((z.copy(), logp))
    rate = accepted_after / max(1, n_total - n_burn)
    logger.debug("hmc finished, step %.3g, acceptance %.3f", eps, rate)
    return kept, rate

"""Log targets over unconstrained parameter vectors.

Every model exposes the same small interface used by the samplers:

``dim``, ``layout``, ``initial_point(rng)``, ``log_target(z)``,
``log_target_and_grad(z)``, ``log_jacobian(z)`` and ``record(z)``, the last
returning the constrained parameter blocks stored in a trace.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import digamma, gammaln

from ..dpt import RATE_FLOOR, CountTensor, DptParams, core_action, dpt_log_joint
from ..errors import InvalidArgumentError
from ..hmm import MISSING, HmmParams, SequenceDataset, expected_counts, hmm_log_likelihood
from ..priors import PriorConfig
from .transforms import ParameterLayout, PositiveBlock, StickMatrix


def _stick_block(family, n_rows, n_cols, config: PriorConfig, which):
    if which == "emission":
        return StickMatrix(family, n_rows, n_cols, alpha=config.emission_concentration(n_cols))
    if n_cols == 1:
        return StickMatrix("smd", 1, 1)
    if family == "bmd":
        return StickMatrix("bmd", n_rows, n_cols, bandwidth=config.bandwidth, alpha3=config.band_alpha)
    return StickMatrix(family, n_rows, n_cols, alpha=config.transition_concentration(n_cols))


def _safe_ratio(num, den):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


class GaussianTarget:
    """Independent normal target; used to check sampler plumbing."""

    def __init__(self, dim, mean=0.0, scale=1.0):
        self.dim = dim
        self.mean = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,)).copy()
        self.layout = ParameterLayout([("x", (dim,), "identity")])

    def initial_point(self, rng):
        return self.mean + self.scale * rng.standard_normal(self.dim)

    def log_target(self, z):
        r = (z - self.mean) / self.scale
        return float(-0.5 * r @ r)

    def log_target_and_grad(self, z):
        r = (z - self.mean) / self.scale
        return float(-0.5 * r @ r), -r / self.scale

    def log_jacobian(self, z):
        return 0.0

    def record(self, z):
        return {"x": np.array(z, dtype=float)}


class HmmModel:
    """HMM with stick-parameterised emission and transition matrices.

    Hidden states are summed out with the forward algorithm; the initial
    state distribution is fixed (uniform unless given).
    """

    def __init__(self, data: SequenceDataset, K, config: PriorConfig, initial=None):
        self.data = data
        self.K = K
        self.A = data.n_actions
        self.config = config
        self.initial = np.full(K, 1.0 / K) if initial is None else np.asarray(initial, float)
        self.emission_block = _stick_block(config.emission_family, K, self.A, config, "emission")
        self.transition_block = _stick_block(config.transition_family, K, K, config, "transition")
        self.layout = ParameterLayout([
            ("emission", (self.emission_block.size,), "logit"),
            ("transition", (self.transition_block.size,), "logit"),
        ])
        self.dim = self.layout.size
        obs = data.obs
        N, T = obs.shape
        flat = obs.ravel()
        seen = np.nonzero(flat != MISSING)[0]
        self._onehot = np.zeros((N * T, self.A))
        self._onehot[seen, flat[seen]] = 1.0

    def constrain(self, z) -> HmmParams:
        e = self.emission_block.matrix(self.layout.get(z, "emission"))
        t = self.transition_block.matrix(self.layout.get(z, "transition"))
        return HmmParams(self.initial, t, e)

    def unconstrain(self, params: HmmParams) -> np.ndarray:
        return self.layout.join({
            "emission": self.emission_block.unconstrain(params.emission),
            "transition": self.transition_block.unconstrain(params.transition),
        })

    def initial_point(self, rng):
        return self.layout.join({
            "emission": self.emission_block.sample(rng),
            "transition": self.transition_block.sample(rng),
        })

    def record(self, z):
        p = self.constrain(z)
        return {"emission": p.emission, "transition": p.transition}

    def log_joint(self, params: HmmParams) -> float:
        """Log likelihood plus matrix priors in stick coordinates."""
        return (
            hmm_log_likelihood(params, self.data)
            + self.config.emission_log_prior(params.emission)
            + self.config.transition_log_prior(params.transition)
        )

    def log_jacobian(self, z) -> float:
        return self.emission_block.log_jacobian(self.layout.get(z, "emission")) + \
            self.transition_block.log_jacobian(self.layout.get(z, "transition"))

    def log_target(self, z) -> float:
        return self.log_target_and_grad(z, need_grad=False)[0]

    def log_target_and_grad(self, z, need_grad=True):
        z = np.asarray(z, dtype=float)
        ze, zt = self.layout.get(z, "emission"), self.layout.get(z, "transition")
        phi, cache_e = self.emission_block.constrain(ze)
        pi, cache_t = self.transition_block.constrain(zt)
        params = HmmParams.__new__(HmmParams)
        object.__setattr__(params, "initial", self.initial)
        object.__setattr__(params, "transition", pi)
        object.__setattr__(params, "emission", phi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_lik, emit, trans = expected_counts(params, self.data.obs, self._onehot)
        prior_e, g_prior_e = self.emission_block.log_prior(ze)
        prior_t, g_prior_t = self.transition_block.log_prior(zt)
        value = log_lik + prior_e + prior_t
        if not np.isfinite(value):
            return -np.inf, np.zeros(self.dim)
        if not need_grad:
            return value, None
        with np.errstate(over="ignore", invalid="ignore"):
            g_e = self.emission_block.backprop(_safe_ratio(emit, phi), cache_e) + g_prior_e
            g_t = self.transition_block.backprop(_safe_ratio(trans, pi), cache_t) + g_prior_t
        grad = np.concatenate([g_e, g_t])
        if not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros(self.dim)
        return value, grad


def _selector(index, n_rows):
    """Sparse ``n_rows x n`` matrix summing entry values into ``index`` rows."""
    n = index.size
    return sp.csr_matrix((np.ones(n), (index, np.arange(n))), shape=(n_rows, n))


class _EntrySet:
    """Precomputed scatter matrices for a fixed list of tensor cells."""

    def __init__(self, cells, dims):
        V, _, A, T = dims
        self.i, self.j, self.a, self.t = np.asarray(cells, dtype=np.int64).reshape(-1, 4).T
        self.n = self.i.size
        self.sel_i = _selector(self.i, V)
        self.sel_j = _selector(self.j, V)
        self.sel_a = _selector(self.a, A)
        self.sel_t = _selector(self.t, T)
        self.sel_ta = _selector(self.t * A + self.a, T * A)


class DptModel:
    """Dynamic Poisson Tucker model over log/logit-transformed parameters.

    Parameters
    ----------
    data : CountTensor
        Counts; masked cells are excluded from the likelihood.
    C, K : int
        Number of communities and latent states.
    config : PriorConfig
    tau0, alpha0 : float
        Gamma chain and prior hyperparameters.
    separate_receiver : bool
        Use a second community matrix for the receiving country.
    """

    def __init__(self, data: CountTensor, C, K, config: PriorConfig, tau0=1.0, alpha0=1.0,
                 separate_receiver=False):
        self.data = data
        self.V, _, self.A, self.T = data.dims
        self.C, self.K = C, K
        self.config = config
        self.tau0, self.alpha0 = float(tau0), float(alpha0)
        self.separate_receiver = separate_receiver
        self.emission_block = _stick_block(config.emission_family, K, self.A, config, "emission")
        self.transition_block = _stick_block(config.transition_family, K, K, config, "transition")
        specs = [("psi", (self.V, C), "log")]
        if separate_receiver:
            specs.append(("psi_target", (self.V, C), "log"))
        specs += [
            ("core", (self.T, C, C, K), "log"),
            ("delta_a", (self.A,), "log"),
            ("delta_t", (self.T,), "log"),
            ("emission", (self.emission_block.size,), "logit"),
            ("transition", (self.transition_block.size,), "logit"),
        ]
        self.layout = ParameterLayout(specs)
        self.dim = self.layout.size
        coords, counts = data.observed_entries()
        self._obs = _EntrySet(coords, data.dims)
        self._counts = counts.astype(float)
        self._log_fact = float(np.sum(gammaln(self._counts + 1.0)))
        self._masked = _EntrySet(data.masked_cells(), data.dims)

    # -- transforms -------------------------------------------------------
    def constrain(self, z) -> DptParams:
        parts = self.layout.split(np.asarray(z, dtype=float))
        return DptParams(
            psi=PositiveBlock.constrain(parts["psi"]),
            core=PositiveBlock.constrain(parts["core"]),
            emission=self.emission_block.matrix(parts["emission"]),
            transition=self.transition_block.matrix(parts["transition"]),
            delta_a=PositiveBlock.constrain(parts["delta_a"]),
            delta_t=PositiveBlock.constrain(parts["delta_t"]),
            tau0=self.tau0,
            alpha0=self.alpha0,
            psi_target=PositiveBlock.constrain(parts["psi_target"]) if self.separate_receiver else None,
        )

    def unconstrain(self, params: DptParams) -> np.ndarray:
        parts = {
            "psi": PositiveBlock.unconstrain(params.psi),
            "core": PositiveBlock.unconstrain(params.core),
            "delta_a": PositiveBlock.unconstrain(params.delta_a),
            "delta_t": PositiveBlock.unconstrain(params.delta_t),
            "emission": self.emission_block.unconstrain(params.emission),
            "transition": self.transition_block.unconstrain(params.transition),
        }
        if self.separate_receiver:
            if params.psi_target is None:
                raise InvalidArgumentError("model expects a separate receiver matrix")
            parts["psi_target"] = PositiveBlock.unconstrain(params.psi_target)
        return self.layout.join(parts)

    def initial_point(self, rng):
        """Draw from the prior (gamma chains run forward), then transform."""
        a0, tau = self.alpha0, self.tau0
        phi_z = self.emission_block.sample(rng)
        pi_z = self.transition_block.sample(rng)
        pi = self.transition_block.matrix(pi_z)
        V, C, K, A, T = self.V, self.C, self.K, self.A, self.T
        parts = {"psi": rng.gamma(a0, 1.0 / a0, size=(V, C))}
        if self.separate_receiver:
            parts["psi_target"] = rng.gamma(a0, 1.0 / a0, size=(V, C))
        parts["delta_a"] = rng.gamma(a0, 1.0 / a0, size=A)
        delta_t = np.empty(T)
        delta_t[0] = rng.gamma(a0, 1.0 / a0)
        for t in range(1, T):
            delta_t[t] = rng.gamma(tau * delta_t[t - 1], 1.0 / tau)
        parts["delta_t"] = delta_t
        core = np.empty((T, C, C, K))
        core[0] = rng.gamma(a0, 1.0 / a0, size=(C, C, K))
        for t in range(1, T):
            core[t] = rng.gamma(tau * (core[t - 1] @ pi), 1.0 / tau)
        parts["core"] = core
        out = {k: np.log(np.maximum(v, 1e-200)) for k, v in parts.items()}
        out["emission"] = phi_z
        out["transition"] = pi_z
        return self.layout.join(out)

    def record(self, z):
        p = self.constrain(z)
        out = {
            "psi": p.psi, "core": p.core, "emission": p.emission, "transition": p.transition,
            "delta_a": p.delta_a, "delta_t": p.delta_t,
        }
        if self.separate_receiver:
            out["psi_target"] = p.psi_target
        return out

    def log_joint(self, params: DptParams) -> float:
        return dpt_log_joint(params, self.data, self.config)

    def log_jacobian(self, z) -> float:
        parts = self.layout.split(np.asarray(z, dtype=float))
        total = self.emission_block.log_jacobian(parts["emission"])
        total += self.transition_block.log_jacobian(parts["transition"])
        for name, block in self.layout.blocks.items():
            if block.transform == "log":
                total += float(np.sum(parts[name]))
        return total

    # -- density ----------------------------------------------------------
    def log_target(self, z) -> float:
        return self.log_target_and_grad(z, need_grad=False)[0]

    def log_target_and_grad(self, z, need_grad=True):
        z = np.asarray(z, dtype=float)
        parts = self.layout.split(z)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
            out = self._evaluate(parts, need_grad)
        value = out[0]
        if not np.isfinite(value):
            return -np.inf, np.zeros(self.dim)
        if not need_grad:
            return value, None
        grad = out[1]
        if not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros(self.dim)
        return value, grad

    def _evaluate(self, parts, need_grad):
        a0, tau = self.alpha0, self.tau0
        psi = PositiveBlock.constrain(parts["psi"])
        recv = PositiveBlock.constrain(parts["psi_target"]) if self.separate_receiver else psi
        core = PositiveBlock.constrain(parts["core"])
        d_a = PositiveBlock.constrain(parts["delta_a"])
        d_t = PositiveBlock.constrain(parts["delta_t"])
        phi, cache_e = self.emission_block.constrain(parts["emission"])
        pi, cache_t = self.transition_block.constrain(parts["transition"])
        B = core_action(core, phi)  # (T, A, C, C)

        # Poisson data term: observed nonzeros, minus total mass, plus masked mass.
        obs = self._obs
        left, right, Ms = psi[obs.i], recv[obs.j], B[obs.t, obs.a]
        Mr = np.einsum("ncd,nd->nc", Ms, right)
        q = np.einsum("nc,nc->n", left, Mr)
        scale = d_a[obs.a] * d_t[obs.t]
        mu = scale * q
        mu_f = np.maximum(mu, RATE_FLOOR)
        value = float(self._counts @ np.log(mu_f)) - self._log_fact

        send_sum, recv_sum = psi.sum(axis=0), recv.sum(axis=0)
        pair = np.outer(send_sum, recv_sum) - psi.T @ recv
        BP = np.einsum("tacd,cd->ta", B, pair)
        value -= float(d_t @ BP @ d_a)

        msk = self._masked
        if msk.n:
            m_left, m_right, m_Ms = psi[msk.i], recv[msk.j], B[msk.t, msk.a]
            m_Mr = np.einsum("ncd,nd->nc", m_Ms, m_right)
            m_q = np.einsum("nc,nc->n", m_left, m_Mr)
            m_scale = d_a[msk.a] * d_t[msk.t]
            value += float(np.sum(m_scale * m_q))

        # gamma priors
        value += _gamma_lp(psi, a0, a0)
        if self.separate_receiver:
            value += _gamma_lp(recv, a0, a0)
        value += _gamma_lp(d_a, a0, a0)
        value += _gamma_lp(d_t[:1], a0, a0)
        shape_dt = tau * d_t[:-1]
        value += _gamma_lp(d_t[1:], shape_dt, tau)
        value += _gamma_lp(core[0], a0, a0)
        shape_core = tau * (core[:-1] @ pi)
        value += _gamma_lp(core[1:], shape_core, tau)

        prior_e, g_prior_e = self.emission_block.log_prior(parts["emission"])
        prior_t, g_prior_t = self.transition_block.log_prior(parts["transition"])
        value += prior_e + prior_t
        # Jacobian of the log transforms
        for name, block in self.layout.blocks.items():
            if block.transform == "log":
                value += float(np.sum(parts[name]))
        if not need_grad or not np.isfinite(value):
            return value, None

        V, C, A, T = self.V, self.C, self.A, self.T
        # d/d(entry rate) weights: y/mu on observed nonzeros
        w = np.where(mu > RATE_FLOOR, self._counts / mu_f, 0.0)
        g_psi, g_recv, g_B, g_da, g_dt = self._entry_grads(obs, w, left, right, Ms, Mr, q, d_a, d_t)
        if msk.n:
            ones = np.ones(msk.n)
            gp, gr, gb, gda, gdt = self._entry_grads(msk, ones, m_left, m_right, m_Ms, m_Mr, m_q, d_a, d_t)
            g_psi += gp
            g_recv += gr
            g_B += gb
            g_da += gda
            g_dt += gdt
        # total-rate term (enters with a minus sign)
        g_dt -= BP @ d_a
        g_da -= d_t @ BP
        g_B -= np.einsum("t,a,cd->tacd", d_t, d_a, pair)
        Q = np.einsum("t,a,tacd->cd", d_t, d_a, B)
        g_psi -= (Q @ recv_sum)[None, :] - recv @ Q.T
        g_recv -= (Q.T @ send_sum)[None, :] - psi @ Q

        g_core = np.einsum("tacd,ka->tcdk", g_B, phi)
        g_phi = np.einsum("tacd,tcdk->ka", g_B, core)

        # gamma prior gradients w.r.t. constrained values
        g_psi += (a0 - 1) / psi - a0
        if self.separate_receiver:
            g_recv += (a0 - 1) / recv - a0
        g_da += (a0 - 1) / d_a - a0
        g_dt[0] += (a0 - 1) / d_t[0] - a0
        g_dt[1:] += (shape_dt - 1) / d_t[1:] - tau
        g_dt[:-1] += tau * (np.log(tau) - digamma(shape_dt) + np.log(d_t[1:]))
        g_core[0] += (a0 - 1) / core[0] - a0
        g_core[1:] += (shape_core - 1) / core[1:] - tau
        g_shape = np.log(tau) - digamma(shape_core) + np.log(core[1:])
        g_core[:-1] += tau * g_shape @ pi.T
        g_pi = tau * np.einsum("tcdk,tcdj->kj", core[:-1], g_shape)

        parts_grad = {
            "psi": g_psi * psi + 1.0 if self.separate_receiver else (g_psi + g_recv) * psi + 1.0,
            "core": g_core * core + 1.0,
            "delta_a": g_da * d_a + 1.0,
            "delta_t": g_dt * d_t + 1.0,
            "emission": self.emission_block.backprop(g_phi, cache_e) + g_prior_e,
            "transition": self.transition_block.backprop(g_pi, cache_t) + g_prior_t,
        }
        if self.separate_receiver:
            parts_grad["psi_target"] = g_recv * recv + 1.0
        return value, self.layout.join(parts_grad)

    def _entry_grads(self, es, w, left, right, Ms, Mr, q, d_a, d_t):
        """Gradient of ``sum_n w_n mu_n`` over a fixed set of cells."""
        T, A, C = self.T, self.A, self.C
        g_da = es.sel_a @ (w * d_t[es.t] * q)
        g_dt = es.sel_t @ (w * d_a[es.a] * q)
        ws = w * d_a[es.a] * d_t[es.t]
        g_psi = es.sel_i @ (ws[:, None] * Mr)
        Ml = np.einsum("ncd,nc->nd", Ms, left)
        g_recv = es.sel_j @ (ws[:, None] * Ml)
        outer = (ws[:, None, None] * left[:, :, None] * right[:, None, :]).reshape(es.n, C * C)
        g_B = (es.sel_ta @ outer).reshape(T, A, C, C)
        return np.asarray(g_psi), np.asarray(g_recv), g_B, np.asarray(g_da), np.asarray(g_dt)


def _gamma_lp(x, shape, rate) -> float:
    return float(np.sum(shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x))

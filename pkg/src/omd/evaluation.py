"""Synthetic ground truths, train/test splits, metrics and experiment sweeps.

An experiment generates data for every seed, splits it, fits one chain per
prior configuration and reduces each fit to a handful of named metrics. Jobs
are keyed by ``(seed, config)`` and every random stream is derived from that
key, so results do not depend on scheduling or on the number of workers.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from .dpt import RATE_FLOOR, CountTensor, DptParams, dpt_forecast, dpt_generate, rates_at, sample_dpt_params
from .errors import InvalidArgumentError, SamplerError
from .hmm import MISSING, HmmParams, SequenceDataset, forecast_batch, hmm_generate, impute_batch
from .inference import ChainTrace, DptModel, HmmModel, SamplerConfig, align_states, permute_states, run_chain
from .priors import PriorConfig

logger = logging.getLogger(__name__)

TRUTH_SHAPES = ("banded", "bonbon", "triangle")
SPLIT_MODES = ("imputation", "forecasting")


# ---------------------------------------------------------------- truths

@dataclass(frozen=True)
class TruthSpec:
    """Stylised ground-truth HMM.

    Parameters
    ----------
    shape : {"banded", "bonbon", "triangle"}
    K, A : int
        Number of states and ordinal actions.
    emission_width : float
        Standard deviation, in action units, of each state's emission bump.
    band_self : float
        Banded: diagonal weight; the rest is split between the neighbours.
    stickiness : float
        Bonbon: self-transition of the first and last state.
    decay : float
        Triangle: geometric decay of mass with distance above the diagonal.
    """

    shape: str = "banded"
    K: int = 10
    A: int = 10
    emission_width: float = 0.8
    band_self: float = 0.8
    stickiness: float = 0.9
    decay: float = 0.5

    def __post_init__(self):
        if self.shape not in TRUTH_SHAPES:
            raise InvalidArgumentError(f"shape must be one of {TRUTH_SHAPES}")
        if self.K < 2 or self.A < 2:
            raise InvalidArgumentError("need K >= 2 and A >= 2")
        if self.emission_width <= 0:
            raise InvalidArgumentError("emission_width must be positive")
        for name in ("band_self", "stickiness", "decay"):
            if not 0 < getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must lie in (0, 1)")


def emission_bumps(K, A, width=0.8) -> np.ndarray:
    """Row ``k`` is a discretised Gaussian over actions centred at ``(k + 1/2) A / K``.

    Centres are in 1-based action units, so the bumps tile the action axis.
    """
    actions = np.arange(1, A + 1)
    centres = (np.arange(K) + 0.5) * A / K
    logits = -0.5 * ((actions[None, :] - centres[:, None]) / width) ** 2
    rows = np.exp(logits - logits.max(axis=1, keepdims=True))
    return rows / rows.sum(axis=1, keepdims=True)


def _banded(K, self_weight):
    P = np.zeros((K, K))
    for k in range(K):
        nbrs = [j for j in (k - 1, k + 1) if 0 <= j < K]
        P[k, k] = self_weight
        P[k, nbrs] = (1.0 - self_weight) / len(nbrs)
    return P


def _bonbon(K, stickiness):
    P = np.full((K, K), 1.0 / K)
    for k in (0, K - 1):
        P[k] = (1.0 - stickiness) / (K - 1)
        P[k, k] = stickiness
    return P


def _triangle(K, decay):
    dist = np.arange(K)[None, :] - np.arange(K)[:, None]
    P = np.where(dist >= 0, decay ** np.maximum(dist, 0).astype(float), 0.0)
    return P / P.sum(axis=1, keepdims=True)


def make_truth(spec: TruthSpec, rng=None) -> HmmParams:
    """Transition of the requested shape with roughly diagonal emissions.

    The construction is deterministic; ``rng`` is accepted for interface
    symmetry with the other generators and is not used.
    """
    if spec.shape == "banded":
        P = _banded(spec.K, spec.band_self)
    elif spec.shape == "bonbon":
        P = _bonbon(spec.K, spec.stickiness)
    else:
        P = _triangle(spec.K, spec.decay)
    P = P / P.sum(axis=1, keepdims=True)
    return HmmParams.from_matrices(P, emission_bumps(spec.K, spec.A, spec.emission_width))


# ---------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    """Imputation masks ``mask_fraction`` of the entries; forecasting cuts time.

    Only the field belonging to ``mode`` may be set; the other one is ``None``.
    """

    mode: str = "forecasting"
    mask_fraction: float | None = None
    train_fraction: float | None = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise InvalidArgumentError(f"mode must be one of {SPLIT_MODES}")
        own, other = (("mask_fraction", "train_fraction") if self.mode == "imputation"
                      else ("train_fraction", "mask_fraction"))
        value = getattr(self, own)
        if value is None or not 0 < value < 1:
            raise InvalidArgumentError(f"{self.mode} split needs {own} in (0, 1)")
        if getattr(self, other) is not None:
            raise InvalidArgumentError(f"{other} must be unset for a {self.mode} split")

    @classmethod
    def imputation(cls, mask_fraction=0.3, seed=0) -> "SplitSpec":
        return cls("imputation", mask_fraction=mask_fraction, train_fraction=None, seed=seed)

    @classmethod
    def forecasting(cls, train_fraction=0.7, seed=0) -> "SplitSpec":
        return cls("forecasting", mask_fraction=None, train_fraction=train_fraction, seed=seed)

    def time_cut(self, T) -> int:
        cut = math.ceil(self.train_fraction * T - 1e-9)
        if not 0 < cut < T:
            raise InvalidArgumentError(f"train_fraction {self.train_fraction} leaves an empty side for T={T}")
        return cut

    def n_masked(self, n_cells) -> int:
        n = int(math.floor(self.mask_fraction * n_cells + 1e-9))
        if not 0 < n < n_cells:
            raise InvalidArgumentError(f"mask_fraction {self.mask_fraction} leaves an empty side")
        return n


@dataclass
class SequenceSplit:
    """Train and test views of a sequence dataset.

    For forecasting, ``test`` holds the final ``T - t_cut`` steps; for
    imputation both views span all steps with complementary MISSING patterns.
    """

    train: SequenceDataset
    test: SequenceDataset
    mode: str
    t_cut: int | None = None

    @property
    def test_mask(self) -> np.ndarray:
        return self.test.obs != MISSING


@dataclass
class HeldOutCells:
    """Held-out tensor cells ``(i, j, a, t)`` with absolute ``t`` and their counts."""

    cells: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.counts)


@dataclass
class TensorSplit:
    train: CountTensor
    test: HeldOutCells
    mode: str
    t_cut: int | None = None


def split(data, spec: SplitSpec, rng=None):
    """Split a :class:`SequenceDataset` or :class:`CountTensor` into train and test views.

    Imputation masks exactly ``floor(mask_fraction * n)`` entries chosen
    uniformly (``n`` counts off-diagonal cells for tensors); forecasting keeps
    the first ``ceil(train_fraction * T)`` steps for training.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if isinstance(data, SequenceDataset):
        return _split_sequences(data, spec, rng)
    if isinstance(data, CountTensor):
        return _split_tensor(data, spec, rng)
    raise InvalidArgumentError(f"cannot split {type(data).__name__}")


def _split_sequences(data: SequenceDataset, spec, rng) -> SequenceSplit:
    obs = data.obs
    if spec.mode == "forecasting":
        cut = spec.time_cut(data.T)
        return SequenceSplit(SequenceDataset(obs[:, :cut].copy(), data.n_actions),
                             SequenceDataset(obs[:, cut:].copy(), data.n_actions),
                             "forecasting", cut)
    n = spec.n_masked(obs.size)
    chosen = rng.choice(obs.size, size=n, replace=False)
    mask = np.zeros(obs.size, dtype=bool)
    mask[chosen] = True
    mask = mask.reshape(obs.shape)
    train = np.where(mask, MISSING, obs)
    test = np.where(mask, obs, MISSING)
    return SequenceSplit(SequenceDataset(train, data.n_actions),
                         SequenceDataset(test, data.n_actions), "imputation")


def _off_diagonal_cells(V, A, times) -> np.ndarray:
    i, j, a, t = np.meshgrid(np.arange(V), np.arange(V), np.arange(A), np.asarray(times), indexing="ij")
    cells = np.stack([i.ravel(), j.ravel(), a.ravel(), t.ravel()], axis=1)
    return cells[cells[:, 0] != cells[:, 1]]


def _split_tensor(data: CountTensor, spec, rng) -> TensorSplit:
    V, _, A, T = data.dims
    if spec.mode == "forecasting":
        cut = spec.time_cut(T)
        cells = _off_diagonal_cells(V, A, range(cut, T))
        return TensorSplit(data.time_slice(0, cut), HeldOutCells(cells, data.count_at(cells)),
                           "forecasting", cut)
    cells = _off_diagonal_cells(V, A, range(T))
    n = spec.n_masked(len(cells))
    chosen = np.sort(rng.choice(len(cells), size=n, replace=False))
    held = cells[chosen]
    return TensorSplit(data.with_mask(held), HeldOutCells(held, data.count_at(held)), "imputation")


# ---------------------------------------------------------------- metrics

def mae(predicted, actual) -> float:
    """Mean absolute difference; ordinal categories are compared by index."""
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if predicted.size == 0:
        raise InvalidArgumentError("mae of an empty set")
    if predicted.shape != actual.shape:
        raise InvalidArgumentError("predicted and actual differ in length")
    return float(np.mean(np.abs(predicted - actual)))


def sppd(counts, rates) -> float:
    """Scaled posterior predictive density of held-out counts.

    ``exp(mean_i log((1/S) sum_s Pois(y_i; mu_is)))`` for an ``(S, n)`` rate
    array. Zero rates are floored at ``RATE_FLOOR``; the result lies in (0, 1].
    """
    counts = np.asarray(counts, dtype=float).ravel()
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    if counts.size == 0:
        raise InvalidArgumentError("sppd of an empty test set")
    if rates.ndim != 2 or rates.shape[1] != counts.size:
        raise InvalidArgumentError("rates must have shape (S, n_cells)")
    if np.any(~np.isfinite(rates)) or np.any(rates < 0):
        raise InvalidArgumentError("rates must be finite and non-negative")
    log_p = poisson.logpmf(counts[None, :], np.maximum(rates, RATE_FLOOR))
    per_cell = logsumexp(log_p, axis=0) - math.log(rates.shape[0])
    # guard against rounding just above 0 in the log domain
    return float(min(1.0, math.exp(per_cell.mean())))


def recovery_score(truth: HmmParams, trace: ChainTrace, aligned=False) -> dict:
    """Mean absolute entrywise error of posterior-mean matrices against the truth.

    With ``aligned`` every sample is first relabelled to the truth by the
    emission-row assignment of :func:`align_states`.
    """
    samples = trace.samples
    if aligned:
        samples = [permute_states(s, align_states(truth.emission, s["emission"])) for s in samples]
    out = {}
    for name, target in (("transition", truth.transition), ("emission", truth.emission)):
        mean = np.mean([s[name] for s in samples], axis=0)
        if mean.shape != target.shape:
            raise InvalidArgumentError(f"{name} shape {mean.shape} does not match truth {target.shape}")
        out[name] = float(np.mean(np.abs(mean - target)))
    return out


def _hmm_params(sample) -> HmmParams:
    return HmmParams.from_matrices(sample["transition"], sample["emission"])


def hmm_predictions(trace: ChainTrace, data_split: SequenceSplit, initial=None):
    """Posterior-averaged expected state index at every slot and expected action at test slots.

    Returns ``(expected_state (N, T), expected_action (N, T))``; training steps
    use smoothed marginals, forecast steps the propagated filter.
    """
    train = data_split.train.obs
    N = train.shape[0]
    T = train.shape[1] + (data_split.test.T if data_split.mode == "forecasting" else 0)
    state_sum = np.zeros((N, T))
    action_sum = np.zeros((N, T))
    for s in trace.samples:
        params = _hmm_params(s)
        if initial is not None:
            params = HmmParams(initial, params.transition, params.emission)
        action_probs, gamma = impute_batch(params, train)
        k_idx, a_idx = np.arange(params.K), np.arange(params.A)
        T_train = train.shape[1]
        state_sum[:, :T_train] += gamma @ k_idx
        action_sum[:, :T_train] += action_probs @ a_idx
        if data_split.mode == "forecasting":
            fc = forecast_batch(params, train, T - T_train)
            state_sum[:, T_train:] += fc.expected_state
            action_sum[:, T_train:] += fc.expected_action
    n = len(trace.samples)
    return state_sum / n, action_sum / n


def hmm_metrics(truth: HmmParams, states, full_obs, trace: ChainTrace, data_split: SequenceSplit) -> dict:
    """Observation and latent-state MAE plus recovery errors for one fit.

    Observation MAE is taken over held-out slots; latent-state MAE over every
    slot of every sequence, without relabelling.
    """
    exp_state, exp_action = hmm_predictions(trace, data_split, initial=truth.initial)
    if data_split.mode == "forecasting":
        held = np.zeros(full_obs.shape, dtype=bool)
        held[:, data_split.t_cut:] = True
    else:
        held = data_split.test_mask
    out = {
        "mae_observations": mae(exp_action[held], full_obs[held]),
        "mae_latent_states": mae(exp_state, states),
    }
    for aligned in (False, True):
        suffix = "_aligned" if aligned else ""
        for name, value in recovery_score(truth, trace, aligned=aligned).items():
            out[f"recovery_{name}{suffix}"] = value
    out["acceptance_rate"] = trace.acceptance_rate
    return out


def dpt_params_from_sample(sample: dict, tau0=1.0, alpha0=1.0) -> DptParams:
    """Rebuild :class:`DptParams` from one trace record."""
    return DptParams(sample["psi"], sample["core"], sample["emission"], sample["transition"],
                     sample["delta_a"], sample["delta_t"], tau0=tau0, alpha0=alpha0,
                     psi_target=sample.get("psi_target"))


def dpt_test_rates(params_list, data_split: TensorSplit) -> np.ndarray:
    """``(S, n)`` predicted rates at the held-out cells."""
    cells = data_split.test.cells
    if data_split.mode == "forecasting":
        fc = dpt_forecast(params_list, int(cells[:, 3].max()) - data_split.t_cut + 1)
        return fc.rates_at(cells)
    return np.stack([rates_at(p, cells) for p in params_list])


def dpt_metrics(trace: ChainTrace, data_split: TensorSplit, tau0=1.0, alpha0=1.0) -> dict:
    params = [dpt_params_from_sample(s, tau0, alpha0) for s in trace.samples]
    rates = dpt_test_rates(params, data_split)
    counts = data_split.test.counts
    return {
        "sppd": sppd(counts, rates),
        "mae_observations": mae(rates.mean(axis=0), counts),
        "acceptance_rate": trace.acceptance_rate,
    }


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentSpec:
    """A sweep over seeds and prior configurations for HMM data.

    ``N`` defaults to 100 in the few-shot regime and 10000 otherwise.
    """

    truth: TruthSpec = field(default_factory=TruthSpec)
    T: int = 10
    few_shot: bool = False
    N: int | None = None
    seeds: tuple = tuple(range(10))
    split: SplitSpec = field(default_factory=SplitSpec.forecasting)
    configs: tuple = ("omd+omd", "smd+smd")
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(algorithm="hmc", n_samples=500, burn_in=200, n_starts=4))
    experiment_id: str = "hmm"

    def __post_init__(self):
        if self.N is None:
            self.N = 100 if self.few_shot else 10000
        if self.N < 1 or self.T < 2:
            raise InvalidArgumentError("need N >= 1 and T >= 2")
        if not self.seeds:
            raise InvalidArgumentError("need at least one seed")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.configs = tuple(PriorConfig.from_name(c if isinstance(c, str) else c.name).name
                             for c in self.configs)
        for c in self.configs:
            PriorConfig.from_name(c)


@dataclass
class DptExperimentSpec:
    """A sweep over seeds and prior configurations for count-tensor data.

    Data come from the DPT prior under ``truth_config``; the gamma chains use
    ``tau0`` both when generating and when fitting.
    """

    V: int = 10
    A: int = 10
    T: int = 12
    C: int = 3
    K: int = 3
    truth_config: str = "omd+omd"
    tau0: float = 100.0
    alpha0: float = 1.0
    seeds: tuple = tuple(range(10))
    split: SplitSpec = field(default_factory=SplitSpec.forecasting)
    configs: tuple = ("omd+omd", "smd+smd", "smd+bmd")
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(algorithm="hmc", n_samples=300, burn_in=200, n_starts=4))
    experiment_id: str = "dpt"

    def __post_init__(self):
        if not self.seeds:
            raise InvalidArgumentError("need at least one seed")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.configs = tuple(PriorConfig.from_name(c if isinstance(c, str) else c.name).name
                             for c in self.configs)
        for c in (self.truth_config,) + self.configs:
            PriorConfig.from_name(c)


@dataclass
class MetricReport:
    """Per-seed metrics of one prior configuration in one experiment."""

    experiment_id: str
    config: str
    split_mode: str
    per_seed: dict = field(default_factory=dict)

    @property
    def metric_names(self):
        names = []
        for values in self.per_seed.values():
            names.extend(n for n in values if n not in names)
        return names

    def values(self, metric) -> np.ndarray:
        return np.array([v[metric] for _, v in sorted(self.per_seed.items()) if metric in v])

    def summary(self) -> dict:
        """``{metric: (mean, sample sd)}`` across seeds; sd is 0 for one seed."""
        out = {}
        for name in self.metric_names:
            v = self.values(name)
            out[name] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0)
        return out

    @property
    def mae_observations(self):
        return self.summary().get("mae_observations", (math.nan,))[0]

    @property
    def mae_latent_states(self):
        return self.summary().get("mae_latent_states", (math.nan,))[0]

    @property
    def sppd(self):
        return self.summary().get("sppd", (math.nan,))[0]

    def rows(self):
        """``(experiment_id, seed, config, split_mode, metric, value)`` tuples."""
        for seed, values in sorted(self.per_seed.items()):
            for name, value in values.items():
                yield (self.experiment_id, seed, self.config, self.split_mode, name, value)


@dataclass
class ExperimentResult:
    reports: dict
    failures: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def __getitem__(self, config) -> MetricReport:
        return self.reports[PriorConfig.from_name(config).name]

    def rows(self):
        for report in self.reports.values():
            yield from report.rows()


def job_seed(seed, config_index, stream=2) -> int:
    """Chain seed for job ``(seed, config)``; independent of scheduling."""
    return int(np.random.SeedSequence([int(seed), stream, int(config_index)]).generate_state(1)[0])


def _data_rng(seed):
    return np.random.default_rng([int(seed), 0])


def _split_rng(seed):
    return np.random.default_rng([int(seed), 1])


def hmm_experiment_data(spec: ExperimentSpec, seed):
    """Truth, latent states, full data and split for one seed."""
    truth = make_truth(spec.truth)
    data, states = hmm_generate(truth, spec.N, spec.T, _data_rng(seed))
    return truth, states, data, split(data, spec.split, _split_rng(seed))


def dpt_experiment_data(spec: DptExperimentSpec, seed):
    """Truth parameters, full tensor and split for one seed."""
    rng = _data_rng(seed)
    truth = sample_dpt_params(spec.V, spec.C, spec.K, spec.A, spec.T, PriorConfig.from_name(spec.truth_config),
                              rng, tau0=spec.tau0, alpha0=spec.alpha0)
    data = dpt_generate(truth, rng)
    return truth, data, split(data, spec.split, _split_rng(seed))


def _run_hmm_job(spec: ExperimentSpec, seed, ci):
    truth, states, data, data_split = hmm_experiment_data(spec, seed)
    model = HmmModel(data_split.train, spec.truth.K, PriorConfig.from_name(spec.configs[ci]), initial=truth.initial)
    start = time.perf_counter()
    trace = run_chain(spec.sampler, model, seed=job_seed(seed, ci))
    metrics = hmm_metrics(truth, states, data.obs, trace, data_split)
    metrics["runtime_seconds"] = time.perf_counter() - start
    return metrics, trace


def _run_dpt_job(spec: DptExperimentSpec, seed, ci):
    _, _, data_split = dpt_experiment_data(spec, seed)
    model = DptModel(data_split.train, spec.C, spec.K, PriorConfig.from_name(spec.configs[ci]),
                     tau0=spec.tau0, alpha0=spec.alpha0)
    start = time.perf_counter()
    trace = run_chain(spec.sampler, model, seed=job_seed(seed, ci))
    metrics = dpt_metrics(trace, data_split, spec.tau0, spec.alpha0)
    metrics["runtime_seconds"] = time.perf_counter() - start
    return metrics, trace


def _job(args):
    kind, spec, seed, ci, keep = args
    runner = _run_hmm_job if kind == "hmm" else _run_dpt_job
    try:
        metrics, trace = runner(spec, seed, ci)
    except SamplerError as err:
        return seed, ci, None, None, str(err)
    return seed, ci, metrics, (trace if keep else None), None


def run_experiment(spec, n_jobs=1, keep_traces=False) -> ExperimentResult:
    """Fit every ``(seed, config)`` pair and collect per-seed metrics.

    Sampler aborts are recorded in ``failures`` and do not stop the sweep.
    ``n_jobs > 1`` runs jobs in worker processes; the results are identical.
    """
    kind = "hmm" if isinstance(spec, ExperimentSpec) else "dpt"
    if kind == "dpt" and not isinstance(spec, DptExperimentSpec):
        raise InvalidArgumentError("spec must be an ExperimentSpec or DptExperimentSpec")
    jobs = [(kind, spec, seed, ci, keep_traces) for seed in spec.seeds for ci in range(len(spec.configs))]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]
    reports = {c: MetricReport(spec.experiment_id, c, spec.split.mode) for c in spec.configs}
    result = ExperimentResult(reports)
    for seed, ci, metrics, trace, error in sorted(outcomes, key=lambda o: (o[0], o[1])):
        config = spec.configs[ci]
        if error is not None:
            logger.warning("seed %s, %s: sampler failed: %s", seed, config, error)
            result.failures.append((seed, config, error))
            continue
        # wall time is kept apart so that metric rows stay reproducible
        result.timings[(seed, config)] = metrics.pop("runtime_seconds")
        reports[config].per_seed[seed] = metrics
        if trace is not None:
            result.traces[(seed, config)] = trace
    return result


def with_seeds(spec, seeds):
    """Copy of an experiment spec with a different seed list."""
    return replace(spec, seeds=tuple(seeds))


def _seed_list(text):
    text = str(text).strip()
    if text.startswith("range:"):
        return tuple(range(int(text.split(":", 1)[1])))
    return tuple(int(s) for s in text.replace(" ", "").split(",") if s)


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {text!r}")


def sampler_from_config(cfg: dict, defaults: SamplerConfig) -> SamplerConfig:
    kw = {}
    for key, cast in (("algorithm", str), ("n_samples", int), ("burn_in", int), ("thin", int),
                      ("n_leapfrog", int), ("adapt_interval", int), ("target_accept", float),
                      ("n_starts", int), ("pilot_iters", int)):
        if key in cfg:
            kw[key] = cast(cfg[key])
    return replace(defaults, **kw)


def split_from_config(cfg: dict) -> SplitSpec:
    mode = cfg.get("split_mode", "forecasting")
    if mode == "imputation":
        return SplitSpec.imputation(float(cfg.get("mask_fraction", 0.3)))
    if mode == "forecasting":
        return SplitSpec.forecasting(float(cfg.get("train_fraction", 0.7)))
    raise InvalidArgumentError(f"split_mode must be one of {SPLIT_MODES}")


KNOWN_KEYS = {
    "experiment_id", "model", "truth", "K", "A", "N", "T", "few_shot", "seeds", "split_mode",
    "mask_fraction", "train_fraction", "configs", "algorithm", "n_samples", "burn_in", "thin",
    "n_leapfrog", "adapt_interval", "target_accept", "n_starts", "pilot_iters", "emission_width", "band_self", "stickiness",
    "decay", "V", "C", "tau0", "alpha0", "truth_config",
}


def experiment_from_config(cfg: dict):
    """Build an :class:`ExperimentSpec` or :class:`DptExperimentSpec` from flat key/value pairs.

    ``model`` selects ``hmm`` (default) or ``dpt``; ``seeds`` is a comma list
    or ``range:n``; ``configs`` a comma list of prior names. Unknown keys are
    rejected so typos do not silently fall back to defaults.
    """
    unknown = set(cfg) - KNOWN_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
    model = cfg.get("model", "hmm")
    common = {}
    if "seeds" in cfg:
        common["seeds"] = _seed_list(cfg["seeds"])
    if "configs" in cfg:
        common["configs"] = tuple(c.strip() for c in cfg["configs"].split(",") if c.strip())
    if "experiment_id" in cfg:
        common["experiment_id"] = cfg["experiment_id"]
    common["split"] = split_from_config(cfg)
    if model == "hmm":
        truth_kw = {"shape": cfg.get("truth", "banded")}
        for key, cast in (("K", int), ("A", int), ("emission_width", float), ("band_self", float),
                          ("stickiness", float), ("decay", float)):
            if key in cfg:
                truth_kw[key] = cast(cfg[key])
        spec = ExperimentSpec(
            truth=TruthSpec(**truth_kw),
            T=int(cfg.get("T", 10)),
            few_shot=_bool(cfg.get("few_shot", "false")),
            N=int(cfg["N"]) if "N" in cfg else None,
            **common,
        )
    elif model == "dpt":
        kw = {key: cast(cfg[key]) for key, cast in (("V", int), ("A", int), ("T", int), ("C", int), ("K", int),
                                                   ("tau0", float), ("alpha0", float), ("truth_config", str))
              if key in cfg}
        spec = DptExperimentSpec(**kw, **common)
    else:
        raise InvalidArgumentError("model must be 'hmm' or 'dpt'")
    spec.sampler = sampler_from_config(cfg, spec.sampler)
    return spec

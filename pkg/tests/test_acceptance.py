"""The twelve acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line. The experiment-scale
criteria (5, 6, 9, 10) share session fixtures, so the HMM sweeps and the DPT
sweep each run once.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from omd.dpt import DptParams, dpt_rate, rate_tensor, sample_dpt_params, total_rate
from omd.evaluation import DptExperimentSpec, ExperimentSpec, SplitSpec, TruthSpec, run_experiment, sppd
from omd.events import load_codebook
from omd.hmm import MISSING, HmmParams, hmm_impute, hmm_log_likelihood, hmm_posterior_states
from omd.inference import posterior_mean
from omd.priors import PriorConfig, check_well_ordered, row_cdf, sample_omd, sort_sticks

from clitools import differing_outputs
from oracles import brute_impute, brute_loglik, brute_marginals, dirichlet_stick_breaking, naive_rate, naive_total
from test_events import GOLDEN

SEEDS = tuple(range(10))


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {n}: {detail}"


def per_seed(report, metric):
    return np.array([report.per_seed[s][metric] for s in SEEDS])


# ---- session fixtures: the experiment sweeps

def hmm_sweep(shape, split):
    spec = ExperimentSpec(truth=TruthSpec(shape, K=5, A=10), N=500, T=10, seeds=SEEDS, split=split,
                          experiment_id=shape)
    start = time.perf_counter()
    result = run_experiment(spec)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def banded_forecast():
    return hmm_sweep("banded", SplitSpec.forecasting())


@pytest.fixture(scope="session")
def bonbon_impute():
    return hmm_sweep("bonbon", SplitSpec.imputation())[0]


@pytest.fixture(scope="session")
def triangle_impute():
    return hmm_sweep("triangle", SplitSpec.imputation())[0]


@pytest.fixture(scope="session")
def dpt_forecast():
    spec = DptExperimentSpec(V=10, A=10, T=12, C=3, K=3, seeds=SEEDS, truth_config="omd+omd",
                             configs=("omd+omd", "smd+smd", "smd+bmd"), experiment_id="dpt")
    return run_experiment(spec, keep_traces=True)


# ---- 1: OMD draws are well-ordered

def test_criterion_01_omd_draws_well_ordered(capsys):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    bad = 0
    for _ in range(1000):
        K, A = int(rng.integers(1, 13)), int(rng.integers(2, 21))
        alpha = rng.uniform(0.1, 10.0, size=A)
        phi, _ = sample_omd(K, alpha, rng)
        bad += not check_well_ordered(phi, tol=1e-12)
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, bad == 0 and elapsed < 10.0, f"{bad} unordered of 1000, {elapsed:.2f} s")


# ---- 2: K=1 reduces to stick-breaking

def test_criterion_02_single_row_is_stick_breaking(capsys):
    mismatched = 0
    for seed in range(100):
        alpha = np.random.default_rng(10_000 + seed).uniform(0.1, 10.0, size=1 + seed % 12 + 1)
        phi, _ = sample_omd(1, alpha, np.random.default_rng(seed))
        mismatched += not np.array_equal(phi[0], dirichlet_stick_breaking(alpha, np.random.default_rng(seed)))
    alpha = np.array([2.0, 1.0, 3.0, 0.5])
    rng = np.random.default_rng(77)
    first = np.array([sample_omd(1, alpha, rng)[0][0, 0] for _ in range(10_000)])
    pvalue = stats.kstest(first, stats.beta(alpha[0], alpha[1:].sum()).cdf).pvalue
    verdict(capsys, 2, mismatched == 0 and pvalue > 0.001,
            f"{mismatched} of 100 seeds differ bitwise, KS p = {pvalue:.3g}")


# ---- 3: CDF of the second column

def test_criterion_03_second_column_cdf(capsys):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        K, A = int(rng.integers(1, 9)), int(rng.integers(3, 12))
        phi, raw = sample_omd(K, rng.uniform(0.1, 10.0, size=A), rng)
        beta2 = sort_sticks(raw)[0][:, 1]
        expected = phi[:, 0] - phi[:, 0] * beta2 + beta2
        worst = max(worst, float(np.max(np.abs(row_cdf(phi)[:, 1] - expected))))
    verdict(capsys, 3, worst <= 1e-12, f"max deviation {worst:.2e}")


# ---- 4: HMM operations against enumeration

def test_criterion_04_hmm_against_brute_force(capsys):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(200):
        K, T, A = int(rng.integers(1, 4)), int(rng.integers(1, 7)), int(rng.integers(2, 5))
        p = HmmParams(rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K), size=K),
                      rng.dirichlet(np.ones(A), size=K))
        seq = rng.integers(0, A, size=T)
        seq[rng.random(T) < 0.3] = MISSING
        if not np.any(seq == MISSING):
            seq[rng.integers(T)] = MISSING
        args = (p.initial, p.transition, p.emission, seq)
        worst = max(worst, abs(hmm_log_likelihood(p, seq[None, :]) - brute_loglik(*args)))
        worst = max(worst, float(np.max(np.abs(hmm_posterior_states(p, seq) - brute_marginals(*args)))))
        slots, ref = brute_impute(*args)
        imp = hmm_impute(p, seq)
        assert np.array_equal(imp.positions, slots)
        worst = max(worst, float(np.max(np.abs(imp.action_probs - ref))))
    verdict(capsys, 4, worst <= 1e-9, f"max deviation {worst:.2e} over 200 instances")


# ---- 5: latent-state recovery on banded data

def test_criterion_05_banded_latent_states(capsys, banded_forecast):
    result, elapsed = banded_forecast
    assert not result.failures, result.failures
    omd, smd = result["omd+omd"], result["smd+smd"]
    omd_state, smd_state = per_seed(omd, "mae_latent_states"), per_seed(smd, "mae_latent_states")
    wins = int(np.sum(omd_state < smd_state))
    smd_aligned = per_seed(smd, "recovery_transition_aligned").mean()
    omd_unaligned = per_seed(omd, "recovery_transition").mean()
    ok = wins >= 8 and smd_aligned <= 2 * omd_unaligned and elapsed < 1800
    verdict(capsys, 5, ok, f"OMD lower latent MAE in {wins}/10 seeds; SMD aligned error {smd_aligned:.4f} "
            f"vs 2 x OMD unaligned {2 * omd_unaligned:.4f}; {elapsed / 60:.1f} min")


# ---- 6: forecasting and imputation error

def test_criterion_06_forecast_and_imputation_error(capsys, banded_forecast, bonbon_impute, triangle_impute):
    banded = banded_forecast[0]
    means = {
        "banded": (per_seed(banded["omd+omd"], "mae_observations").mean(),
                   per_seed(banded["smd+smd"], "mae_observations").mean()),
        "bonbon": (per_seed(bonbon_impute["omd+omd"], "mae_observations").mean(),
                   per_seed(bonbon_impute["smd+smd"], "mae_observations").mean()),
        "triangle": (per_seed(triangle_impute["omd+omd"], "mae_observations").mean(),
                     per_seed(triangle_impute["smd+smd"], "mae_observations").mean()),
    }
    checks = {
        "banded forecast OMD <= SMD": means["banded"][0] <= means["banded"][1],
        "bonbon impute SMD <= OMD": means["bonbon"][1] <= means["bonbon"][0],
        "triangle impute SMD <= OMD": means["triangle"][1] <= means["triangle"][0],
    }
    detail = "; ".join(f"{name} {'ok' if ok else 'no'}" for name, ok in checks.items())
    detail += "; means (OMD, SMD) " + ", ".join(f"{k} ({o:.4f}, {s:.4f})" for k, (o, s) in means.items())
    verdict(capsys, 6, all(checks.values()), detail)


# ---- 7: SPPD

def test_criterion_07_sppd(capsys):
    single = abs(sppd([0], [[1.0]]) - math.exp(-1))
    p1, p2 = stats.poisson.pmf(2, 1.5), stats.poisson.pmf(0, 0.5)
    geo = abs(sppd([2, 0], [[1.5, 0.5]]) - math.sqrt(p1 * p2))
    rng = np.random.default_rng(7)
    in_range = True
    for _ in range(500):
        rates = rng.gamma(0.5, 5.0, size=(int(rng.integers(1, 6)), int(rng.integers(1, 10))))
        value = sppd(rng.poisson(rates[0] + rng.gamma(1.0, 2.0, rates.shape[1])), rates)
        in_range &= 0.0 < value <= 1.0
    ok = single <= 1e-12 and geo <= 1e-12 and in_range
    verdict(capsys, 7, ok, f"|sppd - e^-1| = {single:.1e}, geometric-mean error {geo:.1e}, "
            f"all values in (0, 1]: {in_range}")


# ---- 8: DPT rate algebra

def dpt_instance(rng):
    V, C, K = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    A, T = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    cfg = PriorConfig.from_name("omd+omd" if K > 1 else "smd+smd")
    return sample_dpt_params(V, C, K, A, T, cfg, rng, tau0=float(rng.uniform(0.5, 50)))


def test_criterion_08_dpt_rates(capsys):
    rng = np.random.default_rng(8)
    rate_err = total_err = gauge_err = 0.0
    for _ in range(100):
        p = dpt_instance(rng)
        V, _, A, T = p.dims
        for i in range(V):
            for j in range(V):
                for a in range(A):
                    for t in range(T):
                        ref = naive_rate(p.psi, p.core, p.emission, p.delta_a, p.delta_t, i, j, a, t)
                        rate_err = max(rate_err, abs(dpt_rate(p, i, j, a, t) - ref))
        total_err = max(total_err, abs(total_rate(p) - naive_total(p.psi, p.core, p.emission, p.delta_a,
                                                                    p.delta_t)))
        c, s = int(rng.integers(p.C)), float(rng.uniform(0.1, 10.0))
        psi, core = p.psi.copy(), p.core.copy()
        psi[:, c] *= s
        core[:, c] /= s
        core[:, :, c] /= s
        q = DptParams(psi, core, p.emission, p.transition, p.delta_a, p.delta_t, p.tau0, p.alpha0)
        gauge_err = max(gauge_err, float(np.max(np.abs(rate_tensor(q) - rate_tensor(p)))))
    ok = rate_err <= 1e-12 and total_err <= 1e-8 and gauge_err <= 1e-10
    verdict(capsys, 8, ok, f"rate error {rate_err:.1e}, total-rate error {total_err:.1e}, "
            f"gauge error {gauge_err:.1e}")


# ---- 9: ordered DPT posteriors

def test_criterion_09_dpt_posterior_is_ordered(capsys, dpt_forecast):
    bad, n, mean_bad = 0, 0, 0
    for seed in SEEDS:
        trace = dpt_forecast.traces[(seed, "OMD+OMD")]
        assert len(trace.samples) == 300
        for draw in trace.samples:
            n += 1
            bad += not (check_well_ordered(draw["emission"]) and check_well_ordered(draw["transition"]))
        mean_bad += not check_well_ordered(posterior_mean(trace, "emission"))
    verdict(capsys, 9, bad == 0 and mean_bad == 0,
            f"{bad} of {n} draws unordered; {mean_bad} of 10 posterior-mean emissions unordered")


# ---- 10: forecasting SPPD on OMD-generated data

def test_criterion_10_dpt_forecast_sppd(capsys, dpt_forecast):
    assert not dpt_forecast.failures, dpt_forecast.failures
    values = {c: per_seed(r, "sppd") for c, r in dpt_forecast.reports.items()}
    omd, bmd = values["OMD+OMD"], values["SMD+BMD"]
    best = np.max(np.vstack(list(values.values())), axis=0)
    wins = int(np.sum(omd >= bmd))
    close = int(np.sum(omd >= 0.9 * best))
    means = ", ".join(f"{c} {v.mean():.4f}" for c, v in values.items())
    verdict(capsys, 10, wins >= 7 and close == 10,
            f"OMD+OMD >= SMD+BMD in {wins}/10 seeds; within 10% of best in {close}/10; mean SPPD {means}")


# ---- 11: codebook

def test_criterion_11_codebook(capsys):
    book = load_codebook()
    rows = [(r.table_index, r.name, r.goldstein) for r in book]
    names = book.names
    ok = (rows == GOLDEN and names.index("investigate") == names.index("disapprove") - 1
          and book[0].name == "provide aid" and book[0].goldstein == 7.0
          and book[19].name == "unconventional mass violence" and book[19].goldstein == -10.0
          and book.lookup("fight").table_index == 19)
    verdict(capsys, 11, ok, "20 rows match the golden table" if rows == GOLDEN else "table differs")


# ---- 12: byte-identical reruns

def test_criterion_12_cli_reproducible(capsys, tmp_path, monkeypatch):
    differing = differing_outputs(tmp_path, capsys, monkeypatch)
    verdict(capsys, 12, differing == [], "all outputs identical" if not differing else f"differ: {differing}")

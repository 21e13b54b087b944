import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from omd.dpt import sample_dpt_params, dpt_generate
from omd.errors import InvalidArgumentError, SamplerError
from omd.hmm import HmmParams, hmm_generate
from omd.inference import (
    DptModel,
    GaussianTarget,
    HmmModel,
    ParameterLayout,
    SamplerConfig,
    StickMatrix,
    UnconstrainedState,
    align_states,
    permute_states,
    posterior_mean,
    run_chain,
)
from omd.priors import PriorConfig, break_sticks, check_well_ordered

from oracles import brute_alignment

CONFIGS = ["omd+omd", "smd+smd", "smd+bmd", "omd+bmd"]


def small_hmm_model(config="omd+omd", seed=0, K=3, A=5, N=20, T=6):
    rng = np.random.default_rng(seed)
    truth = HmmParams.from_matrices(rng.dirichlet(np.ones(K), size=K), rng.dirichlet(np.ones(A), size=K))
    data, _ = hmm_generate(truth, N, T, rng)
    obs = data.obs.copy()
    obs[rng.random(obs.shape) < 0.2] = -1
    data.obs = obs
    return HmmModel(data, K, PriorConfig.from_name(config))


def small_dpt_model(config="omd+omd", seed=0, separate=False):
    rng = np.random.default_rng(seed)
    cfg = PriorConfig.from_name(config)
    truth = sample_dpt_params(4, 2, 3, 5, 3, cfg, rng, tau0=10.0)
    data = dpt_generate(truth, rng).with_mask([[0, 1, 2, 1], [2, 3, 0, 0]])
    return DptModel(data, 2, 3, cfg, tau0=10.0, separate_receiver=separate)


def numeric_grad(f, z, h=1e-6):
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


# ---- layout and transforms

def test_layout_covers_vector():
    layout = ParameterLayout([("a", (2, 3), "log"), ("b", (4,), "logit")])
    assert layout.size == 10
    z = np.arange(10.0)
    state = UnconstrainedState(z, layout)
    np.testing.assert_array_equal(state["a"].ravel(), z[:6])
    np.testing.assert_array_equal(layout.join(layout.split(z)), z)
    with pytest.raises(InvalidArgumentError):
        UnconstrainedState(np.zeros(9), layout)
    with pytest.raises(InvalidArgumentError):
        ParameterLayout([("a", 2, "sqrt")])


@pytest.mark.parametrize("family", ["omd", "smd", "bmd"])
def test_stick_matrix_round_trip(family):
    block = StickMatrix(family, 4, 4)
    rng = np.random.default_rng(0)
    for _ in range(10):
        z = block.sample(rng)
        m = block.matrix(z)
        np.testing.assert_allclose(block.matrix(block.unconstrain(m)), m, atol=1e-10)


def test_zero_logit_is_half_stick():
    block = StickMatrix("smd", 1, 2)
    np.testing.assert_allclose(block.matrix(np.zeros(1)), [[0.5, 0.5]])


def test_presorted_sticks_skip_the_sort():
    sticks = np.array([[0.9, 0.7, 0.5], [0.4, 0.3, 0.2]])
    omd = StickMatrix("omd", 2, 4)
    np.testing.assert_allclose(omd.matrix(logit(sticks).ravel()), break_sticks(sticks), atol=1e-14)


def test_unconstrain_rejects_out_of_support():
    omd = StickMatrix("omd", 2, 2)
    with pytest.raises(InvalidArgumentError):
        omd.unconstrain(np.array([[0.1, 0.9], [0.9, 0.1]]))
    with pytest.raises(InvalidArgumentError):
        StickMatrix("bmd", 3, 3).unconstrain(np.full((3, 3), 1 / 3))
    with pytest.raises(InvalidArgumentError):
        StickMatrix("smd", 2, 2).unconstrain(np.eye(2))


def test_single_column_block_is_constant():
    block = StickMatrix("omd", 1, 1)
    assert block.size == 0
    np.testing.assert_array_equal(block.matrix(np.zeros(0)), [[1.0]])


# ---- log target

@pytest.mark.parametrize("config", CONFIGS)
def test_hmm_log_target_is_joint_plus_jacobian(config):
    model = small_hmm_model(config)
    rng = np.random.default_rng(1)
    for _ in range(5):
        z = model.initial_point(rng)
        expected = model.log_joint(model.constrain(z)) + model.log_jacobian(z)
        assert model.log_target(z) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("config", CONFIGS)
def test_hmm_gradient(config):
    model = small_hmm_model(config, seed=2)
    z = model.initial_point(np.random.default_rng(3))
    _, g = model.log_target_and_grad(z)
    np.testing.assert_allclose(g, numeric_grad(model.log_target, z), rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("config,separate", [("omd+omd", False), ("smd+smd", True), ("smd+bmd", False)])
def test_dpt_log_target_and_gradient(config, separate):
    model = small_dpt_model(config, separate=separate)
    z = model.initial_point(np.random.default_rng(4))
    value, g = model.log_target_and_grad(z)
    expected = model.log_joint(model.constrain(z)) + model.log_jacobian(z)
    assert value == pytest.approx(expected, rel=1e-10, abs=1e-8)
    np.testing.assert_allclose(g, numeric_grad(model.log_target, z), rtol=1e-4, atol=1e-4)


def test_diverging_log_scalar_gives_minus_inf():
    model = small_dpt_model("smd+smd")
    z = model.initial_point(np.random.default_rng(5))
    z[model.layout.blocks["psi"].slice.start] = 1e6
    assert model.log_target(z) == -np.inf


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_log_target_invariant_to_presort_relabelling(seed):
    model = small_hmm_model("omd+omd")
    rng = np.random.default_rng(seed)
    z = model.initial_point(rng)
    raw = model.layout.get(z, "emission").reshape(model.K, model.A - 1).copy()
    col = int(rng.integers(raw.shape[1]))
    raw[:, col] = raw[rng.permutation(model.K), col]
    z2 = z.copy()
    z2[model.layout.blocks["emission"].slice] = raw.ravel()
    assert model.log_target(z2) == pytest.approx(model.log_target(z), abs=1e-10)


# ---- samplers

@pytest.mark.parametrize("algorithm", ["adaptive-rwm", "hmc"])
def test_gaussian_target_moments(algorithm):
    target = GaussianTarget(2)
    cfg = SamplerConfig(algorithm, n_samples=10_000, burn_in=1000)
    x = run_chain(cfg, target, seed=0).stack("x")
    assert x.shape == (10_000, 2)
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.05)
    np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.1)


def test_gaussian_mean_has_no_bias_beyond_three_standard_errors():
    target = GaussianTarget(2, mean=[1.0, -2.0], scale=[0.5, 2.0])
    x = run_chain(SamplerConfig("adaptive-rwm", n_samples=20_000, burn_in=2000), target, seed=1).stack("x")
    # batch means give an autocorrelation-aware standard error
    batches = x.reshape(40, -1, 2).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / np.sqrt(40)
    assert np.all(np.abs(x.mean(axis=0) - [1.0, -2.0]) < 3 * se + 1e-3)


@pytest.mark.parametrize("algorithm", ["adaptive-rwm", "hmc"])
def test_chain_is_reproducible(algorithm):
    model = small_hmm_model("omd+omd")
    cfg = SamplerConfig(algorithm, n_samples=20, burn_in=20, n_starts=2, pilot_iters=5)
    a, b = run_chain(cfg, model, seed=7), run_chain(cfg, model, seed=7)
    np.testing.assert_array_equal(a.unconstrained, b.unconstrained)
    assert a.log_joint_trace == b.log_joint_trace
    c = run_chain(cfg, model, seed=8)
    assert not np.array_equal(a.unconstrained, c.unconstrained)


def test_trace_bookkeeping():
    model = small_hmm_model("smd+smd")
    trace = run_chain(SamplerConfig(n_samples=30, burn_in=10, thin=2), model, seed=0)
    assert len(trace) == 30 and trace.burn_in == 10 and trace.seed == 0
    assert 0.0 <= trace.acceptance_rate <= 1.0
    assert set(trace.block_names) == {"emission", "transition"}
    assert len(trace.log_joint_trace) == 30


def test_omd_posterior_samples_stay_ordered():
    model = small_hmm_model("omd+omd", seed=3)
    for algorithm in ("adaptive-rwm", "hmc"):
        trace = run_chain(SamplerConfig(algorithm, n_samples=50, burn_in=50), model, seed=1)
        for s in trace.samples:
            assert check_well_ordered(s["emission"]) and check_well_ordered(s["transition"])
        assert check_well_ordered(posterior_mean(trace, "emission"))


def test_multi_start_picks_a_pilot_end_point():
    model = small_hmm_model("omd+omd", seed=4)
    cfg = SamplerConfig("hmc", n_samples=5, burn_in=5, n_starts=3, pilot_iters=10)
    trace = run_chain(cfg, model, seed=2)
    assert len(trace) == 5
    with pytest.raises(InvalidArgumentError):
        SamplerConfig(n_starts=0)


class PointTarget:
    """Finite only at the origin, so nothing is ever accepted."""

    dim = 2

    def initial_point(self, rng):
        return np.zeros(2)

    def log_target(self, z):
        return 0.0 if not np.any(z) else -np.inf

    def log_jacobian(self, z):
        return 0.0

    def record(self, z):
        return {"x": z}


def test_zero_acceptance_aborts_after_halvings():
    cfg = SamplerConfig(n_samples=10, burn_in=200, adapt_interval=10, max_halvings=3)
    with pytest.raises(SamplerError, match="no proposal accepted"):
        run_chain(cfg, PointTarget(), seed=0)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SamplerConfig("nuts")
    with pytest.raises(InvalidArgumentError):
        SamplerConfig(n_samples=0)
    assert SamplerConfig("hmc").accept_target == 0.8
    assert SamplerConfig().accept_target == 0.234


# ---- posterior summaries

def test_posterior_mean_edge_cases():
    model = small_hmm_model("smd+smd")
    trace = run_chain(SamplerConfig(n_samples=1, burn_in=0), model, seed=0)
    np.testing.assert_array_equal(posterior_mean(trace, "emission"), trace.samples[0]["emission"])
    trace.samples = [trace.samples[0]] * 3
    np.testing.assert_allclose(posterior_mean(trace, "transition"), trace.samples[0]["transition"])
    with pytest.raises(InvalidArgumentError):
        posterior_mean(trace, "psi")


# ---- alignment

def test_align_identity_and_swap():
    ref = np.random.default_rng(0).dirichlet(np.ones(4), size=3)
    np.testing.assert_array_equal(align_states(ref, ref), [0, 1, 2])
    np.testing.assert_array_equal(align_states(ref, ref[[1, 0, 2]]), [1, 0, 2])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_align_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    ref = rng.dirichlet(np.ones(5), size=4)
    cand = rng.dirichlet(np.ones(5), size=4)
    perm = align_states(ref, cand)
    _, best = brute_alignment(ref, cand)
    assert np.abs(cand[perm] - ref).sum() == pytest.approx(best, abs=1e-12)


def test_permute_states_relabels_both_matrices():
    sample = {"emission": np.arange(6.0).reshape(3, 2), "transition": np.arange(9.0).reshape(3, 3), "psi": 1}
    out = permute_states(sample, [2, 0, 1])
    np.testing.assert_array_equal(out["emission"][0], [4, 5])
    assert out["transition"][0, 0] == 8 and out["transition"][0, 1] == 6
    assert out["psi"] == 1


def test_omd_posterior_beats_prior_mean_on_banded_truth():
    pi = np.array([[0.85, 0.15, 0.0], [0.1, 0.8, 0.1], [0.0, 0.15, 0.85]])
    phi = np.array([[0.7, 0.2, 0.1, 0.0], [0.1, 0.4, 0.4, 0.1], [0.0, 0.1, 0.2, 0.7]])
    truth = HmmParams.from_matrices(pi, phi)
    cfg = PriorConfig.from_name("omd+omd")
    rng = np.random.default_rng(0)
    prior_mean = np.mean([cfg.sample_transition(3, rng) for _ in range(5000)], axis=0)
    prior_err = np.linalg.norm(prior_mean - pi)
    for seed in range(10):
        data, _ = hmm_generate(truth, 200, 10, np.random.default_rng([seed, 0]))
        trace = run_chain(SamplerConfig("hmc", n_samples=100, burn_in=100), HmmModel(data, 3, cfg), seed=seed)
        assert np.linalg.norm(posterior_mean(trace, "transition") - pi) < prior_err

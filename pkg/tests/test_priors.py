import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from omd.errors import InvalidArgumentError, InvalidParameterError
from omd.priors import (
    BandSpec,
    PriorConfig,
    band_concentrations,
    break_sticks,
    check_well_ordered,
    is_stochastic,
    matrix_log_prior,
    matrix_to_sticks,
    prior_summary,
    row_cdf,
    sample_bmd,
    sample_omd,
    sample_smd,
    sort_sticks,
    sticks_sorted,
)

from oracles import dirichlet_stick_breaking, is_well_ordered_pairwise

alphas = st.lists(st.floats(0.1, 10.0), min_size=2, max_size=12)


# ---- sample_smd

def test_smd_single_row_on_simplex():
    m = sample_smd(1, [1, 1, 1], np.random.default_rng(3))
    assert m.shape == (1, 3)
    assert abs(m.sum() - 1) < 1e-12


def test_smd_concentration_limit():
    m = sample_smd(3, [1e6, 1, 1], np.random.default_rng(0))
    np.testing.assert_allclose(m, np.tile([1, 0, 0], (3, 1)), atol=1e-2)


def test_smd_monte_carlo_mean():
    m = sample_smd(100_000, [2, 1, 1], np.random.default_rng(1))
    np.testing.assert_allclose(m.mean(axis=0), [0.5, 0.25, 0.25], atol=0.01)


@pytest.mark.parametrize("sampler", [sample_smd, lambda K, a, r: sample_omd(K, a, r)[0]])
def test_nonpositive_alpha_rejected(sampler):
    with pytest.raises(InvalidParameterError):
        sampler(2, [1.0, 0.0, 1.0], np.random.default_rng(0))


def test_short_alpha_rejected():
    with pytest.raises(InvalidParameterError):
        sample_omd(2, [1.0], np.random.default_rng(0))


# ---- sample_omd

def test_omd_k1_matches_stick_breaking_bitwise():
    for seed in range(20):
        alpha = np.random.default_rng(1000 + seed).uniform(0.2, 5, size=6)
        phi, _ = sample_omd(1, alpha, np.random.default_rng(seed))
        ref = dirichlet_stick_breaking(alpha, np.random.default_rng(seed))
        assert np.array_equal(phi[0], ref)


def test_omd_returns_presort_variates():
    rng = np.random.default_rng(5)
    phi, raw = sample_omd(4, np.ones(6), rng)
    assert raw.shape == (4, 5)
    assert np.all((raw > 0) & (raw < 1))
    np.testing.assert_array_equal(phi, break_sticks(sort_sticks(raw)[0]))


def test_omd_uniform_alpha_is_well_ordered():
    phi, _ = sample_omd(4, np.ones(6), np.random.default_rng(11))
    assert check_well_ordered(phi)


def test_omd_mass_skews_right():
    rng = np.random.default_rng(2)
    samples = [sample_omd(10, np.full(10, 5.0), rng)[0] for _ in range(10)]
    summary = prior_summary(samples)
    assert summary.column_mean[-1] > summary.column_mean[0]


@settings(max_examples=200, deadline=None)
@given(K=st.integers(1, 12), alpha=alphas, seed=st.integers(0, 2**32 - 1))
def test_omd_always_well_ordered_and_stochastic(K, alpha, seed):
    phi, raw = sample_omd(K, alpha, np.random.default_rng(seed))
    assert is_stochastic(phi)
    assert check_well_ordered(phi, tol=1e-12)
    assert is_well_ordered_pairwise(phi, tol=1e-12)
    assert sticks_sorted(sort_sticks(raw)[0])


@settings(max_examples=100, deadline=None)
@given(K=st.integers(1, 8), alpha=alphas, seed=st.integers(0, 2**32 - 1))
def test_second_column_cdf_expansion(K, alpha, seed):
    phi, raw = sample_omd(K, alpha, np.random.default_rng(seed))
    if phi.shape[1] < 3:
        return
    beta2 = sort_sticks(raw)[0][:, 1]
    expected = phi[:, 0] - phi[:, 0] * beta2 + beta2
    np.testing.assert_allclose(row_cdf(phi)[:, 1], expected, rtol=0, atol=1e-12)


def test_omd_k1_first_column_is_beta():
    alpha = np.array([2.0, 1.0, 3.0])
    rng = np.random.default_rng(7)
    first = np.array([sample_omd(1, alpha, rng)[0][0, 0] for _ in range(10_000)])
    direct = np.random.default_rng(8).beta(alpha[0], alpha[1:].sum(), size=10_000)
    assert stats.ks_2samp(first, direct).pvalue > 0.001


# ---- sample_bmd

def test_bmd_k3_zero_pattern():
    m = sample_bmd(BandSpec(1, 3), (1, 1, 1), np.random.default_rng(0))
    zero = m == 0
    expected = np.zeros((3, 3), bool)
    expected[0, 2] = expected[2, 0] = True
    np.testing.assert_array_equal(zero, expected)
    assert is_stochastic(m)


def test_bmd_k2_dense():
    m = sample_bmd(BandSpec(1, 2), (1, 1, 1), np.random.default_rng(0))
    assert np.all(m > 0) and is_stochastic(m)


def test_bmd_edge_rows_use_available_slots():
    conc = band_concentrations(BandSpec(1, 4), (2.0, 3.0, 5.0))
    # first row: steady then escalating; last row: de-escalating then steady
    np.testing.assert_array_equal(conc[0], [5.0, 2.0])
    np.testing.assert_array_equal(conc[1], [3.0, 5.0, 2.0])
    np.testing.assert_array_equal(conc[3], [3.0, 5.0])


def test_bmd_bandwidth_must_be_below_height():
    with pytest.raises(InvalidParameterError):
        BandSpec(3, 3)
    with pytest.raises(InvalidParameterError):
        BandSpec(0, 3)


@settings(max_examples=50, deadline=None)
@given(K=st.integers(2, 9), b=st.integers(1, 8), seed=st.integers(0, 10_000))
def test_bmd_band_exact(K, b, seed):
    if b >= K:
        return
    spec = BandSpec(b, K)
    m = sample_bmd(spec, (1.0, 2.0, 3.0), np.random.default_rng(seed))
    assert np.all(m[~spec.mask()] == 0.0)
    assert is_stochastic(m)


# ---- check_well_ordered / row_cdf

def test_identity_is_ordered():
    assert check_well_ordered(np.eye(3))


def test_reversed_rows_not_ordered():
    assert not check_well_ordered(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_uniform_is_ordered():
    assert check_well_ordered(np.full((4, 5), 0.2))


def test_tolerance_is_respected():
    m = np.array([[0.5, 0.5], [0.5 + 1e-13, 0.5 - 1e-13]])
    assert check_well_ordered(m, tol=1e-12)
    assert not check_well_ordered(m, tol=0.0)


def test_row_cdf_examples():
    np.testing.assert_allclose(row_cdf(np.array([[0.5, 0.3, 0.2]])), [[0.5, 0.8, 1.0]])
    np.testing.assert_array_equal(row_cdf(np.eye(3))[1], [0, 1, 1])


@settings(max_examples=100, deadline=None)
@given(K=st.integers(1, 6), A=st.integers(2, 6), seed=st.integers(0, 10_000))
def test_check_matches_pairwise_definition(K, A, seed):
    m = np.random.default_rng(seed).dirichlet(np.full(A, 0.5), size=K)
    assert check_well_ordered(m) == is_well_ordered_pairwise(m)


# ---- prior_summary

def test_summary_of_uniform_matrix():
    s = prior_summary([np.full((3, 4), 0.25)])
    np.testing.assert_allclose(s.column_mean, 0.25)
    assert s.n_samples == 1


def test_summary_smd_symmetric():
    rng = np.random.default_rng(4)
    s = prior_summary([sample_smd(10, np.ones(5), rng) for _ in range(10)])
    np.testing.assert_allclose(s.column_mean, 0.2, atol=0.05)


def test_summary_empty_rejected():
    with pytest.raises(InvalidArgumentError):
        prior_summary([])


# ---- sticks and log priors

@settings(max_examples=50, deadline=None)
@given(K=st.integers(1, 5), A=st.integers(2, 7), seed=st.integers(0, 10_000))
def test_sticks_round_trip(K, A, seed):
    m = np.random.default_rng(seed).dirichlet(np.ones(A), size=K)
    np.testing.assert_allclose(break_sticks(matrix_to_sticks(m)), m, atol=1e-12)


def test_boundary_rows_have_unit_sticks_after_empty_remainder():
    sticks = matrix_to_sticks(np.array([[0.8, 0.2, 0.0, 0.0]]))
    np.testing.assert_allclose(sticks, [[0.8, 1.0, 1.0]])


def test_omd_log_prior_support():
    phi, _ = sample_omd(3, np.ones(3), np.random.default_rng(0))
    assert np.isfinite(matrix_log_prior(phi, "omd", np.ones(3)))
    assert matrix_log_prior(np.array([[0.1, 0.9], [0.9, 0.1]]), "omd", np.ones(2)) == -np.inf


def test_bmd_log_prior_support():
    band = BandSpec(1, 3)
    m = sample_bmd(band, (1, 1, 1), np.random.default_rng(0))
    assert np.isfinite(matrix_log_prior(m, "bmd", band=band))
    m[0, 2] = 1e-3
    m[0] /= m[0].sum()
    assert matrix_log_prior(m, "bmd", band=band) == -np.inf


def test_smd_log_prior_flat_for_uniform_two_columns():
    # a single Beta(1, 1) stick has density 1
    m = np.array([[0.3, 0.7]])
    assert matrix_log_prior(m, "smd", np.ones(2)) == pytest.approx(0.0, abs=1e-12)


def test_prior_config_names():
    cfg = PriorConfig.from_name("smd+bmd")
    assert cfg.name == "SMD+BMD"
    assert cfg.emission_family == "smd" and cfg.transition_family == "bmd"
    with pytest.raises(InvalidParameterError):
        PriorConfig.from_name("bmd+omd")
    with pytest.raises(InvalidParameterError):
        PriorConfig.from_name("omd")


def test_prior_config_samplers_respect_support():
    rng = np.random.default_rng(0)
    for name in ("omd+omd", "smd+smd", "smd+bmd", "omd+bmd"):
        cfg = PriorConfig.from_name(name)
        phi = cfg.sample_emission(4, 6, rng)
        pi = cfg.sample_transition(4, rng)
        assert is_stochastic(phi) and is_stochastic(pi)
        assert np.isfinite(cfg.emission_log_prior(phi))
        assert np.isfinite(cfg.transition_log_prior(pi))
        if cfg.emission_family == "omd":
            assert check_well_ordered(phi)

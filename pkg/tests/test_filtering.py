import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmqa.filtering import (
    BetaParticle,
    DegenerateWeightsError,
    Ensemble,
    FilterConfig,
    NoDataError,
    SharedStateTally,
    g1_weight,
    g2_weight,
    init_ensemble,
    k1,
    phase_from_probability,
    posterior_summary,
    resample_multinomial,
    rho0,
    spawn_beta_layer,
    step,
    update_lengthscale_h2,
    update_map_h1,
    update_tallies,
)
from nmqa.lattice import build_grid
from nmqa.measurement import MESSAGE, PHYSICAL, MeasurementOutcome, NoiseParams, simulate_measurement
from nmqa.sharing import MessageBatch, generate_particle_messages


def rho0_mp(sigma_v, b=0.5):
    with mpmath.workdps(40):
        s = mpmath.sqrt(2 * mpmath.mpf(sigma_v))
        a = 2 * mpmath.mpf(b) / s
        c = s / (2 * b) / mpmath.sqrt(mpmath.pi)
        return float(mpmath.erf(a) + c * mpmath.exp(-a * a) - c)


# --- likelihood constants -------------------------------------------------

def test_rho0_values():
    assert rho0(1e-4) == pytest.approx(0.9920212, abs=5e-8)
    assert abs(rho0(1e-4) - rho0_mp(1e-4)) < 1e-12
    assert rho0(1e-8) == pytest.approx(1 - math.sqrt(2e-8) / math.sqrt(math.pi), abs=1e-9)
    assert rho0(1e-8) == pytest.approx(0.99992, abs=1e-5)


@pytest.mark.parametrize("bad", [1.0, 2.0, 0.0, -1e-3])
def test_rho0_rejects_out_of_regime(bad):
    with pytest.raises(ValueError):
        rho0(bad)


def test_k1_near_one_for_narrow_error():
    assert k1(0.0, 1e-6) == pytest.approx(1.0, abs=1e-15)
    assert k1(0.0, 10.0) < 1.0


def test_g1_special_values():
    r = rho0(1e-4)
    assert g1_weight(np.pi / 2, 0) == pytest.approx(r / 2)
    assert g1_weight(np.pi / 2, 1) == pytest.approx(r / 2)
    assert g1_weight(0.0, 1) == pytest.approx(r)
    assert g1_weight(0.0, 0) == pytest.approx(0.0, abs=1e-16)


@given(st.floats(0, math.pi), st.sampled_from([1e-4, 1e-6, 1e-3]))
def test_g1_sums_to_rho0(f, sigma_v):
    assert abs(g1_weight(f, 0, sigma_v) + g1_weight(f, 1, sigma_v) - rho0(sigma_v)) <= 1e-12


# --- g2 ------------------------------------------------------------------

def test_g2_empty_neighbourhood_is_one():
    a = build_grid(3, 3)
    cfg = FilterConfig(r_min=0.5, r_max=4.0)
    f = np.full(9, 1.0)
    w = g2_weight(BetaParticle(0, 0.5), f, 4, a, SharedStateTally.zeros(9), cfg)
    assert w == 1.0


def test_g2_single_neighbour_zero_residual():
    a = build_grid(1, 2)
    cfg = FilterConfig(r_min=1.0, r_max=2.0, lambda2=0.0)
    tally = SharedStateTally.zeros(2)
    tally.update(MeasurementOutcome(1, 1, PHYSICAL))
    w = g2_weight(BetaParticle(0, 1.5), np.array([1.0, 2.0]), 0, a, tally, cfg)
    oracle = 1.0 / (k1(0.0, 1e-6) * math.sqrt(2 * math.pi * 1e-6))
    assert w == pytest.approx(oracle, rel=1e-12)
    assert w == pytest.approx(398.9422804, rel=1e-9)


def test_g2_independent_of_beta_when_lambda2_zero():
    a = build_grid(1, 4)
    cfg = FilterConfig(r_min=3.0, r_max=4.0, lambda2=0.0)
    tally = SharedStateTally.zeros(4)
    for q in range(4):
        tally.update(MeasurementOutcome(q, 0, PHYSICAL))
    f = np.array([0.3, 1.0, 2.0, 2.5])
    ws = {g2_weight(BetaParticle(0, r), f, 0, a, tally, cfg) for r in (3.0, 3.5, 4.0)}
    assert len(ws) == 1


def test_g2_rejects_out_of_range_beta():
    a = build_grid(1, 2)
    with pytest.raises(ValueError):
        g2_weight(BetaParticle(0, 9.0), np.zeros(2), 0, a, SharedStateTally.zeros(2), FilterConfig(r_max=2.0))


# --- h1 and tallies ------------------------------------------------------

def test_h1_endpoints_and_midpoint():
    assert phase_from_probability(1.0) == 0.0
    assert phase_from_probability(0.0) == pytest.approx(math.pi)
    assert phase_from_probability(0.5) == pytest.approx(math.pi / 2)


def test_h1_case_table():
    assert update_map_h1(3, 5, 0.8, 0.1, 0.0) == pytest.approx(math.acos(2 * 0.8 - 1))
    assert update_map_h1(1, 1, 1.0, 0.0, 1.0) == pytest.approx(math.pi / 2)
    assert update_map_h1(2, 0, 0.25, 0.9, 0.7) == pytest.approx(math.acos(-0.5))
    assert update_map_h1(0, 4, 0.0, 0.75, 0.7) == pytest.approx(math.acos(0.5))
    with pytest.raises(NoDataError):
        update_map_h1(0, 0, 0.0, 0.0, 0.5)


def test_h1_clips_rounding():
    assert phase_from_probability(1.0 + 1e-15) == 0.0
    assert phase_from_probability(-1e-15) == pytest.approx(math.pi)


def test_h1_inversion_grid():
    f = np.linspace(0, np.pi, 2001)
    assert np.max(np.abs(phase_from_probability(0.5 * np.cos(f) + 0.5) - f)) <= 1e-12


@given(st.floats(1e-3, math.pi - 1e-3))
def test_h1_inverts_born_rule(f):
    assert abs(phase_from_probability(0.5 * math.cos(f) + 0.5) - f) <= 1e-12


def test_tally_running_means():
    t = SharedStateTally.zeros(3)
    update_tallies(t, MeasurementOutcome(0, 1, PHYSICAL))
    assert (t.tau[0], t.kappa[0]) == (1, 1.0)
    t = SharedStateTally.zeros(3)
    for b in (1, 0, 1):
        t.update(MeasurementOutcome(1, b, PHYSICAL))
    assert t.tau[1] == 3 and t.kappa[1] == pytest.approx(2 / 3)
    t.update(MeasurementOutcome(2, 1, MESSAGE))
    assert t.tau[2] == 0 and t.kappa[2] == 0.0
    assert t.phi[2] == 1 and t.gamma[2] == 1.0


def test_message_batch_tallies_per_particle():
    t = SharedStateTally.zeros(2, n_particles=3)
    mask = np.array([[True, False], [True, True], [False, False]])
    bits = np.array([[True, False], [False, True], [False, False]])
    t.add_messages(MessageBatch(mask, bits))
    np.testing.assert_array_equal(t.phi, mask.astype(int))
    np.testing.assert_allclose(t.gamma, [[1, 0], [0, 1], [0, 0]])
    t.reindex(np.array([1, 1, 0]))
    np.testing.assert_array_equal(t.phi, [[1, 1], [1, 1], [1, 0]])


# --- ensemble, beta layer, resampling -------------------------------------

def test_init_ensemble_uniform(rng):
    a = build_grid(1, 3)
    e = init_ensemble(FilterConfig(n_alpha=100), a, rng)
    assert len(e) == 100
    np.testing.assert_allclose(e.weights, 0.01)
    big = init_ensemble(FilterConfig(n_alpha=10_000), a, rng)
    tol = 4 * (math.pi / math.sqrt(12)) / 100
    assert np.all(np.abs(big.f.mean(axis=0) - math.pi / 2) < tol)
    fixed = init_ensemble(FilterConfig(n_alpha=50, r_min=1.0, r_max=1.0), a, rng)
    assert np.all(fixed.r == 1.0)


def test_beta_layer(rng):
    cfg = FilterConfig(r_min=1.0, r_max=3.0)
    layer = spawn_beta_layer(20, cfg, rng, size=100)
    assert layer.shape == (100, 20)
    assert layer.min() >= 1.0 and layer.max() <= 3.0
    draws = spawn_beta_layer(10_000, cfg, rng)
    assert abs(draws.mean() - 2.0) < 4 * (2.0 / math.sqrt(12)) / 100
    same = spawn_beta_layer(5, FilterConfig(r_min=2.0, r_max=2.0), rng)
    assert np.all(same == 2.0)


def test_resample_point_mass(rng):
    items = np.array([10, 20, 30, 40])
    out, idx = resample_multinomial(items, [1, 0, 0, 0], 50, rng)
    assert np.all(out == 10) and np.all(idx == 0)


def test_resample_uniform_chi_square(rng):
    from scipy import stats

    n = 50
    counts = np.zeros(n)
    for _ in range(200):
        _, idx = resample_multinomial(np.arange(n), np.ones(n), n, rng)
        counts += np.bincount(idx, minlength=n)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_resample_expected_offspring(rng):
    w = np.array([0.5, 0.3, 0.15, 0.05])
    count, reps = 40, 2000
    totals = np.zeros(4)
    for _ in range(reps):
        _, idx = resample_multinomial(np.arange(4), w, count, rng)
        totals += np.bincount(idx, minlength=4)
    mean = totals / reps
    sd = np.sqrt(count * w * (1 - w) / reps)
    assert np.all(np.abs(mean - count * w) < 4 * sd)


def test_resample_all_zero_weights(rng):
    with pytest.raises(DegenerateWeightsError):
        resample_multinomial(np.arange(3), np.zeros(3), 3, rng)


def test_h2_means():
    assert update_lengthscale_h2([2.0, 2.0, 2.0]) == 2.0
    assert update_lengthscale_h2([1.0, 3.0]) == 2.0


def test_h2_point_mass_limit(rng):
    r = np.array([1.2, 2.7, 3.9])
    survivors, _ = resample_multinomial(r, [1e-12, 1.0, 1e-12], 25, rng)
    assert update_lengthscale_h2(survivors) == pytest.approx(2.7)


# --- posterior summary ----------------------------------------------------

def test_summary_degenerate_and_two_point(rng):
    e = Ensemble(np.ones((5, 3)), np.ones((5, 3)), np.full(5, 0.2))
    assert np.all(posterior_summary(e).f_var == 0)
    two = Ensemble(np.array([[0.0], [np.pi]]), np.ones((2, 1)), np.array([0.5, 0.5]))
    s = posterior_summary(two)
    assert s.f_mean[0] == pytest.approx(np.pi / 2)
    assert s.f_var[0] == pytest.approx(np.pi**2 / 4)


def test_summary_fresh_ensemble_variance(rng):
    e = init_ensemble(FilterConfig(n_alpha=10_000), build_grid(1, 2), rng)
    v = posterior_summary(e).f_var
    # variance of the sample variance for a uniform on [0, pi]: (mu4 - sigma^4) / n
    sd = math.sqrt((math.pi**4 / 80 - (math.pi**2 / 12) ** 2) / 10_000)
    assert np.all(np.abs(v - math.pi**2 / 12) < 4 * sd)


# --- one filter step ------------------------------------------------------

def _run_steps(cfg, array, truth, T, rng):
    ens = init_ensemble(cfg, array, rng)
    tally = SharedStateTally.zeros(array.d, cfg.n_alpha)
    pending = MessageBatch.empty(array.d, cfg.n_alpha)
    for t in range(T):
        j = t % array.d
        out = MeasurementOutcome(j, simulate_measurement(truth[j], 1e-4, rng), PHYSICAL)
        ens, tally = step(ens, tally, out, pending, cfg, array, rng)
        yield ens, tally
        pending = generate_particle_messages(ens.f, ens.r, j, array, tally.tau, cfg.lambda2, cfg.k0, rng)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_step_conserves_count_and_ranges(l1, l2, seed):
    rng = np.random.default_rng(seed)
    a = build_grid(2, 3)
    cfg = FilterConfig(n_alpha=30, n_beta=6, lambda1=l1, lambda2=l2, r_min=1.0, r_max=a.diameter)
    truth = np.linspace(0.2, 2.9, a.d)
    for ens, tally in _run_steps(cfg, a, truth, 18, rng):
        assert len(ens) == cfg.n_alpha == ens.f.shape[0] == tally.phi.shape[0]
        assert np.all((ens.f >= 0) & (ens.f <= np.pi))
        assert np.all((ens.r >= cfg.r_min) & (ens.r <= cfg.r_max))
        assert ens.weights.sum() == pytest.approx(1.0)


def test_step_reduces_to_empirical_estimate(rng):
    a = build_grid(1, 4)
    cfg = FilterConfig(n_alpha=40, n_beta=5, r_min=1.0, r_max=3.0)
    truth = np.array([0.4, 1.0, 2.0, 2.8])
    for ens, tally in _run_steps(cfg, a, truth, 40, rng):
        pass
    expected = np.arccos(2 * tally.kappa - 1)
    np.testing.assert_allclose(ens.f, np.broadcast_to(expected, ens.f.shape), atol=1e-12)


def test_step_rejects_message_as_physical(rng):
    a = build_grid(1, 2)
    cfg = FilterConfig(n_alpha=4, n_beta=2)
    ens = init_ensemble(cfg, a, rng)
    with pytest.raises(ValueError):
        step(ens, SharedStateTally.zeros(2), MeasurementOutcome(0, 1, MESSAGE), [], cfg, a, rng)


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(lambda1=1.5)
    with pytest.raises(ValueError):
        FilterConfig(r_min=3.0, r_max=2.0)
    with pytest.raises(ValueError):
        FilterConfig(k0=0.5)
    with pytest.raises(ValueError):
        FilterConfig(noise=NoiseParams(sigma_v=1.0))

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simcap import metrics
from simcap.channel import draw_channel, draw_gtilde, rng_for, trial_seed
from simcap.scene import identity_scene
from simcap.simstack import CompositeResponse, PhaseProfile, composite

GAMMA = 0.5772156649015329
LN2 = math.log(2.0)


def identity_comp(scene):
    return composite(PhaseProfile.zeros(scene), scene)


def make_comp(p, d):
    return CompositeResponse(p=p, d=d, gram_p=p.conj().T @ p, gram_d=d @ d.conj().T)


# instantaneous / ergodic capacity


def test_instantaneous_capacity_examples():
    assert metrics.instantaneous_capacity(np.array([[1.0]]), 1.0, 1) == pytest.approx(1.0, abs=1e-15)
    assert metrics.instantaneous_capacity(np.eye(2), 2.0, 2) == pytest.approx(2.0, abs=1e-15)
    assert metrics.instantaneous_capacity(np.ones((3, 2)), 0.0) == 0.0
    with pytest.raises(ValueError):
        metrics.instantaneous_capacity(np.array([[np.inf]]), 1.0)


@settings(max_examples=40, deadline=None)
@given(nr=st.integers(1, 5), nt=st.integers(1, 5), rho=st.floats(0.0, 1e6), seed=st.integers(0, 2**31))
def test_instantaneous_capacity_matches_eigenvalues(nr, nt, rho, seed):
    h = draw_gtilde(seed, nr, nt, 1.0)
    eig = np.linalg.eigvalsh(h.conj().T @ h)
    expected = float(np.sum(np.log2(1.0 + rho / nt * np.clip(eig, 0, None))))
    assert metrics.instantaneous_capacity(h, rho) == pytest.approx(expected, rel=1e-10, abs=1e-12)
    assert metrics.instantaneous_capacity(h, rho) >= 0.0


def test_mc_needs_two_trials(small_scene):
    comp = identity_comp(identity_scene(2, 2))
    with pytest.raises(ValueError):
        metrics.ergodic_capacity_mc(identity_scene(2, 2), comp, 1.0, 1, 0)


def test_mc_two_trials_is_plain_average(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(1)), small_scene)
    rho = 1e13
    est = metrics.ergodic_capacity_mc(small_scene, comp, rho, 2, 77)
    caps = [metrics.instantaneous_capacity(draw_channel(small_scene, comp, trial_seed(77, i)).h, rho) for i in range(2)]
    assert est.mean[0] == pytest.approx(np.mean(caps), rel=1e-12)
    assert est.ci_halfwidth[0] == pytest.approx(1.96 * np.std(caps, ddof=1) / math.sqrt(2), rel=1e-9)


def test_mc_siso_rayleigh_oracle():
    # E[log2(1 + |h|^2)] for unit-variance Rayleigh = e E1(1) / ln 2
    sc = identity_scene(1, 1)
    est = metrics.ergodic_capacity_mc(sc, identity_comp(sc), 1.0, 100_000, 3)
    mean, ci = est.at(0)
    assert abs(mean - 0.8603473822708868) <= ci
    assert ci < 0.005


def test_mc_ci_shrinks_like_sqrt_n(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(1)), small_scene)
    a = metrics.ergodic_capacity_mc(small_scene, comp, 1e13, 4000, 5).ci_halfwidth[0]
    b = metrics.ergodic_capacity_mc(small_scene, comp, 1e13, 8000, 5).ci_halfwidth[0]
    assert b / a == pytest.approx(1 / math.sqrt(2), rel=0.15)


def test_mc_deterministic_across_workers(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(1)), small_scene)
    rhos = np.array([1e10, 1e13])
    one = metrics.ergodic_capacity_mc(small_scene, comp, rhos, 700, 9, workers=1)
    many = metrics.ergodic_capacity_mc(small_scene, comp, rhos, 700, 9, workers=4)
    assert np.array_equal(one.mean, many.mean) and np.array_equal(one.ci_halfwidth, many.ci_halfwidth)


# digamma / Wishart


def test_digamma_values():
    assert metrics.digamma(1.0) == pytest.approx(-GAMMA, abs=1e-14)
    assert metrics.digamma(2.0) == pytest.approx(1 - GAMMA, abs=1e-14)
    for x in (0.5, 3.7):
        assert metrics.digamma(x + 1) - metrics.digamma(x) == pytest.approx(1 / x, abs=1e-12)
    for bad in (0.0, -1.5):
        with pytest.raises(ValueError):
            metrics.digamma(bad)


@given(st.integers(1, 200))
def test_digamma_harmonic_identity(n):
    assert metrics.digamma(n) == pytest.approx(-GAMMA + sum(1.0 / k for k in range(1, n)), abs=1e-12)


def test_wishart_logdet_mean_values():
    assert metrics.wishart_logdet_mean(1, 1) == pytest.approx(-GAMMA, abs=1e-14)
    assert metrics.wishart_logdet_mean(2, 3) == pytest.approx(2.5 - 2 * GAMMA, abs=1e-14)
    assert metrics.wishart_logdet_mean(2, 3, 0.5) == pytest.approx(2.5 - 2 * GAMMA + 2 * math.log(0.5), abs=1e-14)
    with pytest.raises(ValueError):
        metrics.wishart_logdet_mean(3, 2)


def _wishart_mc(s, t, draws, seed):
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((draws, t, s)) + 1j * rng.standard_normal((draws, t, s))) / math.sqrt(2)
    samples = np.linalg.slogdet(np.conj(np.swapaxes(g, 1, 2)) @ g)[1]
    return samples.mean(), samples.std(ddof=1) / math.sqrt(draws)


def test_wishart_logdet_mean_monte_carlo():
    # E[ln det] for 2x2 is close to zero, so compare in standard errors rather than relative terms
    mean, se = _wishart_mc(2, 2, 1_000_000, 2024)
    assert abs(mean - metrics.wishart_logdet_mean(2, 2)) < 4 * se
    # the sample variance matches the trigamma sum psi'(2) + psi'(1)
    assert (se * 1000) ** 2 == pytest.approx(math.pi**2 / 6 + math.pi**2 / 6 - 1, rel=0.02)


# lower bound


@pytest.mark.parametrize("n", [1, 2, 4, 8])
@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0, 1e3])
def test_bound_reduces_to_iid_form(n, rho):
    sc = identity_scene(n, n)
    comp = identity_comp(sc)
    psi = sum(metrics.digamma(n - i) for i in range(n))
    expected = n * math.log2(1 + rho / n * math.exp(psi / n))
    for form in metrics.BOUND_FORMS:
        assert metrics.capacity_lower_bound(comp, sc, rho, form=form) == pytest.approx(expected, abs=1e-12)
    assert metrics.matthaiou_bound(n, rho) == pytest.approx(expected, abs=1e-12)


def test_bound_zero_snr(default_scene):
    comp = composite(PhaseProfile.random(default_scene, rng_for(0)), default_scene)
    assert metrics.capacity_lower_bound(comp, default_scene, 0.0) == 0.0
    assert metrics.bound_from_exponent(3.0, 0.0, 4) == (0.0, 0.0)


def test_bound_exponent_matches_direct_evaluation(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(4)), small_scene)
    sc = small_scene
    var = sc.beta / sc.m
    s, t = 12, 16
    direct = (
        sum(metrics.digamma(t - i) for i in range(s))
        + s * math.log(var)
        + np.linalg.slogdet(comp.p.conj().T @ comp.p)[1]
        + np.linalg.slogdet(comp.d @ comp.d.conj().T)[1]
        + np.linalg.slogdet(sc.r_t)[1]
        + np.linalg.slogdet(sc.r_r)[1]
    ) / sc.n_t
    assert metrics.bound_exponent(comp, sc) == pytest.approx(direct, rel=1e-10)
    direct_b = (
        sum(metrics.digamma(4 - i) for i in range(4))
        + 4 * math.log(var)
        + np.linalg.slogdet(comp.p.conj().T @ sc.r_t @ comp.p)[1]
        + np.linalg.slogdet(comp.d @ sc.r_r @ comp.d.conj().T)[1]
    ) / 4
    assert metrics.bound_exponent(comp, sc, form="compressed") == pytest.approx(direct_b, rel=1e-10)


def test_bound_overflow_branch():
    c, vbar = metrics.bound_from_exponent(800.0, 1.0, 2)
    assert c == pytest.approx(2 * (math.log(0.5) + 800.0) / LN2, rel=1e-12)
    assert vbar == pytest.approx(1 / LN2)


def test_rank_deficient_composite_raises():
    sc = identity_scene(2, 2)
    comp = make_comp(np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex), np.eye(2, dtype=complex))
    with pytest.raises(metrics.RankDeficientError, match="rank-deficient composite"):
        metrics.capacity_lower_bound(comp, sc, 1.0)


def test_singular_correlation_raises():
    sc = identity_scene(2, 2)
    sc = type(sc)(sc.w, sc.u, np.ones((2, 2)), sc.r_r, np.ones((2, 2)) / math.sqrt(2), sc.r_r_sqrt, sc.beta)
    with pytest.raises(metrics.RankDeficientError, match="R_T"):
        metrics.capacity_lower_bound(identity_comp(sc), sc, 1.0)


def test_compressed_form_needs_square_link():
    sc = identity_scene(2, 3)
    with pytest.raises(ValueError, match="N_r = N_t"):
        metrics.capacity_lower_bound(identity_comp(sc), sc, 1.0, form="compressed")
    with pytest.raises(ValueError):
        metrics.capacity_lower_bound(identity_comp(sc), sc, 1.0, form="other")


def test_bound_below_mc_default_config(default_config, default_scene):
    comp = composite(PhaseProfile.random(default_scene, rng_for(trial_seed(1, 0))), default_scene)
    rho = default_config.snr_linear
    mc = metrics.ergodic_capacity_mc(default_scene, comp, rho, 10_000, 1)
    for form in metrics.BOUND_FORMS:
        assert metrics.capacity_lower_bound(comp, default_scene, rho, form=form) <= mc.mean[0] + mc.ci_halfwidth[0]


def test_monotone_in_snr(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(8)), small_scene)
    rhos = np.logspace(8, 18, 20)
    for form in metrics.BOUND_FORMS:
        c = [metrics.capacity_lower_bound(comp, small_scene, r, form=form) for r in rhos]
        assert np.all(np.diff(c) >= 0)
    mc = metrics.ergodic_capacity_mc(small_scene, comp, rhos, 500, 2)
    assert np.all(np.diff(mc.mean) >= 0)


def test_minkowski_per_realisation():
    n, a = 2, 5.0
    for i in range(1000):
        h = draw_gtilde(trial_seed(31, i), n, n, 1.0)
        hh = h @ h.conj().T
        lhs = np.linalg.det(np.eye(n) + a * hh).real ** (1 / n)
        rhs = 1 + a * abs(np.linalg.det(hh)) ** (1 / n)
        assert lhs >= rhs * (1 - 1e-12)


@pytest.mark.parametrize("s,t", [(2, 2), (2, 4), (4, 8)])
def test_wishart_identity_mc(s, t):
    mean, se = _wishart_mc(s, t, 100_000, s * 10 + t)
    exact = metrics.wishart_logdet_mean(s, t)
    assert abs(mean - exact) < 4 * se
    if s != t:
        assert abs(mean - exact) / abs(exact) < 0.01


# low-SNR metrics


def test_dispersion_examples():
    for n in (1, 3, 10):
        assert metrics.dispersion(np.eye(n)) == pytest.approx(1.0, abs=1e-15)
    assert metrics.dispersion(np.diag([2.0, 0.0])) == pytest.approx(2.0)
    assert metrics.dispersion(np.diag([1.0, 1.0, 1.0, 0.0])) == pytest.approx(4 / 3)
    with pytest.raises(ValueError):
        metrics.dispersion(np.zeros((2, 2)))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 12), rank=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_dispersion_bounds(n, rank, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, min(n, rank))) + 1j * rng.normal(size=(n, min(n, rank)))
    z = metrics.dispersion(x @ x.conj().T)
    assert 1.0 - 1e-12 <= z <= n + 1e-12


def test_min_energy_per_bit_identity():
    sc = identity_scene(4, 2)
    comp = identity_comp(sc)
    assert metrics.min_energy_per_bit(comp, sc) == pytest.approx(LN2 / 2, abs=1e-15)
    scaled = make_comp(3.0 * comp.p, comp.d)
    assert metrics.min_energy_per_bit(scaled, sc) == pytest.approx(LN2 / 2 / 9, rel=1e-14)


def test_min_energy_per_bit_matches_trace_formula(default_scene):
    comp = composite(PhaseProfile.random(default_scene, rng_for(12)), default_scene)
    p, d, sc = comp.p, comp.d, default_scene
    oracle = 8 * LN2 / (np.trace(sc.r_t @ p @ p.conj().T).real * np.trace(sc.r_r @ d.conj().T @ d).real)
    assert metrics.min_energy_per_bit(comp, sc) == pytest.approx(oracle, rel=1e-12)
    assert metrics.to_db(metrics.min_energy_per_bit(comp, sc)) == pytest.approx(10 * math.log10(oracle), rel=1e-12)


def test_wideband_slope_examples():
    for (nt, nr), expected in (((8, 8), 8.0), ((4, 2), 16 / 6)):
        sc = identity_scene(nt, nr)
        assert metrics.wideband_slope(identity_comp(sc), sc) == pytest.approx(expected, abs=1e-12)
    sc = identity_scene(4, 4)
    rank1 = make_comp(np.outer(np.ones(4), [1, 0, 0, 0]).astype(complex) + 1e-9, np.eye(4, dtype=complex))
    zeta_t, _ = metrics.correlation_dispersions(rank1, sc)
    assert zeta_t == pytest.approx(4.0, rel=1e-6)
    assert metrics.wideband_slope(rank1, sc) < 4.0


def test_wideband_slope_matches_trace_formula(small_scene):
    comp = composite(PhaseProfile.random(small_scene, rng_for(6)), small_scene)
    sc = small_scene
    xt = sc.r_t @ comp.p @ comp.p.conj().T
    xr = sc.r_r @ comp.d.conj().T @ comp.d
    zt, zr = metrics.dispersion(xt), metrics.dispersion(xr)
    s0 = metrics.wideband_slope(comp, sc)
    assert s0 == pytest.approx(2 * 16 / (4 * zt + 4 * zr), rel=1e-10)
    assert 0 < s0 <= 2 * 16 / 8


def test_low_snr_capacity():
    assert metrics.low_snr_capacity(0.5, 8.0, 0.5) == 0.0
    assert metrics.low_snr_capacity(1.0, 8.0, 0.5) == pytest.approx(8.0)
    assert metrics.low_snr_capacity(0.1, 8.0, 0.5) == 0.0
    np.testing.assert_allclose(metrics.low_snr_capacity(np.array([1.0, 2.0]), 2.0, 1.0), [0.0, 2.0])


def test_low_snr_expansion_matches_mc():
    # unit-variance iid: C ~ rho N_r / ln 2 as rho -> 0
    sc = identity_scene(4, 4)
    rho = 1e-3
    mc = metrics.ergodic_capacity_mc(sc, identity_comp(sc), rho, 20_000, 4)
    assert mc.mean[0] == pytest.approx(rho * 4 / LN2, rel=0.05)


# reports


def test_capacity_reports(small_scene, caplog):
    comp = composite(PhaseProfile.random(small_scene, rng_for(3)), small_scene)
    with caplog.at_level(logging.WARNING):
        reps = metrics.capacity_reports(small_scene, comp, [1e12, 1e14], 300, 5)
    assert not caplog.records
    assert len(reps) == 2 and all(r.bound_holds for r in reps)
    fields = reps[0].csv_fields()
    assert len(fields) == len(metrics.CSV_HEADER)
    assert fields[0] == pytest.approx(120.0)
    assert fields[-2:] == (300, 5)
    assert all(r.c_lb >= 0 and r.c_mc >= 0 for r in reps)


def test_logdet_helpers():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    assert metrics.logdet_pd(a) == pytest.approx(math.log(11.0))
    x = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    assert metrics.logdet_gram(x) == pytest.approx(np.linalg.slogdet(x.T @ x)[1])
    with pytest.raises(metrics.RankDeficientError):
        metrics.logdet_pd(np.zeros((2, 2)))
    with pytest.raises(metrics.RankDeficientError):
        metrics.logdet_gram(np.ones((3, 2)))

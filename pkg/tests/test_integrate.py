import math

import numpy as np
import pytest

from carleson_lab import geometry_ball as g
from carleson_lab.errors import AnalysisError, ParameterError
from carleson_lab.integrate import (
    BetaRadialComponent,
    MCConfig,
    PullbackBallComponent,
    UniformBallComponent,
    integrate_density,
    integrate_mixture,
    sample_unit_ball,
)


def norm_sq_rows(pts):
    return np.einsum("ij,ij->i", pts, np.conj(pts)).real


# -- sampling ----------------------------------------------------------------

def test_unit_ball_samples_interior_and_deterministic():
    a = sample_unit_ball(2, 5000, 9)
    b = sample_unit_ball(2, 5000, 9)
    assert np.array_equal(a, b)
    assert np.all(np.linalg.norm(a, axis=1) < 1.0)


def test_unit_ball_norm_sq_mean():
    # E ||z||^2 = n / (n+1)
    for n in (1, 2, 3):
        pts = sample_unit_ball(n, 100_000, n)
        vals = norm_sq_rows(pts)
        se = vals.std() / math.sqrt(len(vals))
        assert abs(vals.mean() - n / (n + 1)) < 3 * se


def test_unit_ball_radius_law():
    # P(||z|| <= t) = t^(2n)
    pts = sample_unit_ball(2, 50_000, 4)
    t = 0.7
    frac = np.mean(np.linalg.norm(pts, axis=1) <= t)
    p = t**4
    assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / len(pts))


def test_sample_count_validation():
    with pytest.raises(ParameterError):
        sample_unit_ball(1, 0, 0)


# -- integrate_density -------------------------------------------------------

def test_constant_integrand_is_exact():
    est = integrate_density(lambda p: np.ones(len(p)), 2, MCConfig(seed=0, n_samples=2000))
    assert est.value == pytest.approx(1.0, abs=1e-15)
    assert est.std_error == 0.0


def test_radial_integrand_dim_one():
    # integral of (1 - |z|^2) over the disk = 1/2
    est = integrate_density(lambda p: 1.0 - norm_sq_rows(p), 1, MCConfig(seed=1, n_samples=40_000))
    assert abs(est.value - 0.5) < 3 * est.std_error + 1e-12


def test_ellipsoid_region_with_constant_gives_volume():
    ball = g.kobayashi_ball([0.6], 0.5)
    est = integrate_density(lambda p: np.ones(len(p)), ball, MCConfig(seed=2, n_samples=2000))
    assert est.value == pytest.approx(g.ball_volume([0.6], 0.5), rel=1e-12)
    assert est.std_error == 0.0


def test_ellipsoid_region_nonconstant():
    # integral over a metric ball at the origin of |z|^2 (n=1):
    # = int_0^r t^2 2t dt = r^4 / 2
    ball = g.kobayashi_ball(np.zeros(1), 0.5)
    est = integrate_density(lambda p: norm_sq_rows(p), ball, MCConfig(seed=3, n_samples=60_000))
    assert abs(est.value - 0.5**4 / 2) < 3 * est.std_error


def test_min_samples_enforced():
    with pytest.raises(ParameterError):
        integrate_density(lambda p: np.ones(len(p)), 1, MCConfig(seed=0, n_samples=50))


def test_custom_strata_radii():
    cfg = MCConfig(seed=5, n_samples=20_000, strata=(0.3, 0.6, 0.9))
    est = integrate_density(lambda p: 1.0 - norm_sq_rows(p), 1, cfg)
    assert abs(est.value - 0.5) < 4 * est.std_error + 1e-3
    with pytest.raises(ParameterError):
        integrate_density(lambda p: np.ones(len(p)), 1, MCConfig(seed=0, n_samples=1000, strata=(0.9, 0.3)))


def test_pole_importance_matches_exact_mass():
    # integral of (1 - |z|^2)^(-1/2) over the disk: u = t^2, = int_0^1 (1-u)^(-1/2) du = 2
    def f(p):
        return (1.0 - norm_sq_rows(p)) ** (-0.5)

    est = integrate_density(f, 1, MCConfig(seed=6, n_samples=80_000), boundary_pole_order=0.5)
    assert est.std_error < 0.02
    assert abs(est.value - 2.0) < 3 * est.std_error


def test_pole_order_validation():
    with pytest.raises(ParameterError):
        integrate_density(lambda p: np.ones(len(p)), 1, MCConfig(seed=0, n_samples=1000), boundary_pole_order=1.0)


def test_complex_integrand():
    # integral of z over the disk vanishes by symmetry
    est = integrate_density(lambda p: p[:, 0], 1, MCConfig(seed=7, n_samples=40_000))
    assert abs(est.value) < 4 * est.std_error + 1e-3


def test_nonfinite_samples_raise():
    def bad(p):
        out = np.ones(len(p))
        out[::7] = np.inf
        return out

    with pytest.raises(AnalysisError):
        integrate_density(bad, 1, MCConfig(seed=8, n_samples=2000))


def test_determinism_across_substream_counts_is_stable_per_config():
    cfg = MCConfig(seed=10, n_samples=10_000, substreams=4)
    f = lambda p: 1.0 - norm_sq_rows(p)
    a = integrate_density(f, 2, cfg)
    b = integrate_density(f, 2, cfg)
    assert a.value == b.value and a.std_error == b.std_error


def test_thread_env_does_not_change_result(monkeypatch):
    cfg = MCConfig(seed=11, n_samples=20_000, substreams=8)
    f = lambda p: (1.0 - norm_sq_rows(p)) ** 2
    base = integrate_density(f, 2, cfg)
    monkeypatch.setenv("CARLESON_LAB_THREADS", "4")
    threaded = integrate_density(f, 2, cfg)
    assert threaded.value == base.value
    assert threaded.std_error == base.std_error


def test_calibration_coverage():
    # known integral, 200 repetitions: the 3-sigma interval must cover >= 95%
    hits = 0
    truth = 0.5
    for seed in range(200):
        est = integrate_density(
            lambda p: 1.0 - norm_sq_rows(p), 1, MCConfig(seed=seed, n_samples=2000)
        )
        lo, hi = est.interval(3.0)
        hits += lo <= truth <= hi
    assert hits >= 190


# -- mixture sampler ---------------------------------------------------------

def test_component_densities_integrate_to_one():
    # each proposal density must be a probability density w.r.t. volume
    rng = np.random.default_rng(0)
    pts = g.uniform_round_ball(rng, 2, 200_000)
    for comp in (
        BetaRadialComponent(2, 0.375),
        PullbackBallComponent(np.array([0.5, 0.1j]), 0.8),
        UniformBallComponent(2),
    ):
        vals = comp.density(pts)
        mean = vals.mean()
        se = vals.std() / math.sqrt(len(vals))
        assert abs(mean - 1.0) < 4 * se + 1e-9


def test_mixture_estimates_known_integral():
    z = np.array([0.9, 0.0])
    comps = [UniformBallComponent(2), PullbackBallComponent(z, 0.9)]

    def f(p):
        return 1.0 - norm_sq_rows(p)

    est = integrate_mixture(f, comps, [0.5, 0.5], MCConfig(seed=3, n_samples=40_000))
    # E (1 - ||z||^2) over B^2 = 1/3
    assert abs(est.value - 1.0 / 3.0) < 3 * est.std_error


def test_mixture_weight_validation():
    comps = [UniformBallComponent(1)]
    with pytest.raises(ParameterError):
        integrate_mixture(lambda p: np.ones(len(p)), comps, [0.5, 0.5], MCConfig(seed=0, n_samples=1000))

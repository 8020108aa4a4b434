import math

import numpy as np
import pytest

from carleson_lab import geometry_ball as g
from carleson_lab import measures as ms
from carleson_lab.errors import ParameterError, ValidationError
from carleson_lab.integrate import MCConfig


CFG = MCConfig(seed=11, n_samples=20_000)


# -- Measure model ------------------------------------------------------------

def test_negative_atom_weight_rejected():
    with pytest.raises(ValidationError):
        ms.Measure.from_atoms([[0.1]], [-1.0])


def test_atoms_outside_ball_rejected():
    with pytest.raises(ValidationError):
        ms.Measure.from_atoms([[1.2]], [1.0])


def test_total_mass_of_volume_is_one():
    est = ms.Measure.lebesgue(2).total_mass(CFG)
    assert est.value == pytest.approx(1.0, abs=1e-12)


def test_total_mass_power_density_dim_one():
    # integral of (1 - t^2)^s over the disk = 1 / (1 + s)
    for s in (-0.5, 0.5, 1.0):
        mu = ms.Measure.with_power_density(1, s)
        est = mu.total_mass(MCConfig(seed=4, n_samples=60_000))
        assert abs(est.value - 1.0 / (1.0 + s)) < 3 * est.std_error + 1e-12, s


def test_scaling_and_additivity():
    mu = ms.Measure.from_atoms([[0.1], [0.2]], [1.0, 2.0])
    scaled = mu.scaled(3.0)
    assert np.allclose(scaled.atom_weights, [3.0, 6.0])
    both = mu + ms.Measure.dirac([0.3], 5.0)
    assert both.n_atoms == 3
    assert math.fsum(both.atom_weights) == pytest.approx(8.0)


def test_config_roundtrip():
    mu = ms.Measure(
        dimension=1,
        atom_points=np.array([[0.1 + 0.2j]]),
        atom_weights=np.array([0.5]),
        density=ms.PowerDensity(-0.5),
    )
    clone = ms.Measure.from_config(mu.to_config())
    assert clone.dimension == 1
    assert np.allclose(clone.atom_points, mu.atom_points)
    assert clone.density.exponent == -0.5
    assert clone.pole_order == 0.5


# -- measure_of_ball ----------------------------------------------------------

def test_ball_mass_of_volume_matches_volume():
    ball = g.kobayashi_ball([0.5], 0.4)
    est = ms.measure_of_ball(ms.Measure.lebesgue(1), ball, CFG)
    assert abs(est.value - ball.volume) < 3 * est.std_error + 1e-12


def test_ball_mass_counts_atoms_exactly():
    ball0 = g.kobayashi_ball(np.zeros(1), 0.4)
    mu = ms.Measure.dirac([0.0])
    assert ms.measure_of_ball(mu, ball0, CFG).value == 1.0
    # rho(0, 0.6) = 0.6 > 0.2: the atom is outside that ball
    ball6 = g.kobayashi_ball([0.6], 0.2)
    assert ms.measure_of_ball(mu, ball6, CFG).value == 0.0


def test_ball_mass_additive():
    ball = g.kobayashi_ball([0.2], 0.5)
    mu1 = ms.Measure.dirac([0.1], 0.4)
    mu2 = ms.Measure.lebesgue(1)
    a = ms.measure_of_ball(mu1, ball, CFG)
    b = ms.measure_of_ball(mu2, ball, CFG)
    both = ms.measure_of_ball(mu1 + mu2, ball, CFG)
    assert both.value == pytest.approx(a.value + b.value, rel=1e-10)


# -- schedules ----------------------------------------------------------------

def test_boundary_schedule_depths():
    centers = ms.boundary_schedule(2, k_max=5)
    assert len(centers) == 10  # radial + tangential per depth
    radial = centers[0::2]
    for k, c in enumerate(radial, start=1):
        assert 1.0 - np.linalg.norm(c) == pytest.approx(2.0**-k, rel=1e-12)
    # all interior
    assert all(np.linalg.norm(c) < 1 for c in centers)


# -- ratio test ---------------------------------------------------------------

def test_ratio_test_volume_is_flat():
    res = ms.carleson_ratio_test(ms.Measure.lebesgue(1), 0.5, ms.boundary_schedule(1, 8), CFG)
    assert res.verdict == "pass"
    for row in res.rows:
        assert row["ratio"] == pytest.approx(1.0, abs=1e-12)
    assert res.slope == pytest.approx(0.0, abs=1e-9)


def test_ratio_test_divergent_density():
    mu = ms.Measure.with_power_density(1, -0.5)
    res = ms.carleson_ratio_test(mu, 0.5, ms.boundary_schedule(1, 12), MCConfig(seed=2, n_samples=20_000))
    assert res.verdict == "fail"
    assert res.slope == pytest.approx(-0.5, abs=0.15)


def test_ratio_test_subunit_density_passes():
    mu = ms.Measure.with_power_density(1, 0.5)
    res = ms.carleson_ratio_test(mu, 0.5, ms.boundary_schedule(1, 12), CFG)
    assert res.verdict == "pass"
    assert max(row["ratio"] for row in res.rows) <= 1.0 + 1e-6


def test_ratio_test_validates_radius():
    with pytest.raises(ParameterError):
        ms.carleson_ratio_test(ms.Measure.lebesgue(1), 1.2, ms.boundary_schedule(1, 4), CFG)


# -- berezin test -------------------------------------------------------------

def test_berezin_test_volume():
    res = ms.carleson_berezin_test(ms.Measure.lebesgue(1), ms.boundary_schedule(1, 8), CFG)
    assert res.verdict == "pass"
    assert abs(res.sup.value - 1.0) < 4 * res.sup.std_error + 0.02


def test_berezin_test_dirac_sup_at_origin():
    mu = ms.Measure.dirac([0.0])
    probes = [np.zeros(1)] + ms.boundary_schedule(1, 8)
    res = ms.carleson_berezin_test(mu, probes, CFG)
    assert res.sup.value == pytest.approx(1.0, abs=1e-12)
    assert res.verdict == "pass"


def test_berezin_test_divergent_density():
    mu = ms.Measure.with_power_density(1, -0.5)
    res = ms.carleson_berezin_test(mu, ms.boundary_schedule(1, 12), MCConfig(seed=5, n_samples=30_000))
    assert res.verdict == "fail"


# -- functional test ----------------------------------------------------------

def test_functional_constant_for_volume_is_one():
    res = ms.carleson_functional_test(ms.Measure.lebesgue(1), ms.boundary_schedule(1, 8), CFG, seed=3)
    assert res.verdict == "pass"
    assert res.constant.value < 1.2


def test_functional_dirac_kernel_ratios():
    # mu = delta_0, f = k_z: ratio = |k_z(0)|^2 = (1 - ||z||^2)^(n+1) <= 1
    mu = ms.Measure.dirac([0.0])
    res = ms.carleson_functional_test(mu, ms.boundary_schedule(1, 6), CFG, n_polynomials=2, seed=1)
    kernel_rows = [r for r in res.rows if r["kind"] == "kernel"]
    for row in kernel_rows:
        assert row["ratio"] <= 1.0 + 1e-12


def test_functional_rejects_other_p():
    with pytest.raises(ParameterError):
        ms.carleson_functional_test(ms.Measure.lebesgue(1), [], CFG, p=4.0)


# -- cross-check --------------------------------------------------------------

def fast_config():
    return ms.CrossCheckConfig(k_max=10, ball_samples=4_000, global_samples=8_000, n_polynomials=4)


def test_cross_check_volume_passes_and_agrees():
    verdict = ms.cross_check_equivalence(ms.Measure.lebesgue(1), fast_config())
    assert verdict.agreement
    assert verdict.overall == "pass"
    assert verdict.defect is None


def test_cross_check_divergent_fails_and_agrees():
    verdict = ms.cross_check_equivalence(ms.Measure.with_power_density(1, -0.5), fast_config())
    assert verdict.agreement
    assert verdict.overall == "fail"


def test_cross_check_json_and_rows():
    verdict = ms.cross_check_equivalence(ms.Measure.lebesgue(1), fast_config())
    d = verdict.to_json_dict()
    assert set(d) >= {"berezin_sup", "ratio_sup", "functional_constant", "verdicts", "agreement"}
    rows = verdict.schedule_rows()
    assert rows and set(rows[0]) == {"center", "d", "ratio", "berezin"}


def test_verdict_scale_invariance():
    # scaling the measure scales the statistics but not the verdicts
    base = ms.cross_check_equivalence(ms.Measure.lebesgue(1), fast_config())
    scaled = ms.cross_check_equivalence(ms.Measure.lebesgue(1).scaled(7.0), fast_config())
    assert scaled.verdicts == base.verdicts
    assert scaled.berezin_sup.value == pytest.approx(7.0 * base.berezin_sup.value, rel=1e-9)


def test_atomic_statistics_scale_exactly():
    mu = ms.Measure.from_atoms([[0.1], [0.3]], [1.0, 0.5])
    ball = g.kobayashi_ball([0.2], 0.5)
    base = ms.measure_of_ball(mu, ball, CFG).value
    scaled = ms.measure_of_ball(mu.scaled(3.0), ball, CFG).value
    assert scaled == pytest.approx(3.0 * base, rel=1e-15)
    b1 = ms.carleson_berezin_test(mu, ms.boundary_schedule(1, 5), CFG)
    b3 = ms.carleson_berezin_test(mu.scaled(3.0), ms.boundary_schedule(1, 5), CFG)
    assert b3.sup.value == pytest.approx(3.0 * b1.sup.value, rel=1e-12)
    assert b3.verdict == b1.verdict


def test_bundled_suite_composition():
    suite = ms.bundled_measure_suite(1)
    names = [name for name, _ in suite]
    assert "lebesgue" in names and "dirac-ladder" in names
    assert sum(1 for n in names if n.startswith("power")) == 3

import logging
import unittest

import numpy as np
import pytest

from carleman_toolkit.exceptions import AuditError, ConfigError, GeometryError
from carleman_toolkit.geometry import DomainSpec, interior_probes, make_cap, make_cone, manufacture
from carleman_toolkit.material import MaterialParams, Medium
from carleman_toolkit.reconstruct import (NOISE_MARGIN, AuditTolerances, CauchyData, ReconstructionConfig, add_noise,
                                          audit, bound_M, carleman_panel, cauchy_data, choose_tau, quadrature_floor,
                                          small_data_curve, sweep_probe, theorem_bound, u_tau, u_tau_delta)

MEDIUM = Medium.build(MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 2.0))


@pytest.fixture(scope="module")
def small_cap():
    domain, surface, plane = make_cap(1.0, 16)
    solution = manufacture(domain, MEDIUM, seed=2)
    return domain, surface, plane, solution


class TestChooseTau(unittest.TestCase):

    def test_cap_rule(self):
        """ln(M/delta)/x3^0"""
        self.assertAlmostEqual(choose_tau(10.0, 1e-3, DomainSpec("cap", 0.5, 8)), 2 * np.log(1e4), places=12)

    def test_floor(self):
        """Values below 1.25 max k are raised to the floor with a warning"""
        with self.assertLogs("carleman_toolkit.reconstruct", level=logging.WARNING):
            tau = choose_tau(1.0, 0.5, DomainSpec("cap", 1.0, 8), k_max=MEDIUM.waves.k_max)
        self.assertAlmostEqual(tau, 1.25 * np.sqrt(2.0), places=12)

    def test_invalid_noise(self):
        """delta outside (0, 1) or not below M is a configuration error"""
        cap = DomainSpec("cap", 1.0, 8)
        for M, delta in ((1.0, 0.0), (1.0, 1.5), (0.01, 0.1)):
            with self.assertRaises(ConfigError):
                choose_tau(M, delta, cap)

    def test_cone_rule(self):
        """(kappa R)^(-rho) ln(M/delta) with R the growth radius"""
        domain, surface, _ = make_cone(2.0, 1.0, 12)
        tau = choose_tau(10.0, 1e-3, domain, surface=surface, x=domain.axis_point(0.5))
        plain = choose_tau(10.0, 1e-3, domain)
        self.assertGreater(tau, 0.0)
        # Without a surface R falls back to the radius, kappa = 1.
        self.assertAlmostEqual(plain, np.log(1e4), places=12)


class TestNoise(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(9)
        self.exact = CauchyData(rng.normal(size=(50, 6)), rng.normal(size=(50, 6)))

    def test_budget(self):
        """Each of f and g moves by exactly delta (1 - 1e-9) / 2 at its worst node"""
        noisy = add_noise(self.exact, 1e-3, seed=4)
        df = np.linalg.norm(noisy.f - self.exact.f, axis=1).max()
        dg = np.linalg.norm(noisy.g - self.exact.g, axis=1).max()
        self.assertAlmostEqual(df, 0.5e-3 * (1 - NOISE_MARGIN), places=15)
        self.assertAlmostEqual(dg, 0.5e-3 * (1 - NOISE_MARGIN), places=15)
        self.assertLessEqual(noisy.noise_norm(self.exact), 1e-3)
        self.assertEqual(noisy.delta, 1e-3)

    def test_seeded(self):
        """Same seed, same perturbation; another seed differs"""
        a = add_noise(self.exact, 1e-2, seed=1)
        b = add_noise(self.exact, 1e-2, seed=1)
        c = add_noise(self.exact, 1e-2, seed=2)
        np.testing.assert_array_equal(a.f, b.f)
        self.assertFalse(np.array_equal(a.f, c.f))

    def test_zero_noise(self):
        """delta = 0 copies the data"""
        noisy = add_noise(self.exact, 0.0, seed=1)
        np.testing.assert_array_equal(noisy.g, self.exact.g)
        self.assertIsNot(noisy.g, self.exact.g)

    def test_range(self):
        """Noise levels outside [0, 1) are rejected"""
        with self.assertRaises(ValueError):
            add_noise(self.exact, 1.0, seed=1)


def test_config_validation(small_cap):
    """tau at or below max k and probes outside the domain are rejected"""
    domain, surface, _, _ = small_cap
    with pytest.raises(ConfigError):
        ReconstructionConfig(domain, MEDIUM, surface, np.array([[0.0, 0.0, 0.5]]), tau=1.0)
    with pytest.raises(GeometryError):
        ReconstructionConfig(domain, MEDIUM, surface, np.array([[0.0, 0.0, 1.5]]))
    cfg = ReconstructionConfig(domain, MEDIUM, surface, np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 0.8]]))
    assert cfg.min_distance == pytest.approx(0.2)


def test_u_tau_needs_tau(small_cap):
    """Without a fixed tau u_tau needs one passed in"""
    domain, surface, _, solution = small_cap
    cfg = ReconstructionConfig(domain, MEDIUM, surface, np.array([[0.0, 0.0, 0.7]]))
    with pytest.raises(ConfigError):
        u_tau(domain.axis_point(0.7), cauchy_data(solution, surface), cfg)


def test_panel_reuse_is_linear(small_cap):
    """A shared panel applies the same linear functional to every data set"""
    domain, surface, _, solution = small_cap
    x = domain.axis_point(0.6)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :], tau=5.0)
    data = cauchy_data(solution, surface)
    panel = carleman_panel(x, 5.0, surface, domain, MEDIUM)
    noise = add_noise(data, 1e-2, seed=3)
    combined = u_tau(x, noise, cfg, panel)
    parts = u_tau(x, data, cfg, panel) + u_tau(x, noise.combine(data, 1.0, -1.0), cfg, panel)
    np.testing.assert_allclose(combined, parts, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(u_tau(x, data, cfg), u_tau(x, data, cfg, panel))


def test_noise_free_error_decreases(small_cap):
    """Errors from S-only data shrink from tau = 4 to tau = 8"""
    domain, surface, _, solution = small_cap
    x = domain.axis_point(0.7)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :])
    data = cauchy_data(solution, surface)
    exact = solution.values(x)[0]
    errors = [np.linalg.norm(u_tau(x, data, cfg, tau=tau) - exact) for tau in (4.0, 8.0)]
    assert errors[1] < errors[0]


@pytest.mark.slow
def test_noise_free_convergence_to_floor():
    """tau = 16 cuts the error tenfold against tau = 4 unless the quadrature floor is reached"""
    domain, surface, plane = make_cap(1.0, 32)
    solution = manufacture(domain, MEDIUM, seed=3)
    data = cauchy_data(solution, surface)
    x = domain.axis_point(0.7)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :])
    exact = solution.values(x)[0]
    errors = [np.linalg.norm(u_tau(x, data, cfg, tau=tau) - exact) for tau in (4.0, 8.0, 16.0)]
    floor = quadrature_floor(x, solution, surface + plane, MEDIUM) * np.linalg.norm(exact)
    assert errors[0] > errors[1]
    assert errors[2] <= max(0.1 * errors[0], 10.0 * floor)


def test_u_tau_delta_requires_noise(small_cap):
    """Noise-free data is not a valid input for the noisy reconstruction"""
    domain, surface, _, solution = small_cap
    cfg = ReconstructionConfig(domain, MEDIUM, surface, np.array([[0.0, 0.0, 0.5]]))
    with pytest.raises(ValueError):
        u_tau_delta(domain.axis_point(0.5), cauchy_data(solution, surface), cfg)


def test_bounds(small_cap):
    """M is positive and the estimate shape follows its formula"""
    _, _, plane, solution = small_cap
    assert bound_M(solution, plane) > 0
    assert theorem_bound(0.5, 1.0, 10.0, 1e-4) == pytest.approx(1e-2 * np.log(1e5))
    assert theorem_bound(0.5, 1.0, 10.0, 1e-4, m=3) == pytest.approx(1e-2 * np.log(1e5) ** 3)


def test_small_data_curve(small_cap):
    """Pure-noise data gives a response with a monotone bound shape"""
    domain, surface, _, _ = small_cap
    x = domain.axis_point(0.5)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :], M=10.0)
    rows = small_data_curve(x, cfg, [1e-2, 1e-4, 1e-3], seed=1)
    assert [row["delta"] for row in rows] == [1e-4, 1e-3, 1e-2]
    assert all(row["bound_monotone"] for row in rows)
    assert all(row["response"] > 0 for row in rows)


def test_sweep_with_mixed_tau_grid(small_cap):
    """Fixed taus cover every delta; 'auto' adds one row per positive delta"""
    domain, surface, plane, solution = small_cap
    x = domain.axis_point(0.6)
    M = bound_M(solution, plane)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :], M=M)
    data = cauchy_data(solution, surface)
    sweep = sweep_probe(0, x, solution, data, cfg, [4.0, 8.0, "auto"], [0.0, 1e-2, 1e-3], seed=5)
    assert len(sweep.rows) == 2 * 3 + 2
    auto = [row for row in sweep.rows if row["tau_auto"]]
    assert [row["delta"] for row in auto] == [1e-2, 1e-3]
    assert auto[1]["tau"] > auto[0]["tau"]
    assert all(row["bound"] is None for row in sweep.rows if row["delta"] == 0.0)
    with pytest.raises(ConfigError):
        sweep_probe(0, x, solution, data, cfg, "auto", [0.0], seed=5)


class TestAudit(unittest.TestCase):

    def setUp(self):
        self.cap = DomainSpec("cap", 1.0, 8)
        self.taus = np.array([4.0, 8.0, 16.0])
        self.deltas = np.array([1e-2, 1e-3, 1e-4])

    def test_exact_shapes_pass(self):
        """Errors shaped like the estimates pass every flag"""
        x3, M = 0.5, 10.0
        tau_errors = 3.0 * self.taus * np.exp(-x3 * self.taus)
        delta_errors = 2.0 * np.array([theorem_bound(x3, 1.0, M, d) for d in self.deltas])
        report = audit(self.cap, [0, 0, x3], M, self.taus, tau_errors, self.deltas, delta_errors)
        self.assertAlmostEqual(report.tau_slope, -0.5, places=10)
        self.assertAlmostEqual(report.constant_ratio, 1.0, places=10)
        self.assertTrue(report.passed)
        self.assertEqual(report.to_dict()["flags"]["tau_decreasing"], True)

    def test_wrong_slope_flagged(self):
        """A decay twice as fast fails the slope flag"""
        report = audit(self.cap, [0, 0, 0.5], 10.0, self.taus, self.taus * np.exp(-self.taus))
        self.assertFalse(report.flags["tau_slope"])
        self.assertFalse(report.passed)

    def test_cone_expectations(self):
        """The cone uses m = 3 and expects slope -x3^rho; exponent only needs to be positive"""
        cone = DomainSpec("cone", 1.0, 8, rho_e=2.0)
        tau_errors = self.taus ** 3 * np.exp(-0.25 * self.taus)
        report = audit(cone, [0, 0, 0.5], 10.0, self.taus, tau_errors, self.deltas, self.deltas ** 0.3,
                       AuditTolerances(), growth_radius=0.9)
        self.assertAlmostEqual(report.expected_slope, -0.25, places=12)
        self.assertAlmostEqual(report.tau_slope, -0.25, places=10)
        self.assertAlmostEqual(report.delta_exponent, 0.3, places=10)
        self.assertTrue(report.flags["delta_exponent"])
        self.assertEqual(report.growth_radius, 0.9)

    def test_cone_slope_is_not_a_pass_condition(self):
        """A monotone cone sweep passes whatever its fitted tau slope"""
        cone = DomainSpec("cone", 1.0, 8, rho_e=2.0)
        tau_errors = self.taus ** 3 * np.exp(-0.6 * self.taus)
        report = audit(cone, [0, 0, 0.5], 10.0, self.taus, tau_errors, self.deltas, self.deltas ** 0.2)
        self.assertNotIn("tau_slope", report.flags)
        self.assertAlmostEqual(report.tau_slope, -0.6, places=10)
        self.assertAlmostEqual(report.expected_slope, -0.25, places=12)
        self.assertTrue(report.flags["tau_decreasing"])
        self.assertTrue(report.passed)

    def test_too_few_points(self):
        """Two points per grid cannot be fitted"""
        with self.assertRaises(AuditError):
            audit(self.cap, [0, 0, 0.5], 10.0, self.taus[:2], [1.0, 0.5], self.deltas[:2], [1.0, 0.1])


@pytest.mark.slow
def test_noise_free_error_decreases_over_the_axis_points():
    """At delta = 0 the error falls with tau at every point of the compact set"""
    domain, surface, plane = make_cap(1.0, 32)
    solution = manufacture(domain, MEDIUM, seed=3)
    data = cauchy_data(solution, surface)
    points = interior_probes(domain)
    assert len(points) == 5
    cfg = ReconstructionConfig(domain, MEDIUM, surface, points)
    for x in points:
        exact = solution.values(x)[0]
        errors = [np.linalg.norm(u_tau(x, data, cfg, tau=tau) - exact) for tau in (4.0, 8.0, 16.0)]
        floor = quadrature_floor(x, solution, surface + plane, MEDIUM) * np.linalg.norm(exact)
        assert errors[1] < errors[0], (x[2], errors)
        assert errors[2] < errors[1] or errors[2] <= 10.0 * floor, (x[2], errors, floor)


@pytest.mark.slow
def test_cap_stability_exponent_with_chosen_tau():
    """With tau from the noise level the error scales like delta^(x3/x3^0) up to a bounded constant"""
    domain, surface, plane = make_cap(1.0, 32)
    solution = manufacture(domain, MEDIUM, count=4, seed=7)
    M = bound_M(solution, plane)
    data = cauchy_data(solution, surface)
    tolerances = AuditTolerances(exponent_rel=0.3, constant_ratio=5.0)
    for i, x3 in enumerate((0.4, 0.5, 0.7)):
        x = domain.axis_point(x3)
        cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :], M=M)
        sweep = sweep_probe(i, x, solution, data, cfg, "auto", [0.0, 1e-2, 1e-3, 1e-4], seed=7)
        rows = [row for row in sweep.rows if row["tau_auto"]]
        assert [row["delta"] for row in rows] == [1e-2, 1e-3, 1e-4]
        report = audit(domain, x, M, deltas=[r["delta"] for r in rows],
                       delta_errors=[r["error_abs"] for r in rows], tolerances=tolerances)
        assert report.expected_exponent == pytest.approx(x3)
        assert report.flags["delta_exponent"], (x3, report.delta_exponent)
        assert report.constant_ratio <= 5.0, (x3, report.constants)


@pytest.mark.slow
def test_cone_noisy_sweep_converges():
    """On the cone the error shrinks with delta and the fitted exponent is positive"""
    domain, surface, sigma = make_cone(2.0, 1.0, 24)
    solution = manufacture(domain, MEDIUM, count=4, seed=11)
    M = bound_M(solution, sigma)
    data = cauchy_data(solution, surface)
    x = domain.axis_point(0.5)
    cfg = ReconstructionConfig(domain, MEDIUM, surface, x[None, :], M=M)
    sweep = sweep_probe(0, x, solution, data, cfg, "auto", [0.0, 1e-2, 1e-3, 1e-4], seed=11)
    rows = [row for row in sweep.rows if row["tau_auto"]]
    errors = [row["error_abs"] for row in rows]
    assert np.all(np.diff(errors) < 0), errors
    report = audit(domain, x, M, deltas=[r["delta"] for r in rows], delta_errors=errors)
    assert report.delta_exponent > 0
    assert report.passed

import unittest

import numpy as np
import pytest

from carleman_toolkit.exceptions import ConfigError, GeometryError
from carleman_toolkit.geometry import (DomainSpec, cone_growth_radius, diameter, distance_to_boundary,
                                       interior_probes, load_off, make_cap, make_cone, manufacture)
from carleman_toolkit.material import MaterialParams, Medium

TETRAHEDRON = """OFF
# unit corner tetrahedron
4 4 6
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
"""


class TestDomainSpec(unittest.TestCase):

    def test_rejects_bad_settings(self):
        """Unknown branch, non-positive radius, too few nodes, flat cone"""
        with self.assertRaises(ConfigError):
            DomainSpec("wedge", 1.0, 8)
        with self.assertRaises(ConfigError):
            DomainSpec("cap", 0.0, 8)
        with self.assertRaises(ConfigError) as ctx:
            DomainSpec("cap", 1.0, 2)
        self.assertEqual(ctx.exception.path, "domain.resolution")
        with self.assertRaises(ConfigError):
            DomainSpec("cone", 1.0, 8, rho_e=1.0)

    def test_cone_opening(self):
        """rho = 2 gives slope 1 and half-angle pi/4"""
        spec = DomainSpec("cone", 1.0, 8, rho_e=2.0)
        self.assertAlmostEqual(spec.kappa, 1.0, places=14)
        self.assertAlmostEqual(spec.half_angle, np.pi / 4, places=14)

    def test_distances(self):
        """Distance to the nearest boundary piece"""
        cap = DomainSpec("cap", 1.0, 8)
        np.testing.assert_allclose(cap.distance_to_boundary([[0, 0, 0.3], [0, 0, 0.8]]), [0.3, 0.2])
        cone = DomainSpec("cone", 1.0, 8, rho_e=2.0)
        self.assertAlmostEqual(float(distance_to_boundary(cone, [0, 0, 0.5])[0]), 0.5 * np.sin(np.pi / 4), places=12)
        self.assertFalse(cone.contains([0.0, 0.0, -0.1])[0])
        self.assertEqual(diameter(cap), 2.0)


class TestSurfaces(unittest.TestCase):

    def test_cap_areas_and_normals(self):
        """Hemisphere 2 pi R^2 and disk pi R^2 with outward normals"""
        domain, surface, plane = make_cap(0.5, 16)
        self.assertAlmostEqual(surface.area, 2 * np.pi * 0.25, places=12)
        self.assertAlmostEqual(plane.area, np.pi * 0.25, places=12)
        np.testing.assert_allclose(surface.normals, surface.nodes / 0.5, atol=1e-14)
        np.testing.assert_array_equal(plane.normals[:, 2], -1.0)
        self.assertEqual(len(surface), 16 * 32)
        self.assertEqual(domain.x3_max, 0.5)

    def test_cone_areas_and_normals(self):
        """Spherical cap and lateral cone areas; lateral normals orthogonal to the generators"""
        domain, surface, lateral = make_cone(2.0, 1.0, 16)
        theta = domain.half_angle
        self.assertAlmostEqual(surface.area, 2 * np.pi * (1 - np.cos(theta)), places=10)
        self.assertAlmostEqual(lateral.area, np.pi * np.sin(theta), places=10)
        np.testing.assert_allclose(np.sum(lateral.normals * lateral.nodes, axis=1), 0.0, atol=1e-14)
        self.assertTrue(np.all(lateral.normals[:, 2] < 0))

    def test_closed_surface(self):
        """Joining two pieces keeps every node"""
        _, surface, plane = make_cap(1.0, 8)
        closed = surface + plane
        self.assertEqual(len(closed), len(surface) + len(plane))
        self.assertEqual(closed.part, "S+Sigma")


def test_interior_probes_on_axis():
    """Probes lie on the axis between 0.3 and 0.7 of the height"""
    probes = interior_probes(DomainSpec("cap", 2.0, 8))
    assert probes.shape == (5, 3)
    np.testing.assert_allclose(probes[:, 2], np.linspace(0.6, 1.4, 5))
    np.testing.assert_array_equal(probes[:, :2], 0.0)


def test_cone_growth_radius():
    """For rho = 2 the growth radius is the top of the spherical cap"""
    domain, surface, _ = make_cone(2.0, 1.0, 16)
    radius = cone_growth_radius(surface, domain.axis_point(0.5), 2.0)
    assert 0.95 < radius <= 1.0


def test_load_off(tmp_path):
    """Centroid rule with outward normals from an OFF file"""
    path = tmp_path / "tet.off"
    path.write_text(TETRAHEDRON, encoding="utf-8")
    quad = load_off(path, "S", interior_point=[0.1, 0.1, 0.1])
    assert len(quad) == 4
    assert quad.area == pytest.approx(1.5 + np.sqrt(3) / 2)
    outward = np.sum(quad.normals * (quad.nodes - 0.1), axis=1)
    assert np.all(outward > 0)


def test_load_off_malformed(tmp_path):
    """Missing header, truncated body and quads are rejected"""
    bad = tmp_path / "bad.off"
    bad.write_text("4 4 6\n", encoding="utf-8")
    with pytest.raises(GeometryError):
        load_off(bad, "S", [0, 0, 0])
    bad.write_text("OFF\n4 4 6\n0 0 0\n", encoding="utf-8")
    with pytest.raises(GeometryError):
        load_off(bad, "S", [0, 0, 0])
    bad.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n", encoding="utf-8")
    with pytest.raises(GeometryError):
        load_off(bad, "S", [0, 0, 1])


class TestManufacturedSolution(unittest.TestCase):

    def test_sources_outside_with_clearance(self):
        """Sources keep 0.2 diam away from both domain families"""
        medium = Medium.build(MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 2.0))
        for domain in (DomainSpec("cap", 1.0, 8), DomainSpec("cone", 1.0, 8, rho_e=2.0)):
            solution = manufacture(domain, medium, count=6, seed=11)
            self.assertFalse(np.any(domain.contains(solution.sources)))
            self.assertTrue(np.all(np.linalg.norm(solution.sources, axis=1) >= 0.2 * domain.diameter))

    def test_seeded(self):
        """The same seed gives the same solution"""
        medium = Medium.build(MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 2.0))
        domain = DomainSpec("cap", 1.0, 8)
        first = manufacture(domain, medium, seed=5)
        second = manufacture(domain, medium, seed=5)
        np.testing.assert_array_equal(first.sources, second.sources)
        np.testing.assert_array_equal(first.strengths, second.strengths)


def test_solution_shapes(cap, cap_solution):
    """values and traction are (N, 6)"""
    _, surface, _ = cap
    assert cap_solution.values(surface.nodes).shape == (len(surface), 6)
    assert cap_solution.traction(surface.nodes, surface.normals).shape == (len(surface), 6)
    assert cap_solution.field_values(surface.nodes[:3]).shape == (3, 6, 1)

"""
Module: Domain Geometry
Description: The two domain families, their surface quadratures and
             manufactured regular solutions with exact Cauchy data.

Domains:
    - cap: hemisphere S of radius R over the disk Sigma in the plane y3 = 0.
    - cone: spherical sector with apex at the origin; Sigma is the lateral surface
      alpha_1 = kappa y3 with kappa = tan(pi/(2 rho)) and S the spherical cap of radius R.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .exceptions import ConfigError, GeometryError
from .kernels import as_points, psi_matrix, stress_apply
from .material import Medium
from .quadrature import gauss_on_interval

logger = logging.getLogger(__name__)

MIN_NODES = 16
BRANCHES = ("cap", "cone")
SOURCE_CLEARANCE = 0.2


@dataclass(frozen=True)
class DomainSpec:
    """
    A member of one of the two domain families.

    Attributes:
        branch (str): "cap" or "cone".
        radius (float): Hemisphere radius (cap) or sphere radius closing the cone.
        resolution (int): Polar Gauss nodes per surface piece; each piece gets
            resolution x 2 resolution nodes.
        rho_e (float): Mittag-Leffler order of the cone branch (unused for the cap).
    """

    branch: str
    radius: float
    resolution: int
    rho_e: float = 1.0

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ConfigError(f"Unknown domain branch '{self.branch}'", path="domain.branch")
        if self.radius <= 0:
            raise ConfigError("Domain radius must be positive", path="domain.radius")
        if 2 * self.resolution ** 2 < MIN_NODES:
            raise ConfigError(
                f"Resolution {self.resolution} gives fewer than {MIN_NODES} nodes per surface",
                path="domain.resolution",
            )
        if self.branch == "cone" and self.rho_e <= 1.0:
            raise ConfigError("Cone branch needs rho_e > 1", path="domain.rho_e")

    @property
    def kappa(self) -> float:
        """Slope of the cone, tan(pi/(2 rho))."""
        return float(np.tan(np.pi / (2.0 * self.rho_e)))

    @property
    def half_angle(self) -> float:
        return float(np.arctan(self.kappa))

    @property
    def x3_max(self) -> float:
        """x3^0 = max of x3 over the domain."""
        return self.radius

    @property
    def diameter(self) -> float:
        if self.branch == "cap":
            return 2.0 * self.radius
        return self.radius * max(1.0, 2.0 * np.sin(self.half_angle))

    def distance_to_boundary(self, points) -> np.ndarray:
        """Distance of interior points to the boundary; negative outside."""
        p = as_points(points)
        norm = np.linalg.norm(p, axis=1)
        to_sphere = self.radius - norm
        if self.branch == "cap":
            return np.minimum(p[:, 2], to_sphere)
        polar = np.arctan2(np.linalg.norm(p[:, :2], axis=1), p[:, 2])
        to_lateral = norm * np.sin(np.clip(self.half_angle - polar, -np.pi / 2, np.pi / 2))
        return np.minimum(to_sphere, to_lateral)

    def contains(self, points) -> np.ndarray:
        return self.distance_to_boundary(points) > 0.0

    def axis_point(self, x3: float) -> np.ndarray:
        return np.array([0.0, 0.0, float(x3)])


@dataclass(frozen=True, eq=False)
class SurfaceQuadrature:
    """Nodes, area weights and outward unit normals of one boundary piece."""

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    part: str

    def __post_init__(self):
        n = self.nodes.shape[0]
        if self.weights.shape != (n,) or self.normals.shape != (n, 3):
            raise GeometryError("inconsistent quadrature arrays", part=self.part, nodes=n)

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    def __add__(self, other: "SurfaceQuadrature") -> "SurfaceQuadrature":
        return SurfaceQuadrature(
            np.vstack([self.nodes, other.nodes]),
            np.concatenate([self.weights, other.weights]),
            np.vstack([self.normals, other.normals]),
            f"{self.part}+{other.part}",
        )


def _angle_grid(n: int):
    """Trapezoid rule in the azimuth: 2n equispaced angles with equal weights."""
    phi = np.arange(2 * n) * np.pi / n
    return phi, np.full(2 * n, np.pi / n)


def _sphere_piece(radius: float, theta_max: float, n: int, part: str) -> SurfaceQuadrature:
    theta, w_theta = gauss_on_interval(0.0, theta_max, n)
    phi, w_phi = _angle_grid(n)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    normals = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1).reshape(-1, 3)
    weights = (radius ** 2 * np.sin(tt) * np.outer(w_theta, w_phi)).ravel()
    return SurfaceQuadrature(radius * normals, weights, normals, part)


def make_cap(radius: float, resolution: int) -> Tuple[DomainSpec, SurfaceQuadrature, SurfaceQuadrature]:
    """
    Hemisphere S of the given radius over the disk Sigma.

    Returns:
        tuple: (DomainSpec, S quadrature, Sigma quadrature).
    """
    domain = DomainSpec("cap", radius, resolution)
    n = resolution
    surface = _sphere_piece(radius, 0.5 * np.pi, n, "S")

    r, w_r = gauss_on_interval(0.0, radius, n)
    phi, w_phi = _angle_grid(n)
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    nodes = np.stack([rr * np.cos(pp), rr * np.sin(pp), np.zeros_like(rr)], axis=-1).reshape(-1, 3)
    weights = (rr * np.outer(w_r, w_phi)).ravel()
    normals = np.tile([0.0, 0.0, -1.0], (nodes.shape[0], 1))
    plane = SurfaceQuadrature(nodes, weights, normals, "Sigma")

    logger.info("cap radius %g: %d nodes on S, %d on Sigma", radius, len(surface), len(plane))
    return domain, surface, plane


def make_cone(rho_e: float, height: float, resolution: int) -> Tuple[DomainSpec, SurfaceQuadrature, SurfaceQuadrature]:
    """
    Spherical sector of radius `height` inside the cone of half-angle atan(kappa).

    Returns:
        tuple: (DomainSpec, spherical cap S, lateral surface Sigma).
    """
    domain = DomainSpec("cone", height, resolution, rho_e)
    n = resolution
    theta_c = domain.half_angle
    surface = _sphere_piece(height, theta_c, n, "S")

    ell, w_ell = gauss_on_interval(0.0, height, n)
    phi, w_phi = _angle_grid(n)
    ll, pp = np.meshgrid(ell, phi, indexing="ij")
    sin_c, cos_c = np.sin(theta_c), np.cos(theta_c)
    nodes = np.stack([ll * sin_c * np.cos(pp), ll * sin_c * np.sin(pp), ll * cos_c], axis=-1).reshape(-1, 3)
    normals = np.stack([cos_c * np.cos(pp), cos_c * np.sin(pp), -sin_c * np.ones_like(pp)], axis=-1).reshape(-1, 3)
    weights = (ll * sin_c * np.outer(w_ell, w_phi)).ravel()
    lateral = SurfaceQuadrature(nodes, weights, normals, "Sigma")

    logger.info("cone rho=%g kappa=%.6g height %g: %d nodes on S, %d on Sigma",
                rho_e, domain.kappa, height, len(surface), len(lateral))
    return domain, surface, lateral


def diameter(domain: DomainSpec) -> float:
    return domain.diameter


def distance_to_boundary(domain: DomainSpec, points) -> np.ndarray:
    return domain.distance_to_boundary(points)


def interior_probes(domain: DomainSpec, count: int = 5, low: float = 0.3, high: float = 0.7) -> np.ndarray:
    """
    A compact set of probe points: on the axis between low and high times x3^0.

    The cone kernel is built for poles on the axis, so probes stay there for both
    branches; the cap adds no off-axis points to keep the two sweeps comparable.
    """
    heights = np.linspace(low, high, count) * domain.x3_max
    probes = np.stack([np.zeros(count), np.zeros(count), heights], axis=1)
    if not np.all(domain.contains(probes)):
        raise GeometryError("probe outside the domain", branch=domain.branch)
    return probes


def cone_growth_radius(surface: SurfaceQuadrature, x, rho_e: float) -> float:
    """R with R^rho = max over S of Re (i sqrt(s) + y3)^rho, principal branch."""
    x = np.asarray(x, dtype=float).reshape(3)
    s = np.sum((surface.nodes[:, :2] - x[:2]) ** 2, axis=1)
    w = 1j * np.sqrt(s) + surface.nodes[:, 2]
    peak = float(np.max(np.real(w ** rho_e)))
    if peak <= 0:
        raise GeometryError("S does not reach the growth sector of the cone kernel", peak=peak)
    return peak ** (1.0 / rho_e)


def load_off(path, part: str, interior_point) -> SurfaceQuadrature:
    """
    Read an ASCII OFF triangle mesh as a one-point (centroid) surface quadrature.

    Normals follow the face winding and are flipped to point away from
    `interior_point`.

    Raises:
        GeometryError: Malformed file or non-triangular faces.
    """
    path = Path(path)
    tokens = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line)
    if not tokens or not tokens[0].startswith("OFF"):
        raise GeometryError("missing OFF header", file=str(path))
    header = tokens[0][3:].split() or tokens.pop(1).split()
    n_vertices, n_faces = int(header[0]), int(header[1])
    body = tokens[1:]
    if len(body) < n_vertices + n_faces:
        raise GeometryError("truncated OFF file", file=str(path))
    vertices = np.array([[float(v) for v in row.split()[:3]] for row in body[:n_vertices]])
    faces = []
    for row in body[n_vertices:n_vertices + n_faces]:
        items = [int(v) for v in row.split()]
        if items[0] != 3:
            raise GeometryError("only triangular faces are supported", file=str(path), arity=items[0])
        faces.append(items[1:4])
    faces = np.asarray(faces)

    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    cross = np.cross(b - a, c - a)
    doubled = np.linalg.norm(cross, axis=1)
    if np.any(doubled == 0.0):
        raise GeometryError("degenerate triangle", file=str(path))
    normals = cross / doubled[:, None]
    centroids = (a + b + c) / 3.0
    outward = np.sum(normals * (centroids - np.asarray(interior_point, dtype=float)), axis=1)
    normals = np.where(outward[:, None] < 0, -normals, normals)
    logger.info("loaded %d triangles from %s as part %s", len(faces), path.name, part)
    return SurfaceQuadrature(centroids, 0.5 * doubled, normals, part)


@dataclass(eq=False)
class ManufacturedSolution:
    """U(y) = sum_j Psi(y, z_j) c_j for sources z_j outside the closed domain."""

    sources: np.ndarray
    strengths: np.ndarray
    medium: Medium

    def _field(self, points):
        total = None
        for z, c in zip(self.sources, self.strengths):
            part = psi_matrix(points, z, self.medium).apply(c)
            if total is None:
                total = part
            else:
                total.values += part.values
                total.dy += part.dy
        return total

    def values(self, points) -> np.ndarray:
        """U at the points, shape (N, 6)."""
        return self._field(as_points(points)).values[:, :, 0]

    def field_values(self, points) -> np.ndarray:
        """U at the points with a trailing column axis, shape (N, 6, 1)."""
        return self._field(as_points(points)).values

    def traction(self, points, normals) -> np.ndarray:
        """T(d_y, n) U at the points, shape (N, 6)."""
        field_ = self._field(as_points(points))
        return stress_apply(field_, normals, self.medium.params).values[:, :, 0]


def manufacture(domain: DomainSpec, medium: Medium, count: int = 4, seed: int = 0,
                rng: Optional[np.random.Generator] = None) -> ManufacturedSolution:
    """
    Random regular solution with sources kept at least 0.2 diam(D) away from D.

    Cap sources lie below the plane, cone sources inside the dual cone below the
    apex, where the distance to the domain equals the distance to the apex.
    """
    rng = rng or np.random.default_rng(seed)
    diam = domain.diameter
    if domain.branch == "cap":
        radial = 0.5 * domain.radius * np.sqrt(rng.uniform(0.0, 1.0, count))
        angle = rng.uniform(0.0, 2.0 * np.pi, count)
        depth = rng.uniform(0.45, 0.9, count) * domain.radius
        sources = np.stack([radial * np.cos(angle), radial * np.sin(angle), -depth], axis=1)
        clearance = depth
    else:
        opening = 0.8 * (0.5 * np.pi - domain.half_angle)
        polar = rng.uniform(0.0, opening, count)
        angle = rng.uniform(0.0, 2.0 * np.pi, count)
        dist = rng.uniform(0.25, 0.5, count) * diam
        sources = dist[:, None] * np.stack(
            [np.sin(polar) * np.cos(angle), np.sin(polar) * np.sin(angle), -np.cos(polar)], axis=1)
        clearance = dist
    if np.any(clearance < SOURCE_CLEARANCE * diam):
        raise GeometryError("source too close to the domain", clearance=float(clearance.min()))
    strengths = rng.uniform(-1.0, 1.0, (count, 6))
    logger.debug("manufactured %d sources for %s branch, seed %s", count, domain.branch, seed)
    return ManufacturedSolution(sources, strengths, medium)

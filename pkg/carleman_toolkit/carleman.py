"""
Module: Carleman Kernels
Description: Scalar Carleman functions for the two domain branches and the
             6x6 Carleman matrix built from them.

Basis:
    - Cap (half-space type) branch, d = y - x, h = d3, s = d1^2 + d2^2:
      C3 * Phi = -(pi/2) e^{-k r}/r + integral_k^tau e^{t h} (pi/2) J0(sqrt(s (t^2 - k^2))) dt.
    - Cone branch: C3 K(x3) Phi = integral_0^inf Im[K(w)/(w - x3)] cos(k u)/sqrt(u^2 + s) du,
      w = y3 + i sqrt(u^2 + s), K(w) = E_rho(tau^{1/rho} w).
    - C3 = -2 pi^2, fixed by the tau = 0 limit Phi = e^{-k r}/(4 pi r). Read at call
      time so a corrupted value is visible to the self-test.
"""

import logging
from dataclasses import dataclass
from math import comb, factorial
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import SingularityError
from .kernels import KernelMatrix, as_points, assemble_matrix, boundary_pairing, stress_apply
from .material import Medium
from .mittag_leffler import ml_derivatives
from .quadrature import QuadSpec, gauss_on_interval, panel_edges, semiinf_quad
from .specfun import ScalarJet, j0_sqrt_derivatives, weber_disc, yukawa_jet

logger = logging.getLogger(__name__)

C3 = -2.0 * np.pi ** 2

# (a, b): a derivatives in s, b in the vertical coordinate.
PARTIALS = ((0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (3, 0))

TAYLOR_POINTS = 64
TAYLOR_TERMS = 20
CHUNK_BUDGET = 4_000_000
ABEL_ETA = 0.04
ABEL_LEVELS = 5
READINGS = ("literal", "product_rule")


@dataclass(frozen=True)
class ConeQuadrature:
    """Configurable part of the cone u-quadrature: nodes per panel and truncation length."""

    nodes: int = 16
    truncation: float = 64.0


@dataclass
class CarlemanScalar:
    """
    A scalar Carleman function and its y-derivatives at a batch of field points.

    For the cap branch Phi depends on y - x only, so the x-derivatives follow
    from the y-jet; the cone branch fixes x on the axis and has no x-jet.
    """

    jet: ScalarJet
    k: float
    tau: float
    branch: str
    error: float = 0.0

    @property
    def value(self) -> np.ndarray:
        return self.jet.value

    @property
    def grad_y(self) -> np.ndarray:
        return self.jet.grad

    @property
    def grad_x(self) -> np.ndarray:
        self._require_shift_invariant()
        return -self.jet.grad

    @property
    def hess_x(self) -> np.ndarray:
        self._require_shift_invariant()
        return self.jet.hess

    def _require_shift_invariant(self):
        if self.branch != "cap":
            raise ValueError(f"x-derivatives are only defined for the cap branch, not '{self.branch}'")


def jet_from_partials(d: np.ndarray, partials: dict) -> ScalarJet:
    """
    Cartesian derivatives of Phi(s, t) with s = d1^2 + d2^2 and t the vertical coordinate.

    Args:
        d (ndarray): Offsets y - x, shape (N, 3); only the horizontal part enters s.
        partials (dict): (a, b) -> d^a/ds^a d^b/dt^b Phi, each of shape (N,), a + b <= 3.
    """
    n = d.shape[0]
    horizontal = d[:, :2]

    def entry(indices):
        flat = [i for i in indices if i < 2]
        b = len(indices) - len(flat)
        a = len(flat)
        if a == 0:
            return partials[(0, b)]
        if a == 1:
            return 2.0 * horizontal[:, flat[0]] * partials[(1, b)]
        if a == 2:
            i, j = flat
            out = 4.0 * horizontal[:, i] * horizontal[:, j] * partials[(2, b)]
            if i == j:
                out = out + 2.0 * partials[(1, b)]
            return out
        i, j, m = flat
        out = 8.0 * horizontal[:, i] * horizontal[:, j] * horizontal[:, m] * partials[(3, 0)]
        cross = (float(i == j) * horizontal[:, m] + float(i == m) * horizontal[:, j]
                 + float(j == m) * horizontal[:, i])
        return out + 4.0 * cross * partials[(2, 0)]

    grad = np.zeros((n, 3))
    hess = np.zeros((n, 3, 3))
    third = np.zeros((n, 3, 3, 3))
    for i in range(3):
        grad[:, i] = entry((i,))
        for j in range(i, 3):
            hess[:, i, j] = hess[:, j, i] = entry((i, j))
            for m in range(j, 3):
                value = entry((i, j, m))
                for p in {(i, j, m), (i, m, j), (j, i, m), (j, m, i), (m, i, j), (m, j, i)}:
                    third[(slice(None),) + p] = value
    return ScalarJet(partials[(0, 0)].copy(), grad, hess, third)


def _offsets(y, x):
    y = as_points(y)
    x = np.asarray(x, dtype=float).reshape(3)
    d = y - x
    if np.any(np.linalg.norm(d, axis=1) == 0.0):
        raise SingularityError("Carleman function evaluated at y = x")
    return y, x, d


def _check_tau(k: float, tau: float):
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if k <= 0:
        raise ValueError(f"wave number must be positive, got {k}")
    if abs(tau - k) <= 1e-12 * max(1.0, k):
        raise SingularityError("cap kernel requested at tau = k", tau=tau, k=k)


def phi_cap(y, x, k: float, tau: float) -> CarlemanScalar:
    """
    Cap-branch Carleman function with its y-derivatives up to third order.

    The finite t-integral has an entire integrand, so a Gauss-Legendre rule with
    enough nodes to resolve e^{t h} and the Bessel oscillation is exact to rounding.

    Examples:
        >>> scalar = phi_cap([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], 1.0, 0.0)
        >>> round(float(C3 * scalar.value[0]), 7)
        -0.5778637
    """
    _check_tau(k, tau)
    y, x, d = _offsets(y, x)
    s = d[:, 0] ** 2 + d[:, 1] ** 2
    h = d[:, 2]
    head = yukawa_jet(k, d).scaled(-2.0 * np.pi ** 2 / C3)
    if tau < k:
        return CarlemanScalar(head, k, tau, "cap")

    n_t = max(48, int(np.ceil(2.0 * (tau - k) * (np.sqrt(s.max()) + np.abs(h).max()))) + 24)
    t, w = gauss_on_interval(k, tau, n_t)
    q = t ** 2 - k ** 2
    bessel = j0_sqrt_derivatives(s[:, None] * q[None, :], order=3)
    weight = 0.5 * np.pi / C3 * w[None, :] * np.exp(h[:, None] * t[None, :])
    partials = {
        (a, b): np.sum(weight * t[None, :] ** b * q[None, :] ** a * bessel[a], axis=1)
        for a, b in PARTIALS
    }
    return CarlemanScalar(head + jet_from_partials(d, partials), k, tau, "cap")


def dphi_dtau(y, x, k: float, tau: float, reading: str = "literal"):
    """
    tau-derivative of the cap kernel.

    "literal" is C3^{-1} e^{tau h} weber_disc(tau, k, s), the full derivative of
    phi_cap. "product_rule" adds h * Phi_tau, the reading where the closed form
    covers the integral factor only.
    """
    if reading not in READINGS:
        raise ValueError(f"Unknown reading '{reading}', expected one of {READINGS}")
    _check_tau(k, tau)
    _, _, d = _offsets(y, x)
    s = d[:, 0] ** 2 + d[:, 1] ** 2
    h = d[:, 2]
    value = np.exp(tau * h) * weber_disc(tau, k, s) / C3
    if reading == "product_rule":
        value = value + h * phi_cap(y, x, k, tau).value
    return value


def local_scale(y3: np.ndarray, tau: float, rho_e: float) -> np.ndarray:
    """Length over which K(y3 + i v) changes by O(1), capped at 1."""
    if tau <= 0:
        return np.ones_like(y3)
    base = np.maximum(np.abs(y3), tau ** (-1.0 / rho_e))
    return 1.0 / np.maximum(1.0, rho_e * tau * base ** (rho_e - 1.0))


def cone_quad_spec(s, h, y3, tau: float, rho_e: float, ks: Sequence[float],
                   settings: ConeQuadrature = ConeQuadrature()) -> QuadSpec:
    """u-quadrature settings resolving the scales of one batch of field points."""
    ell = local_scale(y3, tau, rho_e)
    structure = np.maximum(np.abs(h), np.sqrt(s))
    grading = max(1e-6, 0.25 * float(np.min(np.minimum(ell, structure))))
    reach = 2.0 * (float(np.max(np.abs(y3))) + 1.0)
    growth = rho_e * tau * reach ** (rho_e - 1.0) if tau > 0 else 0.0
    fine = min(1.0, 8.0 / max(1.0, growth))
    if rho_e == 1.0:
        return QuadSpec(nodes=settings.nodes, truncation=settings.truncation,
                        panel=min(1.0, 8.0 / (tau + max(ks))), grading=grading,
                        fine_panel=fine, fine_until=reach, eta=ABEL_ETA, levels=ABEL_LEVELS)
    return QuadSpec(nodes=settings.nodes, truncation=settings.truncation,
                    panel=min(1.0, 8.0 / max(ks)), grading=grading, fine_panel=fine, fine_until=reach)


def _kernel_and_pole(zeta, x3, tau, rho_e, order):
    """Derivatives of F(zeta) = K(zeta)/(zeta - x3) up to `order`."""
    scale = tau ** (1.0 / rho_e)
    e = ml_derivatives(rho_e, scale * zeta, order=order)
    k_deriv = [scale ** m * e[m] for m in range(order + 1)]
    gap = zeta - x3
    pole = [(-1.0) ** j * factorial(j) / gap ** (j + 1) for j in range(order + 1)]
    return [sum(comb(b, j) * k_deriv[b - j] * pole[j] for j in range(b + 1)) for b in range(order + 1)]


def _closed_partials(f_deriv, v):
    """Im of (1/(2v) d/dv)^a [F^(b)(y3 + i v)/v] for every (a, b) in PARTIALS."""
    out = {}
    for a, b in PARTIALS:
        H = f_deriv
        if a == 0:
            z = H[b] / v
        elif a == 1:
            z = (1j * H[b + 1] * v - H[b]) / (2.0 * v ** 3)
        elif a == 2:
            z = (-H[b + 2] * v ** 2 - 3j * H[b + 1] * v + 3.0 * H[b]) / (4.0 * v ** 5)
        else:
            z = (-1j * H[b + 3] * v ** 3 + 6.0 * H[b + 2] * v ** 2
                 + 15j * H[b + 1] * v - 15.0 * H[b]) / (8.0 * v ** 7)
        out[(a, b)] = z.imag
    return out


def _taylor_tables():
    """Factor tables for the small-v expansion of the partials."""
    tables = {}
    for a, b in PARTIALS:
        rows = []
        for n in range(a, TAYLOR_TERMS + 1):
            m = 2 * n + 1 + b
            factor = (-1.0) ** n * factorial(m) / factorial(2 * n + 1) * factorial(n) / factorial(n - a)
            rows.append((n - a, m, factor))
        tables[(a, b)] = rows
    return tables


_TAYLOR = _taylor_tables()


def _taylor_coefficients(y3, radius, x3, tau, rho_e):
    """Real Taylor coefficients of F at y3 from a Cauchy circle, shape (TAYLOR_POINTS, c)."""
    theta = 2.0 * np.pi * np.arange(TAYLOR_POINTS) / TAYLOR_POINTS
    ring = y3[None, :] + radius[None, :] * np.exp(1j * theta)[:, None]
    values = _kernel_and_pole(ring, x3, tau, rho_e, 0)[0]
    coeffs = np.fft.fft(values, axis=0) / TAYLOR_POINTS
    powers = radius[None, :] ** np.arange(TAYLOR_POINTS)[:, None]
    return (coeffs / powers).real


def _taylor_partials(coeffs, sigma):
    out = {}
    for key, rows in _TAYLOR.items():
        total = np.zeros_like(sigma)
        for power, m, factor in rows:
            total = total + factor * coeffs[m][None, :] * sigma ** power
        out[key] = total
    return out


def cone_jets(y, x, ks: Sequence[float], tau: float, rho_e: float,
              spec: Optional[QuadSpec] = None,
              settings: ConeQuadrature = ConeQuadrature()) -> List[CarlemanScalar]:
    """
    Cone-branch Carleman functions for several wave numbers at once.

    The integrand factor built from K is independent of k, so it is evaluated
    once per (u-node, field point) and reused for every wave number.

    Args:
        y (array): Field points, (N, 3).
        x (array): Pole on the axis of the cone.
        ks (sequence): Wave numbers.
        tau (float): Regularisation parameter.
        rho_e (float): Order of the Mittag-Leffler function; 1 gives E = exp.
        spec (QuadSpec | None): Override for the u-quadrature.

    Raises:
        SingularityError: If y = x.
        OverflowGuard: If K overflows in its growth sector.
    """
    if rho_e < 1.0:
        raise ValueError(f"cone branch needs rho_e >= 1, got {rho_e}")
    y, x, d = _offsets(y, x)
    ks = np.asarray(ks, dtype=float)
    x3 = float(x[2])
    s_all = d[:, 0] ** 2 + d[:, 1] ** 2
    y3_all = y[:, 2]
    h_all = d[:, 2]
    normaliser = float(ml_derivatives(rho_e, tau ** (1.0 / rho_e) * x3, order=0)[0].real)
    if not np.isfinite(normaliser) or normaliser <= 0:
        raise SingularityError("cone normalisation K(x3) is not positive", x3=x3, tau=tau)

    radius_all = 0.5 * np.minimum(np.abs(h_all), local_scale(y3_all, tau, rho_e))
    threshold_all = 0.5 * radius_all

    partials = np.zeros((len(ks), len(PARTIALS), y.shape[0]))
    worst = 0.0
    probe_spec = spec or cone_quad_spec(s_all, h_all, y3_all, tau, rho_e, ks, settings)
    per_point = probe_spec.doubled().nodes * len(ks) * len(PARTIALS) * 2
    n_panels = len(panel_edges(probe_spec.abel_length, probe_spec.panel, probe_spec.grading,
                               probe_spec.fine_panel, probe_spec.fine_until)) - 1
    chunk = max(1, CHUNK_BUDGET // max(1, per_point * n_panels))

    for start in range(0, y.shape[0], chunk):
        sl = slice(start, min(start + chunk, y.shape[0]))
        s, y3, h = s_all[sl], y3_all[sl], h_all[sl]
        radius, threshold = radius_all[sl], threshold_all[sl]
        use_taylor = bool(np.any((threshold > 0) & (s < threshold ** 2)))
        coeffs = None
        if use_taylor:
            safe_radius = np.where(radius > 0, radius, 1.0)
            coeffs = _taylor_coefficients(y3, safe_radius, x3, tau, rho_e)

        def integrand(u, s=s, y3=y3, threshold=threshold, coeffs=coeffs):
            sigma = u[:, None] ** 2 + s[None, :]
            v = np.sqrt(sigma)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                f_deriv = _kernel_and_pole(y3[None, :] + 1j * v, x3, tau, rho_e, 3)
                table = _closed_partials(f_deriv, v)
            if coeffs is not None:
                small = sigma < threshold[None, :] ** 2
                if np.any(small):
                    series = _taylor_partials(coeffs, sigma)
                    table = {key: np.where(small, series[key], table[key]) for key in table}
            stacked = np.stack([table[key] for key in PARTIALS], axis=1)
            waves = np.cos(u[:, None] * ks[None, :])
            return waves[:, :, None, None] * stacked[:, None, :, :]

        result = semiinf_quad(integrand, spec or cone_quad_spec(s, h, y3, tau, rho_e, ks, settings))
        partials[:, :, sl] = result.value
        worst = max(worst, result.error)

    partials /= C3 * normaliser
    worst /= abs(C3 * normaliser)
    logger.debug("cone kernel tau=%g rho=%g points=%d quadrature error %.3g", tau, rho_e, y.shape[0], worst)
    out = []
    for l, k in enumerate(ks):
        table = {key: partials[l, i] for i, key in enumerate(PARTIALS)}
        out.append(CarlemanScalar(jet_from_partials(d, table), float(k), tau, "cone", worst))
    return out


def phi_cone(y, x, k: float, tau: float, rho_e: float, spec: Optional[QuadSpec] = None) -> CarlemanScalar:
    """Cone-branch Carleman function for one wave number; see cone_jets."""
    return cone_jets(y, x, [k], tau, rho_e, spec)[0]


def pi_matrix(y, x, tau: float, branch: str, medium: Medium, rho_e: float = 1.0,
              with_dy: bool = True, cone_quad: ConeQuadrature = ConeQuadrature()) -> KernelMatrix:
    """
    Carleman matrix: the block algebra of the fundamental matrix applied to Phi(., x, k_l).

    Raises:
        ValueError: Unknown branch.
    """
    y, x, _ = _offsets(y, x)
    if branch == "cap":
        scalars = [phi_cap(y, x, k, tau) for k in medium.waves.k]
    elif branch == "cone":
        scalars = cone_jets(y, x, medium.waves.k, tau, rho_e, settings=cone_quad)
    else:
        raise ValueError(f"Unknown domain branch '{branch}'")
    return assemble_matrix([sc.jet for sc in scalars], medium.coeffs, f"carleman-{branch}", y, x, with_dy)


def pi_stress(y, x, tau: float, branch: str, medium: Medium, normals, rho_e: float = 1.0) -> KernelMatrix:
    return stress_apply(pi_matrix(y, x, tau, branch, medium, rho_e), normals, medium.params)


def carleman_representation(x, quad, f: np.ndarray, g: np.ndarray, tau: float, branch: str,
                            medium: Medium, rho_e: float = 1.0) -> np.ndarray:
    """The representation integral over `quad` with the Carleman matrix in place of Psi."""
    field = pi_matrix(quad.nodes, x, tau, branch, medium, rho_e)
    traction = stress_apply(field, quad.normals, medium.params)
    return boundary_pairing(field.values, traction.values, f, g, quad.weights)


def carleman_leak(x, sigma_quad, f: np.ndarray, g: np.ndarray, tau: float, branch: str,
                  medium: Medium, rho_e: float = 1.0) -> float:
    """Norm of the Sigma part of the Carleman representation; tends to 0 as tau grows."""
    return float(np.linalg.norm(carleman_representation(x, sigma_quad, f, g, tau, branch, medium, rho_e)))


def kernel_mass(x, sigma_quad, tau: float, branch: str, medium: Medium, rho_e: float = 1.0) -> float:
    """Integral over Sigma of |Pi| + |T Pi| (Frobenius norms per node)."""
    field = pi_matrix(sigma_quad.nodes, x, tau, branch, medium, rho_e)
    traction = stress_apply(field, sigma_quad.normals, medium.params)
    density = np.linalg.norm(field.values, axis=(1, 2)) + np.linalg.norm(traction.values, axis=(1, 2))
    return float(np.dot(sigma_quad.weights, density))

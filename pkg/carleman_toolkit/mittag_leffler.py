"""
Module: Mittag-Leffler Function
Description: E_rho(z) = sum_j z^j / Gamma(1 + j/rho) and its derivatives up to
             third order for complex arguments.

Method notes:
    - Series for |z| <= r_series(rho), where the largest term stays below ~1e4.
    - Exponential-plus-algebraic expansion for |z| >= r_asym(rho):
      E = rho exp(z^rho) [|arg z| < pi/rho] - sum_j z^{-j}/Gamma(1 - j/rho).
    - In between: inverse Laplace transform of s^{a-1}/(s^a - z), a = 1/rho, on an
      optimal parabolic contour plus the residues of the poles it leaves out.
    - rho = 1 and rho = 2 have closed forms, exp(z) and e^{z^2} erfc(-z).
    - rho < 1 is only evaluated by its (then well conditioned) series.
"""

import logging
from functools import lru_cache

import numpy as np
from scipy import special

from .exceptions import OverflowGuard, QuadratureFailure

logger = logging.getLogger(__name__)

LOG_EPS = np.log(np.finfo(float).eps)
TARGET_LOG_EPS = np.log(1e-15)
# Re(z^rho) above this would overflow exp() in the growth sector.
EXPONENT_BUDGET = 700.0
ASYMPTOTIC_FLOOR = 12.0
SERIES_LIMIT_SUBUNIT = 50.0
MAX_SERIES_TERMS = 600
MAX_ASYMPTOTIC_TERMS = 200
CAUCHY_RADIUS = 0.5
CAUCHY_POINTS = 48
TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


@lru_cache(maxsize=32)
def regime_radii(rho_e: float):
    """
    Switch radii of the three regimes for order rho_e.

    Returns:
        tuple: (r_series, r_asym, asymptotic term count).
    """
    if rho_e < 1.0:
        return SERIES_LIMIT_SUBUNIT, np.inf, 0
    r_series = min(5.0, np.log(1e4 * rho_e) ** (1.0 / rho_e))
    a = 1.0 / rho_e
    j = np.arange(1, MAX_ASYMPTOTIC_TERMS + 1)
    weights = np.abs(special.rgamma(1.0 - a * j))
    radius = ASYMPTOTIC_FLOOR
    while True:
        terms = weights * radius ** (-j.astype(float))
        small = np.nonzero(terms < 1e-17)[0]
        # Exact zeros come from poles of Gamma; the first sizeable-then-small index counts.
        nonzero_small = [i for i in small if weights[i] > 0] or list(small)
        if nonzero_small:
            n_terms = int(nonzero_small[0]) + 1
            break
        radius += 1.0
        if radius > 400.0:
            raise QuadratureFailure("no asymptotic radius found", regime="asymptotic", rho=rho_e)
    logger.debug("mittag-leffler rho=%.4g: series |z|<=%.3g, asymptotic |z|>=%.3g (%d terms)",
                 rho_e, r_series, radius, n_terms)
    return float(r_series), float(radius), n_terms


def _check_growth(rho_e: float, z: np.ndarray):
    if rho_e < 1.0:
        return
    growth = np.abs(np.angle(z)) < np.pi / (2.0 * rho_e)
    exponent = np.real(np.power(z.astype(complex), rho_e))
    if np.any(growth & (exponent > EXPONENT_BUDGET)):
        worst = float(np.max(np.where(growth, exponent, -np.inf)))
        raise OverflowGuard(
            "Mittag-Leffler argument too large",
            sector=f"|arg z| < pi/{2.0 * rho_e:g}",
            re_z_rho=round(worst, 3),
        )


def _series(rho_e: float, z: np.ndarray, order: int) -> np.ndarray:
    a = 1.0 / rho_e
    out = np.zeros((order + 1,) + z.shape, dtype=complex)
    j = np.arange(MAX_SERIES_TERMS, dtype=float)
    log_coef = -special.gammaln(1.0 + a * j)
    for m in range(order + 1):
        jm = j[m:]
        # Falling factorial j!/(j-m)!.
        falling = np.exp(special.gammaln(jm + 1.0) - special.gammaln(jm - m + 1.0))
        coef = falling * np.exp(log_coef[m:])
        # Horner evaluation keeps the sum stable for moderate |z|.
        acc = np.zeros(z.shape, dtype=complex)
        for c in coef[::-1]:
            acc = acc * z + c
        out[m] = acc
    return out


def _asymptotic(rho_e: float, z: np.ndarray, order: int) -> np.ndarray:
    a = 1.0 / rho_e
    _, _, n_terms = regime_radii(rho_e)
    out = np.zeros((order + 1,) + z.shape, dtype=complex)
    inside = np.abs(np.angle(z)) < a * np.pi

    p = rho_e
    zp = np.power(z, p)
    expo = np.where(inside, np.exp(np.where(inside, zp, 0.0)), 0.0)
    factors = [
        np.ones_like(z),
        p * np.power(z, p - 1),
        p * (p - 1) * np.power(z, p - 2) + p ** 2 * np.power(z, 2 * p - 2),
        p * (p - 1) * (p - 2) * np.power(z, p - 3)
        + 3 * p ** 2 * (p - 1) * np.power(z, 2 * p - 3)
        + p ** 3 * np.power(z, 3 * p - 3),
    ]
    for m in range(order + 1):
        out[m] = rho_e * factors[m] * expo

    for j in range(1, n_terms + 1):
        weight = special.rgamma(1.0 - a * j)
        if weight == 0.0:
            continue
        for m in range(order + 1):
            rising = special.poch(j, m)
            out[m] -= weight * (-1) ** m * rising * np.power(z, -(j + m))
    return out


def _optimal_param_rb(phi_j, phi_j1, p_j, q_j, log_epsilon):
    """Contour parameters for a region bounded by two singularities."""
    fac = 1.01
    f_max = np.exp(log_epsilon - LOG_EPS)
    sq_j = np.sqrt(phi_j)
    threshold = 2.0 * np.sqrt(log_epsilon - LOG_EPS)
    sq_j1 = min(np.sqrt(phi_j1), threshold - sq_j)
    f_bar = 1.0
    admissible = False
    bar_j = sq_j
    bar_j1 = sq_j1

    if p_j < 1e-14 and q_j < 1e-14:
        admissible = True
    elif p_j < 1e-14:
        f_min = fac * (sq_j / (sq_j1 - sq_j)) ** q_j if sq_j > 0 else fac
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fq = f_bar ** (-1.0 / q_j)
            bar_j1 = (2.0 * sq_j1 - fq * sq_j) / (2.0 + fq)
            admissible = True
    elif q_j < 1e-14:
        f_min = fac * (sq_j1 / (sq_j1 - sq_j)) ** p_j
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / p_j)
            bar_j = (2.0 * sq_j + fp * sq_j1) / (2.0 - fp)
            admissible = True
    else:
        f_min = fac * (sq_j + sq_j1) / (sq_j1 - sq_j) ** max(p_j, q_j)
        if f_min < f_max:
            f_min = max(f_min, 1.5)
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / p_j)
            fq = f_bar ** (-1.0 / q_j)
            w = -phi_j1 / log_epsilon
            den = 2.0 + w - (1.0 + w) * fp + fq
            bar_j = ((2.0 + w + fq) * sq_j + fp * sq_j1) / den
            bar_j1 = (-(1.0 + w) * fq * sq_j + (2.0 + w - (1.0 + w) * fp) * sq_j1) / den
            admissible = True

    if not admissible:
        return 0.0, 0.0, np.inf
    log_epsilon = log_epsilon - np.log(f_bar)
    w = -bar_j1 ** 2 / log_epsilon
    mu = (((1.0 + w) * bar_j + bar_j1) / (2.0 + w)) ** 2
    h = -2.0 * np.pi / log_epsilon * (bar_j1 - bar_j) / ((1.0 + w) * bar_j + bar_j1)
    n = np.ceil(np.sqrt(1.0 - log_epsilon / mu) / h)
    return mu, h, n


def _optimal_param_ru(phi_j, p_j, log_epsilon):
    """Contour parameters for the unbounded region right of the last singularity."""
    sq_phi = np.sqrt(phi_j)
    phibar = phi_j * 1.01 if phi_j > 0 else 0.01
    sq_phibar = np.sqrt(phibar)
    f_min, f_max, f_tar = 1.0, 10.0, 5.0
    for _ in range(100):
        log_eps_phi = log_epsilon / phibar
        n = np.ceil(phibar / np.pi * (1.0 - 1.5 * log_eps_phi + np.sqrt(1.0 - 2.0 * log_eps_phi)))
        big_a = np.pi * n / phibar
        sq_mu = sq_phibar * abs(4.0 - big_a) / abs(7.0 - np.sqrt(1.0 + 12.0 * big_a))
        f_bar = ((sq_phibar - sq_phi) / sq_mu) ** (-p_j)
        if p_j < 1e-14 or f_min < f_bar < f_max:
            break
        sq_phibar = f_tar ** (-1.0 / n) * sq_mu
        phibar = sq_phibar ** 2
    mu = sq_mu ** 2
    h = (-3.0 * big_a - 2.0 + 2.0 * np.sqrt(1.0 + 12.0 * big_a)) / (4.0 - big_a) / n

    threshold = log_epsilon - LOG_EPS
    if mu > threshold:
        q = 0.0 if abs(p_j) < 1e-14 else f_tar ** (-1.0 / p_j) * np.sqrt(mu)
        phibar = (q + sq_phi) ** 2
        if phibar < threshold:
            w = np.sqrt(LOG_EPS / (LOG_EPS - log_epsilon))
            u = np.sqrt(-phibar / LOG_EPS)
            mu = threshold
            n = np.ceil(w * log_epsilon / (2.0 * np.pi * (u * w - 1.0)))
            h = w / n
        else:
            n, h = np.inf, 0.0
    return mu, h, n


def _contour_value(rho_e: float, z: complex) -> complex:
    """E_rho at one point by Laplace inversion on a parabolic contour."""
    a = 1.0 / rho_e
    theta = np.angle(z)
    k_min = int(np.ceil(-a / 2.0 - theta / (2.0 * np.pi)))
    k_max = int(np.floor(a / 2.0 - theta / (2.0 * np.pi)))
    k_vals = np.arange(k_min, k_max + 1)
    poles = abs(z) ** rho_e * np.exp(1j * (theta + 2.0 * np.pi * k_vals) * rho_e)
    phi = 0.5 * (poles.real + np.abs(poles))
    order = np.argsort(phi)
    poles, phi = poles[order], phi[order]
    keep = phi > 1e-15
    poles = np.concatenate(([0.0], poles[keep]))
    phi = np.concatenate(([0.0], phi[keep]))
    n_sing = len(poles)
    p = np.concatenate(([0.0], np.ones(n_sing - 1)))
    q = np.concatenate((np.ones(n_sing - 1), [np.inf]))
    phi_ext = np.concatenate((phi, [np.inf]))

    log_epsilon = TARGET_LOG_EPS
    regions = [j for j in range(n_sing)
               if phi_ext[j] < log_epsilon - LOG_EPS and phi_ext[j] < phi_ext[j + 1]]
    while True:
        params = []
        for j in regions:
            if j < n_sing - 1:
                params.append(_optimal_param_rb(phi_ext[j], phi_ext[j + 1], p[j], q[j], log_epsilon))
            else:
                params.append(_optimal_param_ru(phi_ext[j], p[j], log_epsilon))
        counts = [prm[2] for prm in params]
        if min(counts) > 200 and log_epsilon < -2.0:
            log_epsilon += np.log(10.0)
            continue
        break
    best = int(np.argmin(counts))
    mu, h, n = params[best]
    if not np.isfinite(n):
        raise QuadratureFailure("no admissible inversion contour", regime="contour", z=z, rho=rho_e)
    region = regions[best]

    u = h * np.arange(-n, n + 1)
    s = mu * (1j * u + 1.0) ** 2
    ds = 2.0 * mu * (1j - u)
    integrand = np.exp(s) * np.power(s, a - 1.0) / (np.power(s, a) - z) * ds
    integral = h * np.sum(integrand) / (2j * np.pi)
    residues = np.sum(rho_e * np.exp(poles[region + 1:]))
    return complex(integral + residues)


def _contour(rho_e: float, z: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((order + 1,) + z.shape, dtype=complex)
    flat = z.ravel()
    values = np.array([_contour_value(rho_e, zi) for zi in flat]).reshape(z.shape)
    out[0] = values
    if order == 0:
        return out
    # Taylor coefficients from a Cauchy circle; points may fall in any regime.
    angles = 2.0 * np.pi * np.arange(CAUCHY_POINTS) / CAUCHY_POINTS
    ring = flat[:, None] + CAUCHY_RADIUS * np.exp(1j * angles)[None, :]
    ring_values = _values(rho_e, ring)
    for m in range(1, order + 1):
        coef = np.mean(ring_values * np.exp(-1j * m * angles)[None, :], axis=1)
        out[m] = (special.factorial(m) * coef / CAUCHY_RADIUS ** m).reshape(z.shape)
    return out


def _values(rho_e: float, z: np.ndarray) -> np.ndarray:
    return _dispatch(rho_e, z, 0)[0]


def _dispatch(rho_e: float, z: np.ndarray, order: int) -> np.ndarray:
    r_series, r_asym, _ = regime_radii(rho_e)
    modulus = np.abs(z)
    out = np.zeros((order + 1,) + z.shape, dtype=complex)
    in_series = modulus <= r_series
    in_asym = modulus >= r_asym
    in_contour = ~(in_series | in_asym)
    if rho_e < 1.0 and np.any(~in_series):
        raise QuadratureFailure("series regime exceeded for order below one",
                                regime="series", rho=rho_e, limit=r_series)
    if np.any(in_series):
        out[:, in_series] = _series(rho_e, z[in_series], order)
    if np.any(in_asym):
        out[:, in_asym] = _asymptotic(rho_e, z[in_asym], order)
    if np.any(in_contour):
        out[:, in_contour] = _contour(rho_e, z[in_contour], order)
    return out


def _closed_form(rho_e: float, z: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((order + 1,) + z.shape, dtype=complex)
    if rho_e == 1.0:
        value = np.exp(z)
        out[:] = value
        return out
    # rho = 2: E = w(-iz) = e^{z^2} erfc(-z); E' = 2zE + 2/sqrt(pi), E'' = 2E + 2zE', E''' = 4E' + 2zE''.
    out[0] = special.wofz(-1j * z)
    if order >= 1:
        out[1] = 2.0 * z * out[0] + TWO_OVER_SQRT_PI
    if order >= 2:
        out[2] = 2.0 * out[0] + 2.0 * z * out[1]
    if order >= 3:
        out[3] = 4.0 * out[1] + 2.0 * z * out[2]
    return out


def ml_derivatives(rho_e: float, z, order: int = 3, method: str = "auto") -> np.ndarray:
    """
    E_rho and its first `order` derivatives.

    Args:
        rho_e (float): Order; >= 1, or below 1 within the series regime only.
        z (complex | ndarray): Arguments.
        order (int): Highest derivative, 0..3.
        method (str): "auto" uses closed forms for rho = 1, 2; "regimes" forces the
            series/contour/asymptotic evaluator.

    Returns:
        ndarray: Shape (order + 1, *z.shape), complex.

    Raises:
        OverflowGuard: Growth-sector argument with Re(z^rho) above the exponent budget.
        QuadratureFailure: No convergent regime for the argument.
    """
    if not 0 <= order <= 3:
        raise ValueError("Derivative order must be between 0 and 3")
    if rho_e <= 0:
        raise ValueError("Mittag-Leffler order must be positive")
    z = np.asarray(z, dtype=complex)
    _check_growth(rho_e, z)
    if method == "auto" and rho_e in (1.0, 2.0):
        return _closed_form(rho_e, z, order)
    if method not in ("auto", "regimes"):
        raise ValueError(f"Unknown evaluation method '{method}'")
    return _dispatch(rho_e, z, order)


def mittag_leffler(rho_e: float, z, method: str = "auto"):
    """E_rho(z) = sum_j z^j / Gamma(1 + j/rho_e)."""
    value = ml_derivatives(rho_e, z, order=0, method=method)[0]
    return value[()] if value.ndim == 0 else value


def ml_deriv(rho_e: float, z, method: str = "auto"):
    """dE_rho/dz."""
    value = ml_derivatives(rho_e, z, order=1, method=method)[1]
    return value[()] if value.ndim == 0 else value


def ml_regime(rho_e: float, z) -> np.ndarray:
    """Label of the regime that evaluates each argument: series, contour or asymptotic."""
    r_series, r_asym, _ = regime_radii(rho_e)
    modulus = np.abs(np.asarray(z, dtype=complex))
    return np.where(modulus <= r_series, "series", np.where(modulus >= r_asym, "asymptotic", "contour"))

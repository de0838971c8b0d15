"""
Module: Medium
Description: Coefficients of the couple-stress medium, their admissibility
             conditions, the four wave numbers and the weights of the
             fundamental matrix.

Basis:
    - Metaharmonic system: (mu+alpha)(Laplacian - sigma1^2)u + (lambda+mu-alpha) grad div u
      + 2 alpha rot w = 0 and (nu+beta)(Laplacian - sigma2^2)w + (epsilon+nu-beta) grad div w
      + 2 alpha rot u = 0.
    - sigma1^2 = rho sigma^2/(mu+alpha), sigma2^2 = (theta sigma^2 - 4 alpha)/(nu+beta).
    - k3^2, k4^2 solve z^2 - (sigma1^2 + sigma2^2 - c) z + sigma1^2 sigma2^2 = 0,
      c = 4 alpha^2/((mu+alpha)(nu+beta)).
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import MaterialError

logger = logging.getLogger(__name__)

# Relative tolerance under which k3^2 and k4^2 count as a double root.
DOUBLE_ROOT_RTOL = 1e-10


@dataclass(frozen=True)
class MaterialParams:
    lambda_c: float
    mu_c: float
    nu_c: float
    beta_c: float
    epsilon_c: float
    alpha_c: float
    rho_d: float
    theta_c: float
    sigma_f: float

    @property
    def shear_u(self) -> float:
        """mu + alpha, the Laplacian weight of the displacement equation."""
        return self.mu_c + self.alpha_c

    @property
    def shear_w(self) -> float:
        """nu + beta, the Laplacian weight of the rotation equation."""
        return self.nu_c + self.beta_c

    @property
    def inertia_u(self) -> float:
        return self.rho_d * self.sigma_f ** 2

    @property
    def inertia_w(self) -> float:
        """theta sigma^2 - 4 alpha."""
        return self.theta_c * self.sigma_f ** 2 - 4.0 * self.alpha_c

    @classmethod
    def from_dict(cls, data: dict) -> "MaterialParams":
        return cls(**{name: float(data[name]) for name in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class WaveNumbers:
    sigma1_sq: float
    sigma2_sq: float
    k: tuple

    @property
    def k_sq(self) -> np.ndarray:
        return np.asarray(self.k) ** 2

    @property
    def k_max(self) -> float:
        return max(self.k)


@dataclass(frozen=True, eq=False)
class KernelCoeffs:
    alpha_l: np.ndarray = field(repr=False)
    beta_l: np.ndarray = field(repr=False)
    gamma_l: np.ndarray = field(repr=False)
    delta_l: np.ndarray = field(repr=False)
    eps_l: np.ndarray = field(repr=False)
    coupling: float = 0.0

    def as_table(self) -> dict:
        """All twenty weights keyed by name, l = 1..4 in order."""
        return {
            "alpha": self.alpha_l.tolist(),
            "beta": self.beta_l.tolist(),
            "gamma": self.gamma_l.tolist(),
            "delta": self.delta_l.tolist(),
            "eps": self.eps_l.tolist(),
        }


def validate(params: MaterialParams) -> List[str]:
    """
    Check the admissibility conditions of the medium.

    Args:
        params (MaterialParams): Medium coefficients.

    Returns:
        list[str]: Names of every violated inequality; empty when admissible.

    Examples:
        >>> validate(MaterialParams(1, -1, 1, 1, 1, 0.5, 1, 1, 2))
        ['mu>0']
    """
    p = params
    checks = [
        ("mu>0", p.mu_c > 0),
        ("3lambda+2mu>0", 3 * p.lambda_c + 2 * p.mu_c > 0),
        ("alpha>0", p.alpha_c > 0),
        ("epsilon>0", p.epsilon_c > 0),
        ("3epsilon+2nu>0", 3 * p.epsilon_c + 2 * p.nu_c > 0),
        ("epsilon+2nu>0", p.epsilon_c + 2 * p.nu_c > 0),
        ("beta>0", p.beta_c > 0),
        ("nu+beta>0", p.nu_c + p.beta_c > 0),
        ("rho>0", p.rho_d > 0),
        ("sigma>0", p.sigma_f > 0),
        ("theta*sigma^2>4alpha", p.theta_c * p.sigma_f ** 2 > 4 * p.alpha_c),
    ]
    return [name for name, ok in checks if not ok]


def require_valid(params: MaterialParams) -> MaterialParams:
    violations = validate(params)
    if violations:
        raise MaterialError("inadmissible medium", violations=",".join(violations))
    return params


def coupling_constant(params: MaterialParams) -> float:
    """c = 4 alpha^2/((mu+alpha)(nu+beta))."""
    return 4.0 * params.alpha_c ** 2 / (params.shear_u * params.shear_w)


def wave_numbers(params: MaterialParams) -> WaveNumbers:
    """
    Derive sigma1^2, sigma2^2 and the four wave numbers of the medium.

    k3^2 and k4^2 are the roots of k^4 - (sigma1^2 + sigma2^2 - c) k^2 + sigma1^2 sigma2^2.
    The coupling c is subtracted because the kernels solve (Delta - k^2) phi = 0; with +c the
    example medium would give 2 +- 2/sqrt(3) (3.1547, 0.8453) instead of 2 and 4/3.

    Raises:
        MaterialError: Inadmissible medium, or k3^2/k4^2 not real and positive.
    """
    p = require_valid(params)
    sigma1_sq = p.inertia_u / p.shear_u
    sigma2_sq = p.inertia_w / p.shear_w
    k1_sq = p.inertia_u / (p.lambda_c + 2 * p.mu_c)
    k2_sq = p.inertia_w / (p.epsilon_c + 2 * p.nu_c)

    total = sigma1_sq + sigma2_sq - coupling_constant(p)
    product = sigma1_sq * sigma2_sq
    disc = total ** 2 - 4 * product
    if disc < 0 or total <= 0:
        raise MaterialError(
            "transverse wave numbers are complex", discriminant=disc, sum=total
        )
    root = np.sqrt(disc)
    k3_sq = 0.5 * (total + root)
    # Vieta keeps the smaller root accurate when the discriminant nearly equals total^2.
    k4_sq = product / k3_sq

    wn = WaveNumbers(
        sigma1_sq=sigma1_sq,
        sigma2_sq=sigma2_sq,
        k=tuple(float(np.sqrt(v)) for v in (k1_sq, k2_sq, k3_sq, k4_sq)),
    )
    logger.debug("wave numbers k=%s sigma1^2=%.6g sigma2^2=%.6g", wn.k, sigma1_sq, sigma2_sq)
    return wn


def kernel_coeffs(params: MaterialParams, wn: WaveNumbers) -> KernelCoeffs:
    """
    Weights of the fundamental matrix for kernels e^{-k r}/(4 pi r).

    Raises:
        MaterialError: k3^2 = k4^2 (degenerate medium).
    """
    p = params
    k_sq = wn.k_sq
    gap = k_sq[2] - k_sq[3]
    if abs(gap) <= DOUBLE_ROOT_RTOL * k_sq[2]:
        raise MaterialError("degenerate medium: k3 = k4", k3_sq=k_sq[2], k4_sq=k_sq[3])

    sign = np.array([-1.0, 1.0, -1.0, 1.0])
    transverse = np.array([0.0, 0.0, 1.0, 1.0])
    longitudinal = np.array([1.0, 0.0, 0.0, 0.0])
    rotational = np.array([0.0, 1.0, 0.0, 0.0])

    alpha_l = sign * (wn.sigma2_sq - k_sq) * transverse / (p.shear_u * gap)
    beta_l = longitudinal / p.inertia_u - alpha_l / k_sq
    gamma_l = sign * (wn.sigma1_sq - k_sq) * transverse / (p.shear_w * gap)
    delta_l = rotational / p.inertia_w - gamma_l / k_sq
    eps_l = sign * transverse / (p.shear_w * gap)

    return KernelCoeffs(
        alpha_l=alpha_l,
        beta_l=beta_l,
        gamma_l=gamma_l,
        delta_l=delta_l,
        eps_l=eps_l,
        coupling=2.0 * p.alpha_c / p.shear_u,
    )


@dataclass(frozen=True, eq=False)
class Medium:
    """Coefficients with their derived wave numbers and kernel weights, built once."""

    params: MaterialParams
    waves: WaveNumbers
    coeffs: KernelCoeffs

    @classmethod
    def build(cls, params: MaterialParams) -> "Medium":
        waves = wave_numbers(params)
        return cls(params=params, waves=waves, coeffs=kernel_coeffs(params, waves))

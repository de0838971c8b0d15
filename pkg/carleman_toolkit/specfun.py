"""
Module: Special Functions
Description: Bessel functions, the Yukawa point kernel with its derivative
             tensors up to third order, and the discontinuous Weber-type
             integral that gives the tau-derivative of the cap kernel.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import SingularityError

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi

# Below this argument J_m(z)/z^m is taken from its Taylor polynomial.
SMALL_BESSEL_ARG = 1e-2


def bessel_j0(x):
    """J0 of a real scalar or array."""
    return special.j0(x)


def bessel_j1(x):
    """J1 of a real scalar or array."""
    return special.j1(x)


@dataclass
class ScalarJet:
    """
    Value and Cartesian derivatives of a scalar field at a batch of points.

    Shapes: value (N,), grad (N, 3), hess (N, 3, 3), third (N, 3, 3, 3).
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray

    def __add__(self, other: "ScalarJet") -> "ScalarJet":
        return ScalarJet(
            self.value + other.value,
            self.grad + other.grad,
            self.hess + other.hess,
            self.third + other.third,
        )

    def scaled(self, factor) -> "ScalarJet":
        return ScalarJet(self.value * factor, self.grad * factor, self.hess * factor, self.third * factor)

    def take(self, index) -> "ScalarJet":
        return ScalarJet(self.value[index], self.grad[index], self.hess[index], self.third[index])

    @classmethod
    def zeros(cls, n: int) -> "ScalarJet":
        return cls(np.zeros(n), np.zeros((n, 3)), np.zeros((n, 3, 3)), np.zeros((n, 3, 3, 3)))


def yukawa_kernel(k: float, r):
    """
    Point kernel e^{-k r}/(4 pi r) of (Laplacian - k^2).

    Args:
        k (float): Wave number, k >= 0.
        r (float | ndarray): Distances, r > 0.

    Returns:
        float | ndarray: Kernel values.

    Raises:
        SingularityError: If any r is zero.

    Examples:
        >>> round(yukawa_kernel(0.0, 1.0), 7)
        0.0795775
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise SingularityError("yukawa kernel evaluated at r = 0", k=k)
    value = np.exp(-k * r) / (FOUR_PI * r)
    return value[()] if value.ndim == 0 else value


def yukawa_jet(k: float, d: np.ndarray) -> ScalarJet:
    """Derivatives of e^{-k|d|}/(4 pi |d|) with respect to d, up to third order."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.linalg.norm(d, axis=1)
    if np.any(r <= 0.0):
        raise SingularityError("yukawa kernel evaluated at r = 0", k=k)
    kr = k * r
    decay = np.exp(-kr) / FOUR_PI
    f0 = decay / r
    # Radial factors: g = f'/r, h2 = g'/r, h3 = h2'/r.
    g = -decay * (1.0 + kr) / r ** 3
    h2 = decay * (kr ** 2 + 3.0 * kr + 3.0) / r ** 5
    h3 = -decay * (kr ** 3 + 6.0 * kr ** 2 + 15.0 * kr + 15.0) / r ** 7

    eye = np.eye(3)
    grad = g[:, None] * d
    hess = g[:, None, None] * eye + h2[:, None, None] * np.einsum("ni,nj->nij", d, d)
    sym = (
        np.einsum("ij,nk->nijk", eye, d)
        + np.einsum("ik,nj->nijk", eye, d)
        + np.einsum("jk,ni->nijk", eye, d)
    )
    third = h2[:, None, None, None] * sym + h3[:, None, None, None] * np.einsum("ni,nj,nk->nijk", d, d, d)
    return ScalarJet(f0, grad, hess, third)


def j0_sqrt_derivatives(big_z: np.ndarray, order: int = 3) -> np.ndarray:
    """
    Derivatives of Z -> J0(sqrt(Z)) for Z >= 0.

    The m-th derivative equals (-1/2)^m J_m(z)/z^m with z = sqrt(Z).

    Returns:
        ndarray: Shape (order + 1, *Z.shape).
    """
    big_z = np.asarray(big_z, dtype=float)
    z = np.sqrt(np.maximum(big_z, 0.0))
    small = z < SMALL_BESSEL_ARG
    safe = np.where(small, 1.0, z)
    out = np.empty((order + 1,) + big_z.shape)
    for m in range(order + 1):
        exact = special.jv(m, safe) / safe ** m
        lead = 1.0 / (2.0 ** m * special.factorial(m))
        taylor = lead * (1.0 - z ** 2 / (4.0 * (m + 1)) + z ** 4 / (32.0 * (m + 1) * (m + 2)))
        out[m] = (-0.5) ** m * np.where(small, taylor, exact)
    return out


def weber_disc(tau: float, k: float, s):
    """
    Closed form of the integral of sin(tau sqrt(u^2+s))/sqrt(u^2+s) cos(k u) over u > 0.

    Zero for tau < k and (pi/2) J0(sqrt(s (tau^2 - k^2))) for tau > k.

    Raises:
        SingularityError: At the branch point tau = k.
    """
    if abs(tau - k) <= 1e-12 * max(1.0, abs(k)):
        raise SingularityError("weber integral is discontinuous at tau = k", tau=tau, k=k)
    s = np.asarray(s, dtype=float)
    if tau < k:
        value = np.zeros_like(s)
    else:
        value = 0.5 * np.pi * special.j0(np.sqrt(s * (tau ** 2 - k ** 2)))
    return value[()] if value.ndim == 0 else value

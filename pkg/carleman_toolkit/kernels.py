"""
Module: Kernel Matrices
Description: 6x6 block kernels of the couple-stress system. Assembles the
             fundamental matrix from Yukawa kernels (and the Carleman matrix
             from any scalar kernels with the same block algebra), applies
             the stress operator, and checks the system by finite differences.

Basis:
    - Block (1): sum_l (delta_kj alpha_l + beta_l d_k d_j) phi_l.
    - Blocks (2) = (3): -(2 alpha/(mu+alpha)) sum_l eps_l sum_p e_kjp d_p phi_l.
    - Block (4): sum_l (delta_kj gamma_l + delta_l d_k d_j) phi_l.
    - Stress: T1 = lambda n_k d_j + (mu-alpha) n_j d_k + (mu+alpha) delta_kj d_n,
      T2 = -2 alpha sum_p e_kjp n_p, T3 = 0, T4 as T1 with (epsilon, nu-beta, nu+beta).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import GeometryError, SingularityError
from .material import KernelCoeffs, MaterialParams, Medium
from .specfun import ScalarJet, yukawa_jet

logger = logging.getLogger(__name__)

LEVI_CIVITA = np.zeros((3, 3, 3))
LEVI_CIVITA[0, 1, 2] = LEVI_CIVITA[1, 2, 0] = LEVI_CIVITA[2, 0, 1] = 1.0
LEVI_CIVITA[0, 2, 1] = LEVI_CIVITA[2, 1, 0] = LEVI_CIVITA[1, 0, 2] = -1.0

NORMAL_TOL = 1e-10

# Fourth-order central stencils: offsets and weights for d/dx and d2/dx2.
FIRST_STENCIL = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))
SECOND_STENCIL = ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12), (1, 16.0 / 12), (2, -1.0 / 12))


@dataclass
class KernelMatrix:
    """
    A batch of 6x6 kernels at field points y for one pole x.

    values has shape (N, 6, C) (C = 6 for kernels, 1 for single fields) and
    dy, when present, holds the y-derivatives with shape (N, 3, 6, C).
    """

    values: np.ndarray
    kind: str
    y: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    dy: Optional[np.ndarray] = None

    @property
    def b11(self):
        return self.values[:, :3, :3]

    @property
    def b12(self):
        return self.values[:, :3, 3:]

    @property
    def b21(self):
        return self.values[:, 3:, :3]

    @property
    def b22(self):
        return self.values[:, 3:, 3:]

    def __len__(self):
        return self.values.shape[0]

    def apply(self, strengths: np.ndarray) -> "KernelMatrix":
        """Contract the column index with a 6-vector (or a (6, C) block)."""
        strengths = np.asarray(strengths, dtype=float).reshape(6, -1)
        values = np.einsum("nrc,cq->nrq", self.values, strengths)
        dy = None if self.dy is None else np.einsum("nmrc,cq->nmrq", self.dy, strengths)
        return KernelMatrix(values, self.kind, self.y, self.x, dy)


def as_points(points) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float))


def assemble_matrix(jets: Sequence[ScalarJet], coeffs: KernelCoeffs, kind: str,
                    y=None, x=None, with_dy: bool = True) -> KernelMatrix:
    """Combine the four scalar kernels (with y-derivatives) into the 6x6 block kernel."""
    n = jets[0].value.shape[0]
    eye = np.eye(3)
    values = np.zeros((n, 6, 6))
    dy = np.zeros((n, 3, 6, 6)) if with_dy else None

    grad_eps = np.zeros((n, 3))
    hess_eps = np.zeros((n, 3, 3))
    for l, jet in enumerate(jets):
        a, b = coeffs.alpha_l[l], coeffs.beta_l[l]
        g, d = coeffs.gamma_l[l], coeffs.delta_l[l]
        values[:, :3, :3] += a * jet.value[:, None, None] * eye + b * jet.hess
        values[:, 3:, 3:] += g * jet.value[:, None, None] * eye + d * jet.hess
        grad_eps += coeffs.eps_l[l] * jet.grad
        if with_dy:
            # dy[:, m, k, j]: derivative index m comes first.
            dy[:, :, :3, :3] += a * np.einsum("nm,kj->nmkj", jet.grad, eye) \
                + b * np.einsum("nkjm->nmkj", jet.third)
            dy[:, :, 3:, 3:] += g * np.einsum("nm,kj->nmkj", jet.grad, eye) \
                + d * np.einsum("nkjm->nmkj", jet.third)
            hess_eps += coeffs.eps_l[l] * jet.hess

    coupling = -coeffs.coupling * np.einsum("kjp,np->nkj", LEVI_CIVITA, grad_eps)
    values[:, :3, 3:] = coupling
    values[:, 3:, :3] = coupling
    if with_dy:
        d_coupling = -coeffs.coupling * np.einsum("kjp,npm->nmkj", LEVI_CIVITA, hess_eps)
        dy[:, :, :3, 3:] = d_coupling
        dy[:, :, 3:, :3] = d_coupling
    return KernelMatrix(values, kind, y, x, dy)


def psi_matrix(y, x, medium: Medium, with_dy: bool = True) -> KernelMatrix:
    """
    Fundamental matrix Psi(y, x) at a batch of field points.

    Args:
        y (array): Field points, shape (3,) or (N, 3).
        x (array): Pole, shape (3,).
        medium (Medium): Material with wave numbers and weights.
        with_dy (bool): Also return the y-derivatives needed by the stress operator.

    Raises:
        SingularityError: If any y coincides with x.
    """
    y = as_points(y)
    x = np.asarray(x, dtype=float).reshape(3)
    d = y - x
    if np.any(np.linalg.norm(d, axis=1) == 0.0):
        raise SingularityError("fundamental matrix evaluated at y = x")
    jets = [yukawa_jet(k, d) for k in medium.waves.k]
    return assemble_matrix(jets, medium.coeffs, "fundamental", y, x, with_dy)


def check_normals(normals: np.ndarray) -> np.ndarray:
    normals = as_points(normals)
    deviation = np.abs(np.linalg.norm(normals, axis=1) - 1.0)
    if np.any(deviation > NORMAL_TOL):
        worst = int(np.argmax(deviation))
        raise GeometryError("normal is not a unit vector", node=worst, deviation=float(deviation[worst]))
    return normals


def stress_apply(field: KernelMatrix, normals, params: MaterialParams) -> KernelMatrix:
    """
    Apply T(d_y, n) columnwise to a kernel field carrying y-derivatives.

    The result keeps the column layout of the input: entry (r, c) is row r of the
    traction of column c. Transposition for the representation formulas is left to
    the caller.

    Raises:
        GeometryError: If a normal deviates from unit length by more than 1e-10.
    """
    if field.dy is None:
        raise ValueError("stress_apply needs a field with y-derivatives")
    n = check_normals(normals)
    if n.shape[0] == 1 and len(field) > 1:
        n = np.repeat(n, len(field), axis=0)
    p = params
    u, w = field.values[:, :3, :], field.values[:, 3:, :]
    du, dw = field.dy[:, :, :3, :], field.dy[:, :, 3:, :]

    def first_order(grad, lam, cross, shear):
        div = np.einsum("nmmc->nc", grad)
        return (lam * n[:, :, None] * div[:, None, :]
                + cross * np.einsum("nj,nkjc->nkc", n, grad)
                + shear * np.einsum("nm,nmkc->nkc", n, grad))

    rot = -2.0 * p.alpha_c * np.einsum("kjp,np,njc->nkc", LEVI_CIVITA, n, w)
    out = np.empty_like(field.values)
    out[:, :3, :] = first_order(du, p.lambda_c, p.mu_c - p.alpha_c, p.mu_c + p.alpha_c) + rot
    out[:, 3:, :] = first_order(dw, p.epsilon_c, p.nu_c - p.beta_c, p.nu_c + p.beta_c)
    return KernelMatrix(out, f"stress-{field.kind}", field.y, field.x, None)


def fd_system_residual(evaluate: Callable[[np.ndarray], np.ndarray], point, params: MaterialParams,
                       step: float = 1e-3) -> float:
    """
    Relative residual of the metaharmonic system applied by fourth-order finite differences.

    Args:
        evaluate (callable): Maps points (P, 3) to field values (P, 6, C).
        point (array): Evaluation point.
        params (MaterialParams): Medium.
        step (float): Stencil spacing.

    Returns:
        float: max over columns of |M U| divided by the sum of magnitudes of its terms.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    eye = np.eye(3)
    offsets = [np.zeros(3)]
    for i in range(3):
        for a, _ in FIRST_STENCIL:
            offsets.append(a * step * eye[i])
    mixed_pairs = [(i, j) for i in range(3) for j in range(i + 1, 3)]
    for i, j in mixed_pairs:
        for a, _ in FIRST_STENCIL:
            for b, _ in FIRST_STENCIL:
                offsets.append(a * step * eye[i] + b * step * eye[j])
    values = np.asarray(evaluate(point + np.array(offsets)))
    centre = values[0]

    def at(offset):
        index = int(np.argmin(np.linalg.norm(np.array(offsets) - offset, axis=1)))
        return values[index]

    hess = np.zeros((3, 3) + centre.shape)
    grad = np.zeros((3,) + centre.shape)
    for i in range(3):
        grad[i] = sum(c * at(a * step * eye[i]) for a, c in FIRST_STENCIL) / step
        hess[i, i] = sum(c * at(a * step * eye[i]) for a, c in SECOND_STENCIL) / step ** 2
    for i, j in mixed_pairs:
        hess[i, j] = hess[j, i] = sum(
            ca * cb * at(a * step * eye[i] + b * step * eye[j])
            for a, ca in FIRST_STENCIL for b, cb in FIRST_STENCIL
        ) / step ** 2

    p = params
    sigma1_sq = p.inertia_u / p.shear_u
    sigma2_sq = p.inertia_w / p.shear_w

    def block(rows, other, shear, sigma_sq, cross):
        lap = np.einsum("iirc->rc", hess[:, :, rows, :])
        grad_div = np.einsum("kjjc->kc", hess[:, :, rows, :])
        # rot of the other field: (curl v)_k = e_kpj d_p v_j.
        curl = np.einsum("kpj,pjc->kc", LEVI_CIVITA, grad[:, other, :])
        terms = [shear * lap, -shear * sigma_sq * centre[rows, :], cross * grad_div,
                 2.0 * p.alpha_c * curl]
        return sum(terms), sum(np.abs(t) for t in terms)

    res_u, scale_u = block(slice(0, 3), slice(3, 6), p.shear_u, sigma1_sq,
                           p.lambda_c + p.mu_c - p.alpha_c)
    res_w, scale_w = block(slice(3, 6), slice(0, 3), p.shear_w, sigma2_sq,
                           p.epsilon_c + p.nu_c - p.beta_c)
    residual = np.concatenate([res_u, res_w])
    scale = np.concatenate([scale_u, scale_w])
    per_column = np.max(np.abs(residual), axis=0) / np.max(scale, axis=0)
    return float(np.max(per_column))


def boundary_pairing(kernel: np.ndarray, traction: np.ndarray, f: np.ndarray, g: np.ndarray,
                     weights: np.ndarray) -> np.ndarray:
    """
    sum_n w_n [K_n^T g_n - (T K)_n^T f_n] for kernels K of shape (N, 6, 6).

    The nodes are summed in their stored order so repeated runs agree bitwise.
    """
    return np.einsum("n,nrc,nr->c", weights, kernel, g) - np.einsum("n,nrc,nr->c", weights, traction, f)


def representation(x, quad, f: np.ndarray, g: np.ndarray, medium: Medium) -> np.ndarray:
    """
    U(x) from values f and tractions g on a closed surface via the fundamental matrix.

    Args:
        x (array): Interior point.
        quad: Surface quadrature with nodes, weights and outward normals.
        f, g (ndarray): U and T U at the nodes, shape (N, 6).
        medium (Medium): Material.
    """
    field = psi_matrix(quad.nodes, x, medium)
    traction = stress_apply(field, quad.normals, medium.params)
    return boundary_pairing(field.values, traction.values, f, g, quad.weights)


def betti_gap(quad, u: np.ndarray, tu: np.ndarray, v: np.ndarray, tv: np.ndarray) -> float:
    """Relative Betti reciprocity defect of two solutions over a closed surface."""
    left = np.sum(v * tu, axis=1)
    right = np.sum(u * tv, axis=1)
    gap = abs(float(np.dot(quad.weights, left - right)))
    scale = float(np.dot(quad.weights, np.abs(left) + np.abs(right)))
    return gap / scale

"""Matern-5/2 kernel, kernel matrices, and RKHS quantities.

Everything here operates in the reparametrized search box ``[-1, 1]^d``
with Euclidean distances.  The kernel has unit output variance (the
optimizer renormalizes observations every iteration, so an amplitude
hyperparameter would be redundant).  Functions represented as finite
kernel expansions ``h(x) = sum_i a_i k(z_i, x)`` carry their exact RKHS
geometry: norms and inner products reduce to quadratic forms in the
Gram matrix of the centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

SQRT5 = math.sqrt(5.0)

#: Default jitter added to kernel matrices for numerical stability.
DEFAULT_JITTER = 1e-6


class SingularKernelMatrixError(np.linalg.LinAlgError):
    """Kernel matrix could not be factorized (duplicate points at zero jitter?)."""


@dataclass(frozen=True)
class KernelParams:
    """Isotropic Matern-5/2 kernel hyperparameters.

    Parameters
    ----------
    lengthscale : float
        Length scale in search-box units, must be positive.
    variant : str
        Kernel family name; only ``"matern52"`` is supported.
    """

    lengthscale: float
    variant: str = "matern52"

    def __post_init__(self):
        if not (self.lengthscale > 0.0 and math.isfinite(self.lengthscale)):
            raise ValueError(f"lengthscale must be finite and > 0, got {self.lengthscale}")
        if self.variant != "matern52":
            raise ValueError(f"unsupported kernel variant: {self.variant!r}")

    @classmethod
    def for_dim(cls, dim: int) -> "KernelParams":
        """Default parameters for a ``dim``-dimensional box: lengthscale sqrt(dim)."""
        return cls(lengthscale=math.sqrt(dim))

    def with_lengthscale(self, lengthscale: float) -> "KernelParams":
        return KernelParams(lengthscale=lengthscale, variant=self.variant)


def matern52(r, lengthscale: float):
    """Matern-5/2 profile ``(1 + s + s^2/3) exp(-s)`` with ``s = sqrt(5) r / l``."""
    s = (SQRT5 / lengthscale) * np.asarray(r, dtype=float)
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern52_grad_coeff(r, lengthscale: float):
    """Radial gradient coefficient ``c(r)`` with ``grad_x k(z, x) = c(r) (x - z)``.

    The 1/r factor in ``dk/dr * (x - z)/r`` cancels analytically, so the
    coefficient is smooth at ``r = 0``:
    ``c(r) = -(5 / (3 l^2)) (1 + sqrt(5) r / l) exp(-sqrt(5) r / l)``.
    """
    ell = lengthscale
    s = (SQRT5 / ell) * np.asarray(r, dtype=float)
    return -(5.0 / (3.0 * ell * ell)) * (1.0 + s) * np.exp(-s)


def kernel_eval(x, x_prime, params: KernelParams) -> float:
    """Evaluate ``k(x, x')`` for two points.

    Raises
    ------
    ValueError
        If the points have different dimensions.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    r = np.linalg.norm(x - x_prime)
    return float(matern52(r, params.lengthscale))


def cross_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between rows of ``a`` (n,d) and ``b`` (m,d)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def kernel_cross(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel values between rows of ``a`` and rows of ``b``, shape (n, m)."""
    return matern52(cross_distances(a, b), params.lengthscale)


def kernel_matrix(points: np.ndarray, params: KernelParams, jitter: float = 0.0) -> np.ndarray:
    """Gram matrix ``K + jitter * I`` over a point set.

    Parameters
    ----------
    points : ndarray, shape (n, d)
        At least one point.
    jitter : float
        Nonnegative value added to the diagonal (observation noise
        variance / numerical regularizer).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 1:
        raise ValueError("kernel_matrix needs at least one point")
    if jitter < 0.0:
        raise ValueError("jitter must be nonnegative")
    K = kernel_cross(points, points, params)
    # exact symmetry and unit diagonal regardless of float noise in distances
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0 + jitter)
    return K


def cholesky_lower(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a PD matrix, with a helpful singularity error."""
    try:
        return cholesky(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularKernelMatrixError(
            "kernel matrix is not positive definite (duplicate or near-duplicate "
            "points?); add jitter to regularize"
        ) from exc


def rkhs_norm_estimate(K: np.ndarray, y: np.ndarray) -> float:
    """Quadratic form ``y^T K^{-1} y``: squared RKHS norm of the minimum-norm
    interpolant of values ``y`` observed at the points underlying ``K``.

    ``K`` must be positive definite and ``y`` of matching length.  The result
    is nonnegative and zero exactly when ``y`` is zero.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if K.shape[0] != K.shape[1] or K.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: K {K.shape}, y {y.shape}")
    L = cholesky_lower(K)
    v = solve_triangular(L, y, lower=True)
    return float(max(v @ v, 0.0))


@dataclass(frozen=True)
class KernelExpansion:
    """Function in the RKHS given as a finite expansion ``sum_i a_i k(z_i, .)``.

    The exact squared RKHS norm is ``a^T K_z a`` with ``(K_z)_{ij} = k(z_i, z_j)``,
    and inner products between expansions are bilinear in the coefficients.
    """

    centers: np.ndarray  # (m, d)
    coeffs: np.ndarray  # (m,)
    params: KernelParams

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if centers.shape[0] != coeffs.shape[0]:
            raise ValueError("centers and coeffs must have the same length")
        if centers.shape[0] < 1:
            raise ValueError("an expansion needs at least one center")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def value(self, x) -> float:
        return float(self.value_batch(np.asarray(x, dtype=float)[None, :])[0])

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        """Values at the rows of ``X``, shape (n,)."""
        return kernel_cross(X, self.centers, self.params) @ self.coeffs

    def grad(self, x) -> np.ndarray:
        return self.grad_batch(np.asarray(x, dtype=float)[None, :])[0]

    def grad_batch(self, X: np.ndarray) -> np.ndarray:
        """Gradients at the rows of ``X``, shape (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.centers[None, :, :]  # (n, m, d)
        r = np.sqrt(np.maximum(np.sum(diff * diff, axis=2), 0.0))
        c = matern52_grad_coeff(r, self.params.lengthscale) * self.coeffs[None, :]
        return np.einsum("nm,nmd->nd", c, diff)

    def norm_sq(self) -> float:
        return expansion_inner_product(self, self)

    def scaled(self, factor: float) -> "KernelExpansion":
        return KernelExpansion(self.centers, factor * self.coeffs, self.params)


def expansion_inner_product(h1: KernelExpansion, h2: KernelExpansion) -> float:
    """Exact RKHS inner product ``<h1, h2>_k = a1^T K(z1, z2) a2``.

    Both expansions must use identical kernel parameters.
    """
    if h1.params != h2.params:
        raise ValueError(f"kernel params differ: {h1.params} vs {h2.params}")
    return float(h1.coeffs @ kernel_cross(h1.centers, h2.centers, h1.params) @ h2.coeffs)


def combine_expansions(terms: list[tuple[float, KernelExpansion]]) -> KernelExpansion:
    """Linear combination ``sum_j w_j h_j`` as a single expansion.

    Centers are concatenated; coefficients are scaled by the weights.
    """
    if not terms:
        raise ValueError("need at least one term")
    params = terms[0][1].params
    for _, h in terms:
        if h.params != params:
            raise ValueError("all terms must share kernel params")
    centers = np.vstack([h.centers for _, h in terms])
    coeffs = np.concatenate([w * h.coeffs for w, h in terms])
    return KernelExpansion(centers, coeffs, params)


def solve_psd(K: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``K x = b`` for PD ``K`` via Cholesky."""
    L = cholesky_lower(np.asarray(K, dtype=float))
    return cho_solve((L, True), np.asarray(b, dtype=float))

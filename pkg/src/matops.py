"""
Dense linear-algebra kernels: matrix exponential, PSD square root,
controllability Gramian and numerical rank.
"""

import logging
from typing import Any, Optional

import numpy as np
import scipy.linalg

from .errors import MatrixError, MatrixOverflowError, NotPsdError, QuadratureError
from .models import PsdMatrix

EPS = np.finfo(float).eps

# exp(709) is the largest finite double; leave room for the squaring phase.
OVERFLOW_NORM = 700.0


def as_square_matrix(values: Any, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite real n x n array."""
    try:
        matrix = np.array(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise MatrixError(f"{name} is not a real matrix: {e}")
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise MatrixError(f"{name} must be square with n >= 1, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise MatrixError(f"{name} has non-finite entries")
    return matrix


def mat_exp(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """
    Compute exp(tA) by scaling and squaring with a degree-13 Pade approximant.

    Args:
        A: Square matrix.
        t: Time factor, negative values allowed.

    Returns:
        The matrix exponential.
    """
    A = as_square_matrix(A, "A")
    if not np.isfinite(t):
        raise MatrixError(f"Time factor must be finite, got {t}")
    scaled = t * A
    norm = np.linalg.norm(scaled, 1)
    if norm > OVERFLOW_NORM:
        raise MatrixOverflowError(
            f"||tA||_1 = {norm:.3e} exceeds {OVERFLOW_NORM}; exp(tA) would overflow"
        )
    result = scipy.linalg.expm(scaled)
    if not np.all(np.isfinite(result)):
        raise MatrixOverflowError(f"exp(tA) overflowed for ||tA||_1 = {norm:.3e}")
    return result


def psd_sqrt(Q: np.ndarray, sym_rtol: float = 1e-12) -> PsdMatrix:
    """Symmetric square root of a PSD matrix with eigenvalue clamping."""
    Q = as_square_matrix(Q, "Q")
    n = Q.shape[0]
    scale = max(np.linalg.norm(Q, 2), np.finfo(float).tiny)
    asymmetry = np.linalg.norm(Q - Q.T, 2)
    if asymmetry > sym_rtol * scale:
        raise MatrixError(f"Q is not symmetric: ||Q - Q^T|| = {asymmetry:.3e}")

    base = 0.5 * (Q + Q.T)
    eigenvalues, vectors = scipy.linalg.eigh(base)
    lam_max = max(float(np.max(eigenvalues)), 0.0)
    eig_tol = n * EPS * lam_max
    if np.min(eigenvalues) < -eig_tol:
        raise NotPsdError(
            f"Q has eigenvalue {np.min(eigenvalues):.3e} below -{eig_tol:.3e}"
        )
    clamped = np.where(eigenvalues < eig_tol, 0.0, eigenvalues)
    root = (vectors * np.sqrt(clamped)) @ vectors.T
    root = 0.5 * (root + root.T)
    return PsdMatrix(base=base, sqrt=root, eig_tol=eig_tol, eigenvalues=clamped)


def gramian(
    B: np.ndarray,
    Q: PsdMatrix,
    t: float,
    nodes: int = 32,
    rtol: float = 1e-10,
    max_doublings: int = 4,
) -> PsdMatrix:
    """
    Controllability Gramian Q_t = int_0^t e^{-sB} Q e^{-sB^T} ds.

    Gauss-Legendre with node doubling until successive values agree to
    `rtol` in Frobenius norm.
    """
    B = as_square_matrix(B, "B")
    if not t > 0:
        raise MatrixError(f"Gramian horizon must be positive, got {t}")

    def integrate(count: int) -> np.ndarray:
        x, w = np.polynomial.legendre.leggauss(count)
        taus = 0.5 * t * (x + 1.0)
        total = np.zeros_like(B)
        for tau, weight in zip(taus, w):
            E = mat_exp(B, -tau)
            total += weight * (E @ Q.base @ E.T)
        return 0.5 * t * total

    previous = integrate(nodes)
    count = nodes
    for _ in range(max_doublings):
        count *= 2
        current = integrate(count)
        gap = np.linalg.norm(current - previous)
        if gap <= rtol * max(np.linalg.norm(current), np.finfo(float).tiny):
            return psd_sqrt(0.5 * (current + current.T))
        logging.debug(f"Gramian refinement to {count} nodes, gap {gap:.3e}")
        previous = current
    raise QuadratureError(
        f"Gramian quadrature did not converge on [0, {t}] after {max_doublings} doublings "
        f"(last gap {gap:.3e}, {count} nodes)"
    )


def singular_values(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return np.zeros(0)
    return scipy.linalg.svd(M, compute_uv=False)


def numerical_rank(M: np.ndarray, tol: float) -> int:
    return int(np.count_nonzero(singular_values(M) > tol))


def range_basis(M: np.ndarray, tol: float, rank: Optional[int] = None) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical range of M."""
    U, sv, _ = scipy.linalg.svd(M, full_matrices=False)
    if rank is None:
        rank = int(np.count_nonzero(sv > tol))
    return U[:, :rank]


def kernel_basis(M: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of M."""
    _, sv, Vh = scipy.linalg.svd(M, full_matrices=True)
    rank = int(np.count_nonzero(sv > tol))
    return Vh[rank:].conj().T

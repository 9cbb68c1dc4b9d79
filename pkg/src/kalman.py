"""
Kalman rank structure: verdict, smallest index r, the nested flag
V_0 < V_1 < ... < V_r and its orthogonal projections.
"""

import logging
from typing import Optional

import numpy as np

from .errors import KalmanConditionError, KalmanConsistencyError, ParameterError
from .matops import EPS, as_square_matrix, kernel_basis, numerical_rank, range_basis, singular_values
from .models import ExponentRow, ExponentTable, KalmanStructure, PsdMatrix

PROJECTION_TOL = 1e-12


def kalman_blocks(B: np.ndarray, Q: PsdMatrix, count: int) -> list[np.ndarray]:
    """[Q^{1/2}, B Q^{1/2}, ..., B^{count-1} Q^{1/2}]."""
    blocks = [Q.sqrt]
    for _ in range(1, count):
        blocks.append(B @ blocks[-1])
    return blocks


def analyze_structure(
    B: np.ndarray,
    Q: PsdMatrix,
    rank_tol: Optional[float] = None,
) -> KalmanStructure:
    """
    Analyze the Kalman flag of the pair (B, Q^{1/2}).

    Args:
        B: Drift matrix.
        Q: Diffusion matrix with its square root.
        rank_tol: Singular-value threshold; defaults to n * eps * sigma_max
            of the full Kalman block matrix.

    Returns:
        KalmanStructure; a failing rank condition is reported, not raised.
    """
    B = as_square_matrix(B, "B")
    n = B.shape[0]
    if Q.n != n:
        raise ParameterError(f"B is {n}x{n} but Q is {Q.n}x{Q.n}")

    blocks = kalman_blocks(B, Q, n)
    full = np.hstack(blocks)
    sigma = singular_values(full)
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    if rank_tol is None:
        rank_tol = n * EPS * sigma_max
    elif not rank_tol > 0:
        raise ParameterError(f"rank_tol must be positive, got {rank_tol}")

    ranks = [numerical_rank(np.hstack(blocks[:k + 1]), rank_tol) for k in range(n)]
    holds = ranks[-1] == n
    r = ranks.index(n) if holds else None
    depth = r if holds else n - 1

    bases, proj, incr = [], [], []
    U = np.zeros((n, 0))
    for k in range(depth + 1):
        M_k = np.hstack(blocks[:k + 1])
        fresh = ranks[k] - U.shape[1]
        if fresh > 0:
            residual = M_k - U @ (U.T @ M_k)
            W = range_basis(residual, rank_tol, rank=fresh)
            U = np.hstack([U, W])
            incr.append(W @ W.T)
        else:
            incr.append(np.zeros((n, n)))
        bases.append(U.copy())
        proj.append(U @ U.T)

    _check_kernel_form(blocks, proj, ranks, rank_tol, sigma_max)
    structure = KalmanStructure(
        n=n, holds=holds, r=r, bases=tuple(bases), proj=tuple(proj),
        incr=tuple(incr), rank_tol=float(rank_tol), ranks=tuple(ranks[:depth + 1]),
    )
    check_invariants(structure)
    logging.debug(f"Kalman structure: holds={holds}, r={r}, ranks={ranks}")
    return structure


def _check_kernel_form(
    blocks: list[np.ndarray],
    proj: list[np.ndarray],
    ranks: list[int],
    rank_tol: float,
    sigma_max: float,
) -> None:
    """Compare V_k^perp with the kernel intersection of Q^{1/2}(B^T)^j, j <= k."""
    n = proj[0].shape[0]
    slack = rank_tol + 8 * n * EPS * max(sigma_max, 1.0)
    for k, P in enumerate(proj):
        stacked = np.vstack([b.T for b in blocks[:k + 1]])
        K = kernel_basis(stacked, rank_tol)
        if K.shape[1] != n - ranks[k]:
            raise KalmanConsistencyError(
                f"k={k}: kernel dimension {K.shape[1]} but range dimension {ranks[k]}"
            )
        complement = np.eye(n) - P
        annihilated = np.linalg.norm(stacked @ complement, 2) if stacked.size else 0.0
        if annihilated > slack:
            raise KalmanConsistencyError(
                f"k={k}: complement of V_k is not annihilated ({annihilated:.3e} > {slack:.3e})"
            )
        if K.size and np.linalg.norm(P @ K, 2) > np.sqrt(slack) + PROJECTION_TOL:
            raise KalmanConsistencyError(f"k={k}: kernel form is not orthogonal to V_k")


def check_invariants(ks: KalmanStructure, tol: float = PROJECTION_TOL) -> None:
    """Assert projection algebra of the flag."""
    identity = np.eye(ks.n)
    for k, P in enumerate(ks.proj):
        if np.linalg.norm(P - P.T, 2) > tol:
            raise KalmanConsistencyError(f"P_{k} is not symmetric")
        if np.linalg.norm(P @ P - P, 2) > tol:
            raise KalmanConsistencyError(f"P_{k} is not idempotent")
        if k + 1 < len(ks.proj) and np.linalg.norm(P @ ks.proj[k + 1] - P, 2) > tol:
            raise KalmanConsistencyError(f"P_{k} is not nested in P_{k + 1}")
    for j, Pi_j in enumerate(ks.incr):
        for k in range(j + 1, len(ks.incr)):
            if np.linalg.norm(Pi_j @ ks.incr[k], 2) > tol:
                raise KalmanConsistencyError(f"Pi_{j} and Pi_{k} are not orthogonal")
    if np.linalg.norm(sum(ks.incr) - ks.proj[-1], 2) > tol:
        raise KalmanConsistencyError("Increments do not sum to the last projection")
    if ks.holds and np.linalg.norm(ks.proj[-1] - identity, 2) > tol:
        raise KalmanConsistencyError(f"P_{ks.r} is not the identity")


def require_kalman(ks: KalmanStructure, purpose: str) -> int:
    """Return r, or raise when the rank condition fails."""
    if not ks.holds:
        raise KalmanConditionError(
            f"{purpose} needs the Kalman rank condition; ranks {list(ks.ranks)} "
            f"stop short of n={ks.n}"
        )
    return int(ks.r)


def characteristic_exponents(ks: KalmanStructure, s: float) -> ExponentTable:
    """Exponents of the smoothing, subelliptic, dissipation and cost estimates."""
    if not s > 0:
        raise ParameterError(f"s must be positive, got {s}")
    r = require_kalman(ks, "Characteristic exponents")
    rows = tuple(
        ExponentRow(
            k=k,
            smoothing_exponent=1.0 / (2 * s) + k,
            subelliptic_order=2 * s / (1 + 2 * k * s),
        )
        for k in range(r + 1)
    )
    gamma = 1.0 / (2 * s) + r
    m = 2 * s * gamma
    cost = m / (2 * s - 1) if s > 0.5 else None
    return ExponentTable(
        s=s,
        r=r,
        rows=rows,
        gamma=gamma,
        dissipation_exponent=m,
        observability_exponent=cost,
        subelliptic_loss=2 * r * s / (1 + 2 * r * s),
    )


def weight_matrix(ks: KalmanStructure, B: np.ndarray, Q: PsdMatrix, k: int, matrix_form: bool) -> np.ndarray:
    """Matrix W with the anisotropic weight <W xi>: P_k, or Q^{1/2}(B^T)^k."""
    if k < 0 or k > ks.depth:
        raise ParameterError(f"Index k={k} outside 0..{ks.depth}")
    if matrix_form:
        return Q.sqrt @ np.linalg.matrix_power(B.T, k)
    return ks.proj[k]

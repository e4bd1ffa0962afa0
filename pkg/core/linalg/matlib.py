"""
Dense real linear algebra for the certificate and composition checks.

Matrices are plain 2-D ``float64`` numpy arrays. Symmetric inputs that are
asymmetric within tolerance are symmetrized silently; beyond tolerance they
are rejected.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as scalg

from core.exceptions import (
    AsymmetryExceedsTol,
    DimensionMismatch,
    NonSquare,
    RankDeficientWarning,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
JACOBI_RTOL = 1e-12
EIG_METHODS = ('lapack', 'jacobi')


@dataclass(frozen=True)
class EigBounds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if self.lambda_min > self.lambda_max:
            raise ValueError(
                f"lambda_min {self.lambda_min} exceeds lambda_max {self.lambda_max}"
            )


@dataclass(frozen=True)
class LeastSquaresResult:
    X: np.ndarray
    residual: float
    rank: int
    rank_deficient: bool


def as_matrix(values, name: str = 'matrix') -> np.ndarray:
    """
    Coerce nested sequences or arrays to a finite 2-D float array.

    Scalars become 1x1, 1-D input becomes a column.
    """
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def max_abs(S: np.ndarray) -> float:
    """Entry-wise max norm; 0 for empty matrices."""
    return float(np.max(np.abs(S))) if S.size else 0.0


def equality_residual(lhs: np.ndarray, rhs: np.ndarray, tol: float = DEFAULT_TOL):
    """
    Residual and threshold of an entry-wise matrix equality.

    Returns:
        (residual, threshold) with residual = max|lhs - rhs| and
        threshold = tol * max(1, max|lhs|, max|rhs|)
    """
    if lhs.shape != rhs.shape:
        raise DimensionMismatch(f"Cannot compare {lhs.shape} with {rhs.shape}")
    residual = max_abs(lhs - rhs)
    threshold = tol * max(1.0, max_abs(lhs), max_abs(rhs))
    return residual, threshold


def symmetrize(S: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Return (S + S^T)/2 after checking S is square and symmetric within tol.

    Raises:
        NonSquare: S is not square
        AsymmetryExceedsTol: max|S - S^T| > tol * max(1, max|S|)
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NonSquare(f"Expected a square matrix, got shape {S.shape}")
    asym = max_abs(S - S.T)
    if asym > tol * max(1.0, max_abs(S)):
        raise AsymmetryExceedsTol(
            f"Matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}"
        )
    return 0.5 * (S + S.T)


def jacobi_eigenvalues(S: np.ndarray, rtol: float = JACOBI_RTOL, max_sweeps: int = 100) -> np.ndarray:
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius mass drops below
    ``rtol * ||S||_F``. Returns eigenvalues in ascending order.
    """
    a = np.array(S, dtype=float)
    n = a.shape[0]
    frob = np.linalg.norm(a)
    if n <= 1 or frob == 0.0:
        return np.sort(np.diag(a).copy())

    for sweep in range(max_sweeps):
        off = np.sqrt(max(frob ** 2 - np.sum(np.diag(a) ** 2), 0.0))
        if off < rtol * frob:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    else:
        logger.warning("Jacobi iteration stopped after %d sweeps without converging", max_sweeps)

    return np.sort(np.diag(a).copy())


def sym_eigvals(S: np.ndarray, tol: float = DEFAULT_TOL, method: str = 'lapack') -> np.ndarray:
    """Ascending eigenvalues of the symmetrized S."""
    sym = symmetrize(S, tol)
    if method == 'jacobi':
        return jacobi_eigenvalues(sym)
    if method != 'lapack':
        raise ValueError(f"Unknown eigenvalue method '{method}', expected one of {EIG_METHODS}")
    if sym.shape[0] == 0:
        return np.zeros(0)
    return scalg.eigvalsh(sym)


def sym_eig_bounds(S: np.ndarray, tol: float = DEFAULT_TOL, method: str = 'lapack') -> EigBounds:
    """
    Smallest and largest eigenvalue of (S + S^T)/2.

    Args:
        S: square matrix, symmetric within tol
        tol: symmetry tolerance
        method: 'lapack' or 'jacobi'

    Returns:
        EigBounds

    Raises:
        NonSquare, AsymmetryExceedsTol
    """
    eigs = sym_eigvals(S, tol, method)
    if eigs.size == 0:
        return EigBounds(0.0, 0.0)
    return EigBounds(float(eigs[0]), float(eigs[-1]))


def is_nsd(S: np.ndarray, tol: float = DEFAULT_TOL, method: str = 'lapack') -> bool:
    """True iff lambda_max((S + S^T)/2) <= tol."""
    return sym_eig_bounds(S, tol, method).lambda_max <= tol


def is_psd(S: np.ndarray, tol: float = DEFAULT_TOL, method: str = 'lapack') -> bool:
    """True iff lambda_min((S + S^T)/2) >= -tol."""
    return sym_eig_bounds(S, tol, method).lambda_min >= -tol


def weighted_gram_norm_sq(N: np.ndarray, W: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """||sqrt(W) N||_2^2 computed as lambda_max(N^T W N), no matrix square root."""
    if N.size == 0:
        return 0.0
    return max(sym_eig_bounds(N.T @ W @ N, tol).lambda_max, 0.0)


def least_squares(A: np.ndarray, B: np.ndarray) -> LeastSquaresResult:
    """
    Minimum Frobenius-norm residual solution of A X = B.

    Uses an orthogonal factorization (LAPACK gelsd). A rank-deficient A
    raises ``RankDeficientWarning`` and still returns the minimum-norm X.

    Raises:
        DimensionMismatch: A and B row counts differ
    """
    A = as_matrix(A, 'A')
    B = as_matrix(B, 'B')
    if A.shape[0] != B.shape[0]:
        raise DimensionMismatch(
            f"least_squares needs equal row counts, got {A.shape[0]} and {B.shape[0]}"
        )
    X, _, rank, _ = scalg.lstsq(A, B)
    residual = float(np.linalg.norm(A @ X - B))
    deficient = int(rank) < A.shape[1]
    if deficient:
        warnings.warn(
            f"Least squares matrix has rank {rank} < {A.shape[1]} columns",
            RankDeficientWarning,
            stacklevel=2,
        )
    return LeastSquaresResult(X=X, residual=residual, rank=int(rank), rank_deficient=deficient)


def block_diag(*blocks) -> np.ndarray:
    """Block-diagonal assembly of 2-D blocks."""
    return scalg.block_diag(*[as_matrix(b) for b in blocks])

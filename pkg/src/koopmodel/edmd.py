"""Least-squares fit of the finite-section operator matrix.

The fitted matrix is the minimal-Frobenius-norm minimizer of
``||shifted - B @ current||``, obtained through an SVD-based Moore-Penrose
pseudoinverse with a relative singular-value cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import LiftedPair
from .errors import ShapeMismatchError

DEFAULT_SVD_TOL = 1e-10


@dataclass(frozen=True)
class KoopmanMatrix:
    """Fitted operator matrix with fit diagnostics."""

    matrix: np.ndarray
    fit_residual: float
    rank_used: int
    svd_tolerance: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _svd_pseudoinverse(matrix: np.ndarray, tol: float):
    """Pseudoinverse plus the retained rank and condition number."""
    matrix = np.asarray(matrix)
    if not np.iscomplexobj(matrix):
        matrix = matrix.astype(float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ShapeMismatchError("pseudoinverse needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(matrix)):
        raise ShapeMismatchError("pseudoinverse input must be finite")
    if tol < 0:
        raise ShapeMismatchError("singular-value cutoff must be >= 0")
    u, sigma, vt = np.linalg.svd(matrix, full_matrices=False)
    if sigma[0] == 0.0:
        return np.zeros((matrix.shape[1], matrix.shape[0]), dtype=matrix.dtype), 0, 0.0
    keep = sigma > tol * sigma[0]
    rank = int(np.count_nonzero(keep))
    inv_sigma = np.zeros_like(sigma)
    inv_sigma[keep] = 1.0 / sigma[keep]
    pinv = (vt.conj().T * inv_sigma) @ u.conj().T
    cond = sigma[0] / sigma[keep][-1] if rank else 0.0
    return pinv, rank, float(cond)


def pseudoinverse(matrix: np.ndarray, tol: float = DEFAULT_SVD_TOL) -> np.ndarray:
    """Moore-Penrose inverse with singular values below ``tol * sigma_max``
    treated as zero."""
    pinv, _, _ = _svd_pseudoinverse(matrix, tol)
    return pinv


def fit_koopman_matrix(lifted: LiftedPair,
                       tol: float = DEFAULT_SVD_TOL) -> KoopmanMatrix:
    """Fit ``matrix = shifted @ pinv(current)`` and report the residual."""
    pinv, rank, _ = _svd_pseudoinverse(lifted.current, tol)
    matrix = lifted.shifted @ pinv
    residual = float(np.linalg.norm(lifted.shifted - matrix @ lifted.current))
    return KoopmanMatrix(
        matrix=matrix,
        fit_residual=residual,
        rank_used=rank,
        svd_tolerance=float(tol),
    )


def condition_number(lifted: LiftedPair, tol: float = DEFAULT_SVD_TOL) -> float:
    """Ratio of largest to smallest retained singular value of ``current``."""
    _, _, cond = _svd_pseudoinverse(lifted.current, tol)
    return cond


def residual_report(lifted: LiftedPair, fitted: KoopmanMatrix) -> np.ndarray:
    """Per-row relative misfit ``||shifted_row - (A @ current)_row|| /
    max(1, ||shifted_row||)``.

    Rows with an exact linear closure report ~0; rows whose one-step
    evolution leaves the dictionary's linear span report strictly positive
    values.
    """
    if fitted.matrix.shape != (lifted.n_observables, lifted.n_observables):
        raise ShapeMismatchError(
            f"matrix shape {fitted.matrix.shape} does not match "
            f"{lifted.n_observables} observables"
        )
    misfit = lifted.shifted - fitted.matrix @ lifted.current
    row_norms = np.linalg.norm(misfit, axis=1)
    scale = np.maximum(1.0, np.linalg.norm(lifted.shifted, axis=1))
    return row_norms / scale

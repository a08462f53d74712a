"""Randomized SVD: sketch, range finder, and SVD of the reduced matrix."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DomainError, RankDeficiencyWarning
from .sketch import SketchOperator, apply_sketch_right

__all__ = [
    "RsvdResult",
    "range_finder",
    "rsvd",
    "reduced_singular_values",
    "full_svd_reference",
]

_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RsvdResult:
    """Approximate partial SVD ``U_hat diag(sing_vals) V_hat^T``."""

    u_hat: np.ndarray
    sing_vals: np.ndarray
    v_hat: np.ndarray
    q_used: int = 0

    @property
    def rank(self) -> int:
        return int(self.sing_vals.size)

    def reconstruct(self) -> np.ndarray:
        return (self.u_hat * self.sing_vals) @ self.v_hat.T


def _orthonormalize(a: np.ndarray, warn: bool = True) -> np.ndarray:
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if warn and diag.size and diag.min() <= _RANK_TOL * max(diag.max(), np.finfo(float).tiny):
        warnings.warn(
            f"sketched matrix is numerically rank deficient "
            f"({int(np.sum(diag > _RANK_TOL * diag.max()))} of {diag.size} columns)",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    return q


def range_finder(y: np.ndarray, op: SketchOperator, q: int = 0) -> np.ndarray:
    """Orthonormal basis ``Q`` for the range of ``(Y Y^T)^q Y Omega^T``.

    Each multiplication by ``Y`` or ``Y^T`` during power iterations is
    followed by re-orthogonalization.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise DomainError("Y must be a 2-d array")
    if q < 0:
        raise DomainError(f"number of power iterations must be >= 0, got {q}")
    qmat = _orthonormalize(apply_sketch_right(op, y))
    for _ in range(q):
        z = _orthonormalize(y.T @ qmat, warn=False)
        qmat = _orthonormalize(y @ z)
    return qmat


def rsvd(y: np.ndarray, op: SketchOperator, q: int = 0, k: Optional[int] = None) -> RsvdResult:
    """Randomized SVD of ``Y`` with sketch ``op`` and ``q`` power iterations.

    Only the small matrix ``B = Q^T Y`` is decomposed. With ``k`` given, just
    the leading ``k`` triplets are computed, from the eigendecomposition of
    ``B B^T``; this is much cheaper when ``k`` is small.
    """
    y = np.asarray(y, dtype=float)
    qmat = range_finder(y, op, q)
    b = qmat.T @ y
    if k is None:
        ut, s, vt = np.linalg.svd(b, full_matrices=False)
        return RsvdResult(qmat @ ut, s, vt.T, q)
    dd = b.shape[0]
    if not 1 <= k <= dd:
        raise DomainError(f"k must lie in [1, {dd}], got {k}")
    w, ut = linalg.eigh(b @ b.T, subset_by_index=[dd - k, dd - 1])
    w, ut = w[::-1], ut[:, ::-1]
    s = np.sqrt(np.clip(w, 0.0, None))
    if s[-1] <= 1e-8 * max(s[0], np.finfo(float).tiny):
        # near-null directions: right vectors are ill-defined through B^T u / s
        ut, s, vt = np.linalg.svd(b, full_matrices=False)
        return RsvdResult(qmat @ ut[:, :k], s[:k], vt[:k].T, q)
    v = (b.T @ ut) / s
    # one Gram-Schmidt pass to clean rounding in v
    v, r = np.linalg.qr(v)
    v *= np.sign(np.diag(r))
    return RsvdResult(qmat @ ut, s, v, q)


def reduced_singular_values(y: np.ndarray, op: SketchOperator, q: int = 0) -> np.ndarray:
    """All ``d`` singular values of the R-SVD output, without vectors."""
    qmat = range_finder(np.asarray(y, dtype=float), op, q)
    return np.linalg.svd(qmat.T @ y, compute_uv=False)


def full_svd_reference(y: np.ndarray, k: int) -> RsvdResult:
    """Exact rank-``k`` truncated SVD, the no-reduction baseline."""
    y = np.asarray(y, dtype=float)
    n, m = y.shape
    if not 0 <= k <= min(n, m):
        raise DomainError(f"k must lie in [0, {min(n, m)}], got {k}")
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    return RsvdResult(u[:, :k], s[:k], vt[:k].T, 0)

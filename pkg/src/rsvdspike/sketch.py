"""Random sketching operators ``Omega`` of shape ``d x m``.

Four families are available, named by the short CLI vocabulary:

``gaussian``  i.i.d. standard normal entries (unnormalized; only the row
              space matters to the randomized SVD)
``haar``      orthonormal rows spanning a uniformly random subspace
``srht``      rows of ``H D / sqrt(m)`` sampled without replacement, where
              ``H`` is the Sylvester-Hadamard matrix and ``D`` random signs
``coord``     ``d`` distinct standard basis vectors

Operators are built from a 64-bit seed through ``numpy.random.Philox``;
the same ``(kind, d, m, seed)`` always yields a bit-identical operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "SKETCH_KINDS",
    "SketchOperator",
    "make_sketch",
    "apply_sketch_right",
    "apply_sketch_left",
    "fwht",
    "incoherence_stat",
    "rng_from_seed",
]

SKETCH_KINDS = ("gaussian", "haar", "srht", "coord")

_ALIASES = {
    "gaussian_iid": "gaussian",
    "haar_projection": "haar",
    "coordinate_subsample": "coord",
    "coordinate": "coord",
}


def rng_from_seed(seed) -> np.random.Generator:
    """Counter-based generator for an integer seed or a ``SeedSequence``."""
    return np.random.Generator(np.random.Philox(seed))


def _canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind, kind)
    if k not in SKETCH_KINDS:
        raise DomainError(f"unknown sketch kind {kind!r}; expected one of {SKETCH_KINDS}")
    return k


@dataclass(frozen=True, eq=False)
class SketchOperator:
    """A ``d x m`` sketching matrix, stored in the cheapest exact form.

    ``dense`` holds the matrix for gaussian/haar; ``rows`` holds sampled row
    (or coordinate) indices for srht/coord and ``signs`` the srht diagonal.
    """

    kind: str
    d: int
    m: int
    seed: int
    dense: Optional[np.ndarray] = field(default=None, repr=False)
    rows: Optional[np.ndarray] = field(default=None, repr=False)
    signs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.d, self.m

    def matrix(self) -> np.ndarray:
        """Materialize ``Omega`` as a dense ``d x m`` array."""
        if self.dense is not None:
            return self.dense.copy()
        if self.kind == "coord":
            out = np.zeros((self.d, self.m))
            out[np.arange(self.d), self.rows] = 1.0
            return out
        # srht: row i of H D / sqrt(m) is H[rows[i]] * signs / sqrt(m)
        h = fwht(np.eye(self.m)[self.rows])
        return h * self.signs / np.sqrt(self.m)


def make_sketch(kind: str, d: int, m: int, seed: int) -> SketchOperator:
    """Draw a sketching operator of the given family."""
    kind = _canonical_kind(kind)
    d, m = int(d), int(m)
    if not 1 <= d < m:
        raise DomainError(f"sketch dimensions must satisfy 1 <= d < m, got d={d}, m={m}")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise DomainError("seed must be a 64-bit unsigned integer")
    rng = rng_from_seed(seed)
    if kind == "gaussian":
        return SketchOperator(kind, d, m, seed, dense=rng.standard_normal((d, m)))
    if kind == "haar":
        g = rng.standard_normal((m, d))
        q, r = np.linalg.qr(g)
        # sign-fixing makes the row space Haar distributed
        q *= np.where(np.diag(r) < 0.0, -1.0, 1.0)
        return SketchOperator(kind, d, m, seed, dense=np.ascontiguousarray(q.T))
    if kind == "srht":
        if m & (m - 1):
            raise DomainError(f"srht requires m to be a power of two, got m={m}")
        signs = rng.choice(np.array([-1.0, 1.0]), size=m)
        rows = np.sort(rng.choice(m, size=d, replace=False))
        return SketchOperator(kind, d, m, seed, rows=rows, signs=signs)
    rows = np.sort(rng.choice(m, size=d, replace=False))
    return SketchOperator(kind, d, m, seed, rows=rows)


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis (Sylvester order)."""
    x = np.array(x, dtype=float, copy=True)
    lead = x.shape[:-1]
    m = x.shape[-1]
    if m & (m - 1):
        raise DomainError(f"transform length must be a power of two, got {m}")
    a = x.reshape(-1, m)
    h = 1
    while h < m:
        a = a.reshape(a.shape[0], m // (2 * h), 2, h)
        top, bot = a[:, :, 0, :], a[:, :, 1, :]
        a = np.stack((top + bot, top - bot), axis=2)
        h *= 2
    return a.reshape(*lead, m)


def apply_sketch_right(op: SketchOperator, y: np.ndarray) -> np.ndarray:
    """Return ``Y Omega^T`` (shape ``n x d``) for ``Y`` with ``m`` columns."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != op.m:
        raise DomainError(f"matrix with {op.m} columns expected, got shape {y.shape}")
    if op.dense is not None:
        return y @ op.dense.T
    if op.kind == "coord":
        return y[:, op.rows]
    # H is symmetric, so Y (H D)^T = (Y D) H
    return fwht(y * op.signs)[:, op.rows] / np.sqrt(op.m)


def apply_sketch_left(op: SketchOperator, y: np.ndarray) -> np.ndarray:
    """Return ``Omega Y`` (shape ``d x k``) for ``Y`` with ``m`` rows."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != op.m:
        raise DomainError(f"matrix with {op.m} rows expected, got shape {y.shape}")
    return apply_sketch_right(op, y.T).T


def incoherence_stat(op: SketchOperator, v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Gram matrix ``(P v_i . P v_j)`` where ``P`` projects onto the row space of ``Omega``.

    For a sketch that interacts with ``v`` like a uniformly random
    projection this is close to ``(d/m) I``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != op.m:
        raise DomainError(f"V must have {op.m} rows, got shape {v.shape}")
    r = v.shape[1]
    if np.max(np.abs(v.T @ v - np.eye(r))) > tol:
        raise DomainError("V must have orthonormal columns")
    if op.kind == "gaussian":
        basis, _ = np.linalg.qr(op.dense.T)
        w = basis.T @ v
    else:
        # rows are orthonormal already
        w = apply_sketch_left(op, v)
    return w.T @ w

"""Finite-dimensional spiked matrices ``Y = U diag(spikes) V^T + Z``.

Noise entries are i.i.d. with mean zero and variance ``1/sqrt(n m)``, so
that the bulk of singular values stays of order one as dimensions grow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .rsvd import RsvdResult
from .sketch import rng_from_seed

__all__ = [
    "NOISE_KINDS",
    "SpikedInstance",
    "haar_frame",
    "sample_noise",
    "sample_spiked",
    "dims_from_ratios",
    "measure_overlaps",
]

NOISE_KINDS = ("gaussian", "rademacher", "student5")

_ALIASES = {"student_t5": "student5", "t5": "student5"}


@dataclass(frozen=True, eq=False)
class SpikedInstance:
    n: int
    m: int
    spikes: np.ndarray
    u_factors: np.ndarray
    v_factors: np.ndarray
    Y: np.ndarray
    noise_kind: str
    seed: Optional[int] = None

    @property
    def rank(self) -> int:
        return int(self.spikes.size)

    @property
    def gamma(self) -> float:
        return self.m / self.n

    def signal(self) -> np.ndarray:
        """The noiseless matrix ``X``."""
        return (self.u_factors * self.spikes) @ self.v_factors.T

    def signal_norm_sq(self) -> float:
        return float(np.sum(self.spikes ** 2))


def haar_frame(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    """Uniformly random ``n x r`` orthonormal frame."""
    q, rr = np.linalg.qr(rng.standard_normal((n, r)))
    return q * np.where(np.diag(rr) < 0.0, -1.0, 1.0)


def sample_noise(rng: np.random.Generator, n: int, m: int, kind: str) -> np.ndarray:
    """``n x m`` noise with entry variance ``1/sqrt(n m)``."""
    kind = _ALIASES.get(kind, kind)
    scale = (n * m) ** -0.25
    if kind == "gaussian":
        z = rng.standard_normal((n, m))
    elif kind == "rademacher":
        z = rng.integers(0, 2, size=(n, m)).astype(float)
        z *= 2.0
        z -= 1.0
    elif kind == "student5":
        # t(5) has variance 5/3
        z = rng.standard_t(5, size=(n, m))
        z *= math.sqrt(3.0 / 5.0)
    else:
        raise DomainError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    z *= scale
    return z


def _check_frame(f: np.ndarray, rows: int, r: int, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (rows, r):
        raise DomainError(f"{name} must have shape {(rows, r)}, got {f.shape}")
    if r and np.max(np.abs(f.T @ f - np.eye(r))) > 1e-10:
        raise DomainError(f"{name} must have orthonormal columns")
    return f


def sample_spiked(
    n: int,
    m: int,
    spikes: Sequence[float] = (),
    noise_kind: str = "gaussian",
    seed: int = 0,
    u_factors: Optional[np.ndarray] = None,
    v_factors: Optional[np.ndarray] = None,
    noise_level: float = 1.0,
) -> SpikedInstance:
    """Draw a spiked instance.

    Signal directions are uniformly random unless ``u_factors`` /
    ``v_factors`` are supplied. ``noise_level`` multiplies the noise (the
    standard normalization is ``1``; ``0`` gives a noiseless matrix).
    """
    n, m = int(n), int(m)
    if n < 1 or m < 1:
        raise DomainError("dimensions must be positive")
    spikes = np.asarray(spikes, dtype=float).ravel()
    r = spikes.size
    if r > min(n, m):
        raise DomainError(f"rank {r} exceeds min(n, m) = {min(n, m)}")
    if r and (np.any(spikes <= 0.0) or np.any(np.diff(spikes) >= 0.0)):
        raise DomainError("spikes must be positive and strictly decreasing")
    kind = _ALIASES.get(noise_kind, noise_kind)
    if kind not in NOISE_KINDS:
        raise DomainError(f"unknown noise kind {noise_kind!r}; expected one of {NOISE_KINDS}")
    if noise_level < 0.0:
        raise DomainError("noise_level must be nonnegative")

    rng = rng_from_seed(seed)
    u = haar_frame(rng, n, r) if u_factors is None else _check_frame(u_factors, n, r, "u_factors")
    v = haar_frame(rng, m, r) if v_factors is None else _check_frame(v_factors, m, r, "v_factors")
    if noise_level > 0.0:
        y = sample_noise(rng, n, m, kind)
        if noise_level != 1.0:
            y *= noise_level
    else:
        y = np.zeros((n, m))
    if r:
        y += (u * spikes) @ v.T
    return SpikedInstance(n, m, spikes, u, v, y, kind, seed)


def dims_from_ratios(n: int, gamma: float, beta: float) -> tuple[int, int, int]:
    """``(n, m, d)`` with ``m = round(gamma n)`` and ``d = round(beta m)``."""
    m = int(round(gamma * n))
    d = int(round(beta * m))
    if m < 1 or d < 1:
        raise DomainError(f"ratios give degenerate dimensions n={n}, m={m}, d={d}")
    return int(n), m, d


def measure_overlaps(inst: SpikedInstance, res: RsvdResult, r_track: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed inner products ``(<u_i, u_hat_j>, <v_i, v_hat_j>)`` for ``i, j < r_track``."""
    if inst.u_factors.shape[0] != res.u_hat.shape[0] or inst.v_factors.shape[0] != res.v_hat.shape[0]:
        raise DomainError("instance and decomposition dimensions disagree")
    if not 0 <= r_track <= min(inst.rank, res.rank):
        raise DomainError(f"r_track must lie in [0, {min(inst.rank, res.rank)}]")
    ou = inst.u_factors[:, :r_track].T @ res.u_hat[:, :r_track]
    ov = inst.v_factors[:, :r_track].T @ res.v_hat[:, :r_track]
    return ou, ov

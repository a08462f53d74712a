"""Optimal singular-value shrinkage for randomized-SVD output.

The weight given to an outlier ``y`` is ``sigma U(sigma) V(sigma)`` with
``sigma`` the spike that would produce it; everything at or below the bulk
edge is discarded. In practice the noise level is unknown and singular
values are first divided by a median-based estimate of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .mp_law import ModelParams, bulk_edges, bulk_params, mp_median
from .rsvd import RsvdResult
from .spiked import SpikedInstance
from .theory import overlaps, spike_inverse

__all__ = [
    "DenoiseConfig",
    "DenoiseResult",
    "optimal_weight",
    "conjectured_weight",
    "conjecture_gap",
    "estimate_noise",
    "estimate_rank",
    "denoise",
    "oracle_weights",
    "frobenius_losses",
]

# relative level below which the noise scale is treated as zero
_NOISELESS = 1e-12


def optimal_weight(p: ModelParams, y: float) -> float:
    """Asymptotically optimal shrunken value for an observed singular value ``y``."""
    if y < 0.0:
        raise DomainError(f"singular value must be nonnegative, got {y!r}")
    # compare on the singular-value scale so that y = sqrt(lambda_plus) maps to 0 exactly
    if y <= math.sqrt(bulk_edges(p)[1]):
        return 0.0
    try:
        sigma = spike_inverse(p, y)
        u, v = overlaps(p, sigma)
    except DomainError:
        # rounding right at the edge, where the weight vanishes continuously
        return 0.0
    return max(0.0, sigma * u * v)


def conjectured_weight(p: ModelParams, y: float) -> float:
    """Closed-form candidate ``sqrt((y^2 - l+)(y^2 - l-)) / y``; zero at or below the edge."""
    if y < 0.0:
        raise DomainError(f"singular value must be nonnegative, got {y!r}")
    lo, hi = bulk_edges(p)
    if y <= math.sqrt(hi):
        return 0.0
    y2 = y * y
    return math.sqrt((y2 - hi) * (y2 - lo)) / y


def conjecture_gap(p: ModelParams, grid: Sequence[float]) -> float:
    """Largest disagreement between :func:`optimal_weight` and :func:`conjectured_weight`."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("empty grid")
    edge = math.sqrt(bulk_edges(p)[1])
    if np.any(grid <= edge):
        raise DomainError("grid points must lie above the bulk edge")
    return float(max(abs(optimal_weight(p, y) - conjectured_weight(p, y)) for y in grid))


def estimate_noise(sing_vals, p: ModelParams) -> float:
    """Noise scale from the median squared singular value.

    Needs the full set of ``d`` singular values of the R-SVD output.
    """
    s = np.asarray(sing_vals, dtype=float).ravel()
    if s.size < 2:
        raise DomainError("at least two singular values are needed")
    return math.sqrt(float(np.median(s * s)) / mp_median(bulk_params(p)))


def estimate_rank(sing_vals, delta: float, rho: float, p: ModelParams) -> int:
    """Number of ``s / rho`` strictly above ``sqrt(lambda_plus) + delta``."""
    if not delta > 0.0:
        raise DomainError("delta must be positive")
    if not rho > 0.0:
        raise DomainError("rho must be positive")
    s = np.asarray(sing_vals, dtype=float).ravel()
    return int(np.sum(s / rho > math.sqrt(bulk_edges(p)[1]) + delta))


@dataclass(frozen=True)
class DenoiseConfig:
    """Exactly one of ``delta`` (rank by thresholding) or ``rank_bound``.

    ``rho`` is the known noise scale; ``None`` requests estimation.
    """

    delta: Optional[float] = None
    rank_bound: Optional[int] = None
    rho: Optional[float] = None

    def __post_init__(self):
        if (self.delta is None) == (self.rank_bound is None):
            raise ConfigError("give exactly one of delta or rank_bound")
        if self.delta is not None and not self.delta > 0.0:
            raise ConfigError(f"delta must be positive, got {self.delta!r}")
        if self.rank_bound is not None and (int(self.rank_bound) != self.rank_bound or self.rank_bound < 1):
            raise ConfigError(f"rank_bound must be a positive integer, got {self.rank_bound!r}")
        if self.rho is not None and not self.rho > 0.0:
            raise ConfigError(f"rho must be positive, got {self.rho!r}")


@dataclass(frozen=True, eq=False)
class DenoiseResult:
    rank_used: int
    weights: np.ndarray
    rho_hat: float
    u: np.ndarray
    v: np.ndarray

    @property
    def x_hat_factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.u, self.weights, self.v

    def matrix(self) -> np.ndarray:
        return (self.u * self.weights) @ self.v.T


def denoise(res: RsvdResult, p: ModelParams, cfg: DenoiseConfig) -> DenoiseResult:
    """Shrink the singular values of an R-SVD into an estimate of the signal."""
    s = np.asarray(res.sing_vals, dtype=float)
    rho = cfg.rho if cfg.rho is not None else estimate_noise(s, p)
    top = float(s[0]) if s.size else 0.0
    if rho < _NOISELESS * top:
        # no measurable noise: nothing to shrink
        if cfg.rank_bound is not None:
            k = min(int(cfg.rank_bound), s.size)
        else:
            k = int(np.sum(s > _NOISELESS * top))
        return DenoiseResult(k, s[:k].copy(), float(rho), res.u_hat[:, :k], res.v_hat[:, :k])
    if cfg.rank_bound is not None:
        k = min(int(cfg.rank_bound), s.size)
    else:
        k = estimate_rank(s, cfg.delta, rho, p)
    w = np.array([rho * optimal_weight(p, x / rho) for x in s[:k]])
    return DenoiseResult(k, np.clip(w, 0.0, None), float(rho), res.u_hat[:, :k], res.v_hat[:, :k])


def oracle_weights(inst: SpikedInstance, res: RsvdResult, k: int) -> np.ndarray:
    """Weights minimizing ``||X - sum w_i u_hat_i v_hat_i^T||_F`` over the top ``k`` pairs."""
    if not 0 <= k <= res.rank:
        raise DomainError(f"k must lie in [0, {res.rank}]")
    a = inst.u_factors.T @ res.u_hat[:, :k]
    b = inst.v_factors.T @ res.v_hat[:, :k]
    return np.einsum("j,ji,ji->i", inst.spikes, a, b)


def frobenius_losses(inst: SpikedInstance, res: RsvdResult, weights) -> tuple[float, float]:
    """``(||X - X_hat||_F^2, oracle loss)`` for ``X_hat`` built from ``weights``.

    Both are evaluated in factored form; the oracle uses the same number of
    leading pairs as ``weights``.
    """
    w = np.asarray(weights, dtype=float)
    wo = oracle_weights(inst, res, w.size)
    x2 = inst.signal_norm_sq()
    loss = x2 - 2.0 * float(w @ wo) + float(w @ w)
    oracle = x2 - float(wo @ wo)
    return loss, oracle

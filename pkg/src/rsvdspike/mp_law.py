"""Marchenko-Pastur distribution utilities.

Two parameterizations live here: the generic (shape ``phi``, scale ``eta2``)
law, and the (``gamma``, ``beta``) parameterization of the bulk of singular
values produced by the randomized SVD of a pure-noise matrix, where
``gamma = m / n`` is the aspect ratio and ``beta = d / m`` the undersampling
ratio of the sketch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError

__all__ = [
    "MpParams",
    "ModelParams",
    "bulk_params",
    "bulk_edges",
    "bulk_discriminant",
    "mp_density",
    "mp_cdf",
    "mp_cdf_closed",
    "mp_median",
]


@dataclass(frozen=True)
class MpParams:
    """Marchenko-Pastur law with shape ``0 < phi <= 1`` and scale ``eta2 > 0``."""

    phi: float
    eta2: float

    def __post_init__(self):
        if not (0.0 < self.phi <= 1.0):
            raise DomainError(f"shape phi must lie in (0, 1], got {self.phi!r}")
        if not self.eta2 > 0.0:
            raise DomainError(f"scale eta2 must be positive, got {self.eta2!r}")

    @property
    def lambda_minus(self) -> float:
        return self.eta2 * (1.0 - math.sqrt(self.phi)) ** 2

    @property
    def lambda_plus(self) -> float:
        return self.eta2 * (1.0 + math.sqrt(self.phi)) ** 2

    @property
    def edges(self) -> tuple[float, float]:
        return self.lambda_minus, self.lambda_plus


@dataclass(frozen=True)
class ModelParams:
    """Asymptotic regime of the spiked R-SVD problem.

    ``gamma`` is the aspect ratio m/n and ``beta`` the undersampling ratio d/m.
    When ``beta == 1`` or ``gamma * beta >= 1`` the sketch performs no
    dimension reduction (the reduced matrix equals the data matrix) and every
    prediction falls back to the classical full-SVD formulas; see
    :attr:`classical`.
    """

    gamma: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise DomainError(f"gamma must be positive and finite, got {self.gamma!r}")
        if not (0.0 < self.beta <= 1.0):
            raise DomainError(f"beta must lie in (0, 1], got {self.beta!r}")

    @property
    def classical(self) -> bool:
        """True when no dimension reduction takes place."""
        return self.beta == 1.0 or self.gamma * self.beta >= 1.0

    @property
    def rho(self) -> float:
        """The recurring combination ``1 + gamma - beta * gamma``."""
        return 1.0 + self.gamma - self.beta * self.gamma


def _classical_mp(gamma: float) -> MpParams:
    return MpParams(phi=min(gamma, 1.0 / gamma), eta2=math.sqrt(max(gamma, 1.0 / gamma)))


def bulk_params(p: ModelParams) -> MpParams:
    """Shape and scale of the limiting law of the squared bulk singular values.

    For ``gamma * beta >= 1`` this returns the classical full-SVD law
    ``(min(gamma, 1/gamma), max(gamma, 1/gamma) ** 0.5)``.
    """
    if p.classical:
        return _classical_mp(p.gamma)
    g, b = p.gamma, p.beta
    phi = g * b / (1.0 + g - g * b)
    eta2 = g ** -0.5 + (1.0 - b) * g ** 0.5
    return MpParams(phi=phi, eta2=eta2)


def bulk_edges(p: ModelParams) -> tuple[float, float]:
    """Edges ``(lambda_minus, lambda_plus)`` of the squared-singular-value bulk."""
    g = p.gamma
    b = 1.0 if p.classical else p.beta
    center = g ** -0.5 + g ** 0.5
    half_width = 2.0 * math.sqrt(b * (1.0 + g - g * b))
    return center - half_width, center + half_width


def bulk_discriminant(p: ModelParams, lam, expanded: bool = False):
    """``(lambda_plus - lam) * (lam - lambda_minus)``, positive inside the bulk.

    With ``expanded=True`` the equivalent polynomial form in ``gamma`` is
    evaluated instead of the product of edge distances.
    """
    lam = np.asarray(lam, dtype=float)
    if expanded:
        g = p.gamma
        b = 1.0 if p.classical else p.beta
        shifted = math.sqrt(g) * lam - 1.0 - g
        out = -(shifted ** 2 - 4.0 * b * g * (1.0 + g - g * b)) / g
    else:
        lo, hi = bulk_edges(p)
        out = (hi - lam) * (lam - lo)
    return out if out.ndim else float(out)


def mp_density(mp: MpParams, lam):
    """Density of the Marchenko-Pastur law; zero outside its support."""
    lam = np.asarray(lam, dtype=float)
    lo, hi = mp.edges
    inside = (lam > lo) & (lam < hi) & (lam > 0.0)
    out = np.zeros_like(lam)
    x = lam[inside]
    out[inside] = np.sqrt((hi - x) * (x - lo)) / (2.0 * math.pi * mp.eta2 * mp.phi * x)
    return out if out.ndim else float(out)


def _angle_integrand(t: float, mp: MpParams) -> float:
    # lam = lo + (hi - lo)(1 - cos t)/2 turns both square-root edges into sin^2 t
    lo, hi = mp.edges
    half = 0.5 * (hi - lo)
    norm = 2.0 * math.pi * mp.eta2 * mp.phi
    lam = lo + 2.0 * half * math.sin(0.5 * t) ** 2
    if lam <= 0.0:
        # phi == 1 lower edge, limit of sin^2 t / lam as t -> 0
        return 2.0 * half / norm
    return half * half * math.sin(t) ** 2 / lam / norm


def _to_angle(mp: MpParams, lam: float) -> float:
    lo, hi = mp.edges
    c = 1.0 - 2.0 * (lam - lo) / (hi - lo)
    return math.acos(min(1.0, max(-1.0, c)))


def mp_cdf(mp: MpParams, lam: float) -> float:
    """Cumulative distribution function, by adaptive Gauss-Kronrod quadrature.

    The integrand is taken in the angular variable that maps the support onto
    ``[0, pi]``, which removes the square-root behavior at both edges.
    """
    lo, hi = mp.edges
    if lam <= lo:
        return 0.0
    if lam >= hi:
        return 1.0
    t = _to_angle(mp, lam)
    # near phi = 1 the integrand turns over on the angular scale sqrt(2 lo / half); integrate
    # that stretch on its own so quad resolves it
    t0 = math.sqrt(4.0 * lo / (hi - lo))
    cuts = [0.0] + [c for c in (t0, 30 * t0, 1000 * t0) if 0.0 < c < t] + [t]
    val = sum(integrate.quad(_angle_integrand, a, b, args=(mp,), epsabs=1e-15, epsrel=1e-13, limit=200)[0]
              for a, b in zip(cuts, cuts[1:]))
    return min(1.0, max(0.0, val))


def mp_cdf_closed(mp: MpParams, lam):
    """Vectorized closed-form CDF.

    Integrating the angular integrand exactly gives
    ``(w sin t + a t - 2 sqrt(lo hi) atan2(sqrt(hi) sin(t/2), sqrt(lo) cos(t/2))) / norm``
    with ``a`` the midpoint and ``w`` the half-width of the support.
    Used where many evaluations are needed (e.g. Kolmogorov-Smirnov statistics).
    """
    lam = np.asarray(lam, dtype=float)
    lo, hi = mp.edges
    a, w = 0.5 * (lo + hi), 0.5 * (hi - lo)
    c = np.clip(1.0 - (lam - lo) / w, -1.0, 1.0)
    t = np.arccos(c)
    ang = np.arctan2(math.sqrt(hi) * np.sin(0.5 * t), math.sqrt(lo) * np.cos(0.5 * t))
    val = (w * np.sin(t) + a * t - 2.0 * math.sqrt(lo * hi) * ang) / (2.0 * math.pi * mp.eta2 * mp.phi)
    out = np.where(lam <= lo, 0.0, np.where(lam >= hi, 1.0, np.clip(val, 0.0, 1.0)))
    return out if out.ndim else float(out)


def mp_median(mp: MpParams, rtol: float = 1e-10) -> float:
    """Median of the law, by bisection of :func:`mp_cdf` on the support."""
    lo, hi = mp.edges
    return optimize.bisect(lambda x: mp_cdf(mp, x) - 0.5, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps))

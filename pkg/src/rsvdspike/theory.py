"""Deterministic large-dimensional limits for the R-SVD of a spiked matrix.

Everything here is a pure function of the regime ``ModelParams(gamma, beta)``
and, where relevant, a spike intensity ``sigma`` or an outlier location ``y``
(on the singular-value scale, i.e. ``y > sqrt(lambda_plus)``).

The central object is the 6x6 symmetric matrix function ``K(y)`` together
with the constant matrix ``H``. For every ``y`` above the bulk edge the
pencil ``det(K(y) - s H) = 0`` has exactly one positive root ``theta(y)``.
The outlier produced by a spike ``sigma`` sits at ``y = theta^{-1}(1/sigma)``,
and the kernel vector of ``K(y) - H / sigma``, normalized against ``T(y)``,
encodes the limiting singular-vector overlaps.

In the no-reduction regime (``beta == 1`` or ``gamma * beta >= 1``) all
quantities fall back to the classical full-SVD spiked-model formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import optimize

from .errors import DomainError, NoBracketError
from .mp_law import ModelParams, bulk_edges

__all__ = [
    "KappaTable",
    "SpikePrediction",
    "kappa_table",
    "k_matrix",
    "h_matrix",
    "tau_values",
    "tau_t_matrix",
    "theta",
    "theta_inv",
    "detection_threshold",
    "small_beta_threshold",
    "spike_forward",
    "spike_forward_factored",
    "spike_inverse",
    "overlaps",
    "predict",
    "classical_spike_forward",
    "classical_spike_inverse",
    "classical_overlaps",
    "classical_prediction",
    "sketched_pca_prediction",
    "sketched_pca_snr",
    "snr_for_overlap",
    "scaling_limit_overlaps",
]

# radicand guard at the branch point of sqrt(-gamma * Delta(y^2))
_RADICAND_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# classical (beta = 1) spiked model
# ---------------------------------------------------------------------------

def classical_spike_forward(gamma: float, sigma: float) -> float:
    """Outlier location ``Y_gamma(sigma)`` of the full SVD; bulk edge below 1."""
    edge = gamma ** 0.25 + gamma ** -0.25
    if sigma <= 1.0:
        return edge
    return math.sqrt((gamma ** 0.25 * sigma + gamma ** -0.25 / sigma)
                     * (gamma ** -0.25 * sigma + gamma ** 0.25 / sigma))


def classical_spike_inverse(gamma: float, y: float) -> float:
    """Inverse of :func:`classical_spike_forward` on ``y > gamma^{1/4} + gamma^{-1/4}``."""
    c = gamma ** 0.5 + gamma ** -0.5
    if not y * y > c + 2.0:
        raise DomainError(f"y={y!r} is not above the bulk edge {math.sqrt(c + 2.0)!r}")
    t = y * y - c
    return math.sqrt(0.5 * (t + math.sqrt(t * t - 4.0)))


def classical_overlaps(gamma: float, sigma: float) -> tuple[float, float]:
    """Limiting ``(|<u, u_hat>|, |<v, v_hat>|)`` of the full SVD; zero at or below 1."""
    if sigma <= 1.0:
        return 0.0, 0.0
    s2, s4 = sigma * sigma, sigma ** 4
    u = math.sqrt((s4 - 1.0) / (s4 + gamma ** -0.5 * s2))
    v = math.sqrt((s4 - 1.0) / (s4 + gamma ** 0.5 * s2))
    return u, v


# ---------------------------------------------------------------------------
# kappa / tau functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaTable:
    """The nine kappa functions evaluated at one point ``y``.

    Indexing is 1-based to match the usual numbering: ``table[1]`` through
    ``table[9]``. ``derivatives`` holds the matching ``d kappa / dy``.
    """

    y: float
    values: np.ndarray
    derivatives: np.ndarray

    def __getitem__(self, i: int) -> float:
        if not 1 <= i <= 9:
            raise IndexError("kappa index runs from 1 to 9")
        return float(self.values[i - 1])


def _require_reduced(p: ModelParams) -> None:
    if p.classical:
        raise DomainError(
            f"gamma*beta = {p.gamma * p.beta!r} >= 1 or beta == 1: no dimension reduction, "
            "the K/T/H construction does not apply (use the classical formulas)"
        )


def _sqrt_edge(p: ModelParams) -> float:
    return math.sqrt(bulk_edges(p)[1])


def _radical_parts(p: ModelParams, y: float) -> tuple[float, float, float]:
    """Return ``(delta, R, D)`` at ``z = y^2``.

    ``delta = sqrt(gamma) z - 1 - gamma``, ``R = sqrt(-gamma Delta(z))`` and
    ``D = delta - R``, the latter computed without cancellation.
    """
    g, b, rho = p.gamma, p.beta, p.rho
    edge = _sqrt_edge(p)
    if not y > edge:
        raise DomainError(f"y={y!r} must lie strictly above the bulk edge {edge!r}")
    delta = math.sqrt(g) * y * y - 1.0 - g
    c0 = 4.0 * b * g * rho
    rad = delta * delta - c0
    if rad < 0.0:
        if rad < -_RADICAND_CLAMP * max(1.0, c0):
            raise DomainError(f"negative radicand {rad!r} at y={y!r}")
        rad = 0.0
    r = math.sqrt(rad)
    return delta, r, c0 / (delta + r)


def _kappa_coefficients(p: ModelParams) -> list[tuple[float, float, float, float, int]]:
    # each kappa is (aD * D + ad * delta + a0) / (c * y**power)
    g, b, rho = p.gamma, p.beta, p.rho
    c1 = 1.0 + g - 2.0 * b * g
    k9 = math.sqrt(g) * (1.0 - b) * (1.0 - b * g)
    return [
        (1.0, 0.0, 2.0, 2.0, 1),
        (0.0, 0.0, 1.0 - b * g, 1.0, 1),
        (c1, 2.0 * b * g, 4.0 * b * g * rho, 2.0 * g * (1.0 - b * g), 3),
        (1.0, 0.0, 2.0 * b * g, 2.0 * g, 2),
        (-(1.0 - b), -2.0 * b, -2.0 * b * (1.0 + 2.0 * g - b * g), 2.0 * (1.0 - b * g), 2),
        (1.0, 0.0, 2.0 * g, 2.0 * g, 1),
        (0.0, 0.0, 1.0 - b, 1.0, 1),
        (1.0 - b, 0.0, 2.0 * (1.0 - b), 2.0 * (1.0 - b * g), 1),
        (k9, 0.0, 2.0 * k9 * rho, 2.0 * rho, 1),
    ]


def kappa_table(p: ModelParams, y: float) -> KappaTable:
    """Evaluate the nine kappa functions and their ``y``-derivatives."""
    _require_reduced(p)
    delta, r, dd = _radical_parts(p, y)
    sg = math.sqrt(p.gamma)
    d_delta = 2.0 * sg * y
    # dD/dy = -2 sqrt(gamma) y D / R; R > 0 strictly above the edge
    d_dd = -d_delta * dd / r if r > 0.0 else -math.inf
    vals = np.empty(9)
    ders = np.empty(9)
    for i, (a_d, a_delta, a_0, c, power) in enumerate(_kappa_coefficients(p)):
        num = a_d * dd + a_delta * delta + a_0
        dnum = a_d * d_dd + a_delta * d_delta if a_d else a_delta * d_delta
        den = c * y ** power
        vals[i] = num / den
        ders[i] = dnum / den - power * num / (den * y)
    return KappaTable(y=float(y), values=vals, derivatives=ders)


def tau_values(p: ModelParams, y: float) -> np.ndarray:
    """The nine tau functions at ``y`` (0-based array, ``tau[0]`` is tau^(1))."""
    kt = kappa_table(p, y)
    k, dk = kt.values, kt.derivatives
    tau = np.empty(9)
    tau[0:3] = -0.5 * (dk[0:3] - k[0:3] / y)
    tau[3:5] = -0.5 * dk[3:5]
    tau[5:9] = -0.5 * (k[5:9] / y + dk[5:9])
    return tau


def _assemble(vals: np.ndarray, corner: float) -> np.ndarray:
    k1, k2, k3, k4, k5, k6, k7, k8, k9 = vals
    m = np.zeros((6, 6))
    m[0, 0] = k1
    m[0, 1] = m[1, 0] = k2
    m[1, 1] = k2
    m[1, 5] = m[5, 1] = corner
    m[2, 2] = k3
    m[2, 3] = m[3, 2] = k4
    m[2, 4] = m[4, 2] = k5
    m[3, 3] = k6
    m[3, 4] = m[4, 3] = k7
    m[4, 4] = k8
    m[5, 5] = k9
    return m


def k_matrix(p: ModelParams, y: float) -> np.ndarray:
    """The symmetric 6x6 matrix ``K(y)``."""
    return _assemble(kappa_table(p, y).values, -(1.0 - p.gamma * p.beta))


def tau_t_matrix(p: ModelParams, y: float) -> np.ndarray:
    """The symmetric 6x6 matrix ``T(y)`` built from the tau functions."""
    return _assemble(tau_values(p, y), 0.0)


def h_matrix() -> np.ndarray:
    """Constant pencil matrix ``[[0, J], [J, 0]]`` with ``J = diag(1, -1, 1)``."""
    j = np.diag([1.0, -1.0, 1.0])
    h = np.zeros((6, 6))
    h[:3, 3:] = j
    h[3:, :3] = j
    return h


# ---------------------------------------------------------------------------
# theta and the spike-forward map
# ---------------------------------------------------------------------------

def theta(p: ModelParams, y: float) -> float:
    """Unique positive root ``s`` of ``det(K(y) - s H) = 0``.

    Closed form: ``theta = sqrt(q+)`` with ``q+`` the positive root of the
    quadratic ``a q^2 + b q + c`` where ``A = D(y^2)``,
    ``a = 2 sqrt(gamma) rho``, ``b = rho (2 beta gamma - A)`` and
    ``c = -sqrt(gamma) A``.
    """
    if p.classical:
        return 1.0 / classical_spike_inverse(p.gamma, y)
    _, _, big_a = _radical_parts(p, y)
    g, b_, rho = p.gamma, p.beta, p.rho
    a = 2.0 * math.sqrt(g) * rho
    b = rho * (2.0 * b_ * g - big_a)
    c = -math.sqrt(g) * big_a
    disc = math.sqrt(b * b - 4.0 * a * c)
    q = (-b + disc) / (2.0 * a) if b <= 0.0 else (2.0 * c) / (-b - disc)
    return math.sqrt(q)


def theta_inv(p: ModelParams, s: float) -> float:
    """Explicit inverse of :func:`theta`, defined for ``0 < s < 1 / sigma*``."""
    bound = 1.0 / detection_threshold(p)
    if not 0.0 < s < bound:
        raise DomainError(f"s={s!r} outside (0, {bound!r})")
    if p.classical:
        return classical_spike_forward(p.gamma, 1.0 / s)
    g, b, rho = p.gamma, p.beta, p.rho
    sg = math.sqrt(g)
    s2, s4 = s * s, s ** 4
    num = (s2 + (1.0 + s4) * sg + s2 * g) * (b * g + s4 * rho + 2.0 * s2 * b * sg * rho)
    den = s2 * (s2 + b * sg) * sg * (sg + s2 * rho)
    return math.sqrt(num / den)


def detection_threshold(p: ModelParams) -> float:
    """Spike intensity ``sigma*`` above which an outlier leaves the bulk."""
    if p.classical:
        return 1.0
    g, b, rho = p.gamma, p.beta, p.rho
    v = 0.5 * (g ** 0.5 + g ** -0.5 - b * g ** 0.5 - math.sqrt(b * rho))
    return math.sqrt(math.sqrt(v * v + math.sqrt(rho / g) / math.sqrt(b)) - v)


def small_beta_threshold(p: ModelParams) -> float:
    """Leading-order small-``beta`` expansion ``(1 + 1/gamma)^{1/8} beta^{-1/8}``."""
    return (1.0 + 1.0 / p.gamma) ** 0.125 * p.beta ** -0.125


def spike_forward(p: ModelParams, sigma: float) -> float:
    """Limiting location of the top singular value produced by spike ``sigma``.

    Returns the bulk edge ``sqrt(lambda_plus)`` for undetectable spikes.
    """
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    if p.classical:
        return classical_spike_forward(p.gamma, sigma)
    if sigma <= detection_threshold(p):
        return _sqrt_edge(p)
    g, b, rho = p.gamma, p.beta, p.rho
    sg = math.sqrt(g)
    s2, s4 = sigma * sigma, sigma ** 4
    num = (sg + s2) * (1.0 + sg * s2) * (rho + 2.0 * b * sg * rho * s2 + b * g * s4)
    den = sg * s2 * (rho + sg * s2) * (1.0 + b * sg * s2)
    return math.sqrt(num / den)


def spike_forward_factored(p: ModelParams, sigma: float) -> float:
    """Same map as :func:`spike_forward`, through the classical ``Y_gamma`` factor."""
    if p.classical or sigma <= detection_threshold(p):
        return spike_forward(p, sigma)
    g, b, rho = p.gamma, p.beta, p.rho
    sg = math.sqrt(g)
    s2, s4 = sigma * sigma, sigma ** 4
    y_classical = math.sqrt((g ** 0.25 * sigma + g ** -0.25 / sigma) * (g ** -0.25 * sigma + g ** 0.25 / sigma))
    ratio = (rho + 2.0 * b * sg * rho * s2 + b * g * s4) / ((rho + sg * s2) * (1.0 + b * sg * s2))
    return y_classical * math.sqrt(ratio)


def spike_inverse(p: ModelParams, y: float) -> float:
    """Spike intensity whose outlier sits at ``y``; inverse of :func:`spike_forward`."""
    if p.classical:
        return classical_spike_inverse(p.gamma, y)
    return 1.0 / theta(p, y)


# ---------------------------------------------------------------------------
# singular-vector overlaps
# ---------------------------------------------------------------------------

def _kernel_vector(p: ModelParams, y: float, sigma: float) -> np.ndarray:
    w, vecs = np.linalg.eigh(k_matrix(p, y) - h_matrix() / sigma)
    return vecs[:, int(np.argmin(np.abs(w)))]


def overlaps(p: ModelParams, sigma: float) -> tuple[float, float]:
    """Limiting ``(|<u, u_hat>|, |<v, v_hat>|)`` for a detectable spike.

    Raises :class:`DomainError` when ``sigma <= sigma*``; callers wanting the
    (conjectured) zero below threshold should use :func:`predict`.
    """
    sstar = detection_threshold(p)
    if not sigma > sstar:
        raise DomainError(f"sigma={sigma!r} is not above the detection threshold {sstar!r}")
    if p.classical:
        return classical_overlaps(p.gamma, sigma)
    y = spike_forward(p, sigma)
    d = _kernel_vector(p, y, sigma)
    weight = float(d @ tau_t_matrix(p, y) @ d)
    if not weight > 0.0:
        raise DomainError(f"T-weighted norm of the kernel vector is not positive ({weight!r})")
    d = d / math.sqrt(weight)
    u = min(1.0, abs(d[3]) / sigma)
    v = min(1.0, abs(d[0]) / sigma)
    return u, v


@dataclass(frozen=True)
class SpikePrediction:
    """Asymptotic fate of one spike under the R-SVD (or a comparison method).

    ``overlap_u`` is ``None`` when the method does not define it.
    ``conjectured`` marks zero overlaps reported for undetectable spikes,
    which rest on a conjecture rather than a theorem.
    """

    sigma: float
    detectable: bool
    outlier_sq: float
    overlap_u: Optional[float]
    overlap_v: float
    conjectured: bool = False

    @property
    def overlap_product(self) -> Optional[float]:
        if self.overlap_u is None:
            return None
        return self.overlap_u * self.overlap_v


def classical_prediction(gamma: float, sigma: float) -> SpikePrediction:
    """Full-SVD spiked-model prediction (threshold 1)."""
    if not gamma > 0.0 or not sigma > 0.0:
        raise DomainError("gamma and sigma must be positive")
    y = classical_spike_forward(gamma, sigma)
    u, v = classical_overlaps(gamma, sigma)
    detectable = sigma > 1.0
    return SpikePrediction(sigma, detectable, y * y, u, v, conjectured=not detectable)


def predict(p: ModelParams, sigma: float) -> SpikePrediction:
    """Outlier location and overlaps for spike ``sigma``, dispatching on regime."""
    if p.classical:
        return classical_prediction(p.gamma, sigma)
    y = spike_forward(p, sigma)
    if sigma > detection_threshold(p):
        u, v = overlaps(p, sigma)
        return SpikePrediction(sigma, True, y * y, u, v)
    return SpikePrediction(sigma, False, y * y, 0.0, 0.0, conjectured=True)


def scaling_limit_overlaps(gamma: float, alpha: float, beta: float = 1e-6) -> tuple[float, float]:
    """Numerical ``(U*(alpha), V*(alpha))`` small-``beta`` scaling limits.

    ``U*`` is the left overlap at ``sigma = alpha beta^{-1/2}`` and ``V*`` the
    right overlap at ``sigma = alpha beta^{-1/4}``, both at a small fixed beta.
    """
    p = ModelParams(gamma, beta)
    sstar = detection_threshold(p)
    s_u, s_v = alpha * beta ** -0.5, alpha * beta ** -0.25
    u = overlaps(p, s_u)[0] if s_u > sstar else 0.0
    v = overlaps(p, s_v)[1] if s_v > sstar else 0.0
    return u, v


# ---------------------------------------------------------------------------
# sketched PCA comparison
# ---------------------------------------------------------------------------

def sketched_pca_prediction(p: ModelParams, sigma: float) -> SpikePrediction:
    """Limits for sketched PCA with a Haar projection from the left.

    Only the right singular vector overlap is available; ``overlap_u`` is None.
    """
    if p.classical:
        raise DomainError("sketched PCA comparison requires gamma * beta < 1")
    g, b = p.gamma, p.beta
    threshold = (b * g) ** -0.25
    edge_sq = math.sqrt(g) * (1.0 + math.sqrt(b)) ** 2
    if sigma <= threshold:
        return SpikePrediction(sigma, False, edge_sq, None, 0.0, conjectured=False)
    s2, s4 = sigma * sigma, sigma ** 4
    v = math.sqrt((g * b * s4 - 1.0) / (g * b * s4 + math.sqrt(g) * s2))
    outlier_sq = edge_sq + 1.0 / s2 + b * g * s2 - 2.0 * math.sqrt(b * g)
    return SpikePrediction(sigma, True, outlier_sq, None, v)


def sketched_pca_snr(p: ModelParams, target: float = 0.5) -> float:
    """Spike level at which sketched PCA attains ``|<v, v_tilde>|^2 = target``."""
    if not 0.0 < target < 1.0:
        raise DomainError("target must lie in (0, 1)")
    g, b, t = p.gamma, p.beta, target
    s2 = (t * math.sqrt(g) + math.sqrt(t * t * g + 4.0 * g * b * (1.0 - t))) / (2.0 * g * b * (1.0 - t))
    return math.sqrt(s2)


# ---------------------------------------------------------------------------
# SNR required for a given overlap
# ---------------------------------------------------------------------------

def _overlap_curve(p: ModelParams, which: str):
    def curve(sigma: float) -> float:
        try:
            u, v = overlaps(p, sigma)
        except DomainError:
            # at or numerically indistinguishable from the threshold
            return 0.0
        if which == "product":
            return u * v
        if which == "u":
            return u * u
        return v * v
    return curve


def snr_for_overlap(
    p: ModelParams,
    target: float,
    which: Literal["product", "u", "v"] = "product",
    sigma_hi: float = 1e6,
    xtol: float = 1e-8,
) -> float:
    """Smallest spike ``sigma`` whose limiting overlap reaches ``target``.

    ``which="product"`` solves ``U V = target``; ``"u"`` and ``"v"`` solve
    ``U^2 = target`` and ``V^2 = target`` (squared single-side correlations).
    """
    if not 0.0 < target < 1.0:
        raise DomainError("target must lie in (0, 1)")
    if which not in ("product", "u", "v"):
        raise ValueError(f"unknown overlap kind {which!r}")
    curve = _overlap_curve(p, which)
    sstar = detection_threshold(p)
    lo = sstar
    hi = 2.0 * sstar
    while curve(hi) < target:
        lo = hi
        hi *= 2.0
        if hi > sigma_hi:
            if curve(sigma_hi) < target:
                raise NoBracketError(f"overlap {target!r} not reached below sigma={sigma_hi!r}")
            hi = sigma_hi
            break
    return optimize.bisect(lambda s: curve(s) - target, lo, hi, xtol=xtol, maxiter=500)

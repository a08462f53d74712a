"""Monte-Carlo experiments pairing simulation with the asymptotic theory.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a list
of :class:`ExperimentRecord`. Trials are seeded per ``(point, trial)`` cell,
so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from ..errors import ConfigError
from ..mp_law import ModelParams, bulk_edges, bulk_params, mp_cdf_closed
from ..rsvd import RsvdResult, full_svd_reference, reduced_singular_values, rsvd
from ..shrinker import DenoiseConfig, conjecture_gap, denoise, estimate_noise, frobenius_losses
from ..sketch import apply_sketch_left, make_sketch
from ..spiked import SpikedInstance, dims_from_ratios, measure_overlaps, sample_spiked
from ..theory import (
    classical_overlaps,
    detection_threshold,
    predict,
    sketched_pca_prediction,
    sketched_pca_snr,
    small_beta_threshold,
    snr_for_overlap,
)
from .config import ExperimentConfig, ExperimentRecord
from .runner import loglog_slope, mean_and_se, run_tasks, trial_seeds

__all__ = [
    "run_bulk_hist",
    "run_outlier",
    "run_angles",
    "run_finite_n",
    "run_universality",
    "run_shrinkage",
    "run_sketched_pca",
    "run_snr_curves",
    "run_conjecture",
    "run_experiment",
]


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _params(cfg: ExperimentConfig) -> ModelParams:
    try:
        return ModelParams(cfg.gamma, cfg.beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve(cfg: ExperimentConfig, values: Sequence[float], p: ModelParams, default_rel: Sequence[float]) -> list[float]:
    if not values:
        return [float(c) * detection_threshold(p) for c in default_rel]
    if cfg.relative_to_threshold:
        return [float(c) * detection_threshold(p) for c in values]
    return [float(s) for s in values]


def _decompose(inst: SpikedInstance, beta: float, sketch_kind: str, q: int, seed: int,
               k: Optional[int]) -> RsvdResult:
    n, m = inst.Y.shape
    d = int(round(beta * m))
    if d >= m:
        return full_svd_reference(inst.Y, min(n, m) if k is None else k)
    op = make_sketch(sketch_kind, d, m, seed)
    return rsvd(inst.Y, op, q, k)


def _draw(cfg: ExperimentConfig, n: int, spikes, noise: str, seeds: Sequence[int],
          k: Optional[int]) -> tuple[SpikedInstance, RsvdResult]:
    n, m, _ = dims_from_ratios(n, cfg.gamma, cfg.beta)
    inst = sample_spiked(n, m, spikes, noise, seeds[0])
    return inst, _decompose(inst, cfg.beta, cfg.sketch_kind, cfg.q, seeds[1], k)


def _spike_trial(cfg: ExperimentConfig, n: int, spikes, noise: str, point: int, trial: int) -> dict:
    inst, res = _draw(cfg, n, spikes, noise, trial_seeds(cfg.seed, point, trial), max(1, len(spikes)))
    out = {"sv": float(res.sing_vals[0])}
    if spikes:
        ou, ov = measure_overlaps(inst, res, 1)
        out.update(u=abs(float(ou[0, 0])), v=abs(float(ov[0, 0])))
        out["prod"] = out["u"] * out["v"]
    return out


def _run_points(cfg: ExperimentConfig, fn: Callable, points: Sequence[tuple]) -> list[list]:
    """Run ``fn(*point, point_index, trial)`` for all cells; group results per point."""
    tasks = [(*pt, i, t) for i, pt in enumerate(points) for t in range(cfg.trials)]
    flat = run_tasks(fn, tasks, cfg.threads)
    return [flat[i * cfg.trials:(i + 1) * cfg.trials] for i in range(len(points))]


def _aggregate(rows: list[dict], names: Sequence[str]) -> tuple[dict, dict]:
    measured, se = {}, {}
    for name in names:
        measured[name], se[name] = mean_and_se([r[name] for r in rows])
    return measured, se


def _spike_summary(p: ModelParams, sigma: float, rows: list[dict]) -> tuple[dict, dict, dict]:
    """Means of outlier/overlap statistics and their deviations from theory."""
    pred = predict(p, sigma)
    y_th = math.sqrt(pred.outlier_sq)
    uv_th = pred.overlap_u * pred.overlap_v
    for r in rows:
        r["sv_sq"] = r["sv"] ** 2
        r["dev_sv"] = abs(r["sv"] - y_th)
        r["dev_sv_sq"] = abs(r["sv_sq"] - pred.outlier_sq)
        r["dev_prod"] = abs(r["prod"] - uv_th)
    measured, se = _aggregate(rows, ["sv", "sv_sq", "u", "v", "prod", "dev_sv", "dev_sv_sq", "dev_prod"])
    theory = {
        "sv": y_th,
        "sv_sq": pred.outlier_sq,
        "u": pred.overlap_u,
        "v": pred.overlap_v,
        "prod": uv_th,
        "detectable": int(pred.detectable),
        "conjectured": int(pred.conjectured),
    }
    return measured, theory, se


def _base_keys(cfg: ExperimentConfig, n: int) -> dict:
    n, m, d = dims_from_ratios(n, cfg.gamma, cfg.beta)
    return {"gamma": cfg.gamma, "beta": cfg.beta, "n": n, "m": m, "d": d}


def _fit_records(records: list[ExperimentRecord], x_key: str, stats_names: Sequence[str],
                 source: str = "measured", extra: Optional[dict] = None) -> list[ExperimentRecord]:
    out = []
    x = [r.keys[x_key] for r in records]
    for name in stats_names:
        y = [getattr(r, source)[name] for r in records]
        if len(x) < 2 or any(v is None or not v > 0.0 for v in y):
            continue
        keys = {"fit": f"slope_{name}_vs_{x_key}", **(extra or {})}
        slope = loglog_slope(x, y)
        if source == "measured":
            out.append(ExperimentRecord(keys, measured={"slope": slope}))
        else:
            out.append(ExperimentRecord(keys, theory={"slope": slope}))
    return out


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_bulk_hist(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Histogram of all squared R-SVD singular values against the bulk law."""
    p = _params(cfg)
    spikes = _resolve(cfg, cfg.spikes, p, []) if cfg.spikes else []
    if len(spikes) > 1:
        raise ConfigError("bulk_hist supports at most one spike")
    r = len(spikes)

    def trial(point: int, t: int) -> np.ndarray:
        seeds = trial_seeds(cfg.seed, point, t)
        n, m, _ = dims_from_ratios(cfg.n, cfg.gamma, cfg.beta)
        inst = sample_spiked(n, m, spikes, cfg.noise_kind, seeds[0])
        d = int(round(cfg.beta * m))
        if d >= m:
            s = np.linalg.svd(inst.Y, compute_uv=False)
        else:
            s = reduced_singular_values(inst.Y, make_sketch(cfg.sketch_kind, d, m, seeds[1]), cfg.q)
        return np.sort(s ** 2)[::-1]

    eig = run_tasks(trial, [(0, t) for t in range(cfg.trials)], cfg.threads)
    mp = bulk_params(p)
    lo, hi = bulk_edges(p)
    cdf = lambda x: mp_cdf_closed(mp, x)  # noqa: E731
    ks = [stats.kstest(e[r:], cdf).statistic for e in eig]
    pooled_bulk = np.concatenate([e[r:] for e in eig])
    ks_pooled = stats.kstest(pooled_bulk, cdf).statistic
    top = [float(e[0]) for e in eig]
    # largest bulk eigenvalue (first one after any outlier)
    bulk_top = [float(e[r]) for e in eig]
    exceed = [float(np.sum(e[r:] > hi + 0.1)) for e in eig]

    keys = _base_keys(cfg, cfg.n)
    keys["sigma"] = spikes[0] if spikes else None
    th_top = predict(p, spikes[0]).outlier_sq if spikes else hi
    measured, se = {}, {}
    for name, vals in (("ks", ks), ("top_eig", top), ("bulk_top_eig", bulk_top), ("exceed_count", exceed)):
        measured[name], se[name] = mean_and_se(vals)
    measured["ks_pooled"] = float(ks_pooled)
    summary = ExperimentRecord(
        {**keys, "row": "summary"}, measured,
        {"top_eig": th_top, "bulk_top_eig": hi, "lambda_minus": lo, "lambda_plus": hi,
         "ks": 0.0, "ks_pooled": 0.0, "exceed_count": 0.0},
        cfg.trials, se,
    )

    width = hi - lo
    upper = max(hi, max(top)) + 0.05 * width
    edges = np.linspace(max(0.0, lo - 0.05 * width), upper, cfg.bins + 1)
    pooled = np.concatenate(eig)
    dens, _ = np.histogram(pooled, bins=edges, density=True)
    th_cdf = mp_cdf_closed(mp, edges)
    th_dens = np.diff(th_cdf) / np.diff(edges)
    bins = [
        ExperimentRecord({**keys, "row": "bin", "bin_lo": float(a), "bin_hi": float(b)},
                         {"density": float(x)}, {"density": float(y)}, cfg.trials)
        for a, b, x, y in zip(edges[:-1], edges[1:], dens, th_dens)
    ]
    return [summary, *bins]


def _sigma_sweep(cfg: ExperimentConfig, default_rel: Sequence[float], classical: bool) -> list[ExperimentRecord]:
    p = _params(cfg)
    sigmas = _resolve(cfg, cfg.sigma_grid, p, default_rel)
    groups = _run_points(cfg, lambda s, i, t: _spike_trial(cfg, cfg.n, [s], cfg.noise_kind, i, t),
                         [(s,) for s in sigmas])
    out = []
    for s, rows in zip(sigmas, groups):
        measured, theory, se = _spike_summary(p, s, rows)
        if classical:
            cu, cv = classical_overlaps(cfg.gamma, s)
            theory["classical_prod"] = cu * cv
        keys = {**_base_keys(cfg, cfg.n), "sigma": s, "sigma_rel": s / detection_threshold(p)}
        out.append(ExperimentRecord(keys, measured, theory, cfg.trials, se))
    return out


def run_outlier(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Top singular value against the spike-forward map over a spike grid."""
    return _sigma_sweep(cfg, (0.5, 0.8, 1.2, 1.5, 2.0, 3.0), classical=False)


def run_angles(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Singular-vector overlaps against theory, with the no-reduction curve alongside."""
    return _sigma_sweep(cfg, (0.5, 0.8, 1.2, 1.5, 2.0, 3.0), classical=True)


def _n_grid(cfg: ExperimentConfig) -> list[int]:
    grid = [int(x) for x in cfg.n_grid] or [250, 500, 1000, 2000]
    return grid


def _finite_n_records(cfg: ExperimentConfig, noise: str, point_offset: int) -> list[ExperimentRecord]:
    p = _params(cfg)
    spikes = _resolve(cfg, cfg.spikes, p, (1.5,))
    grid = _n_grid(cfg)
    groups = _run_points(
        cfg, lambda n, i, t: _spike_trial(cfg, n, spikes, noise, point_offset + i, t), [(n,) for n in grid]
    )
    recs = []
    for n, rows in zip(grid, groups):
        measured, theory, se = _spike_summary(p, spikes[0], rows)
        keys = {**_base_keys(cfg, n), "noise_kind": noise, "sigma": spikes[0]}
        recs.append(ExperimentRecord(keys, measured, theory, cfg.trials, se))
    return recs


def run_finite_n(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Mean deviation from the limits as ``n`` grows, with fitted log-log slopes."""
    recs = _finite_n_records(cfg, cfg.noise_kind, 0)
    fits = _fit_records(recs, "n", ["dev_sv", "dev_sv_sq", "dev_prod"], extra={"noise_kind": cfg.noise_kind})
    return recs + fits


def run_universality(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Finite-``n`` statistics for several noise distributions."""
    kinds = cfg.noise_kinds or ["gaussian", "rademacher", "student5"]
    out = []
    for j, kind in enumerate(kinds):
        # disjoint point indices keep the noise kinds statistically independent
        recs = _finite_n_records(cfg, kind, 1000 * j)
        out += recs + _fit_records(recs, "n", ["dev_sv", "dev_prod"], extra={"noise_kind": kind})
    return out


def _asymptotic_loss(p: ModelParams, spikes: Sequence[float]) -> float:
    loss = 0.0
    for s in spikes:
        pred = predict(p, s)
        loss += s * s * (1.0 - (pred.overlap_u * pred.overlap_v) ** 2)
    return loss


def run_shrinkage(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Relative excess loss of the shrinker over the oracle weights, per ``n``."""
    p = _params(cfg)
    spikes = _resolve(cfg, cfg.spikes, p, (1.4, 1.1, 0.5))
    k = cfg.rank_bound
    if k < len(spikes):
        raise ConfigError("rank_bound must be at least the number of spikes")
    grid = [int(x) for x in cfg.n_grid] or [100, 200, 400, 800]

    def trial(n: int, point: int, t: int) -> dict:
        seeds = trial_seeds(cfg.seed, point, t)
        nn, m, d = dims_from_ratios(n, cfg.gamma, cfg.beta)
        if k > min(d, nn):
            raise ConfigError(f"rank_bound {k} exceeds the sketch dimension {d} at n={n}")
        inst = sample_spiked(nn, m, spikes, cfg.noise_kind, seeds[0])
        if cfg.estimate_noise:
            full = _decompose(inst, cfg.beta, cfg.sketch_kind, cfg.q, seeds[1], None)
            rho = estimate_noise(full.sing_vals, p)
            res = RsvdResult(full.u_hat[:, :k], full.sing_vals[:k], full.v_hat[:, :k], full.q_used)
        else:
            rho = 1.0
            res = _decompose(inst, cfg.beta, cfg.sketch_kind, cfg.q, seeds[1], k)
        dn = denoise(res, p, DenoiseConfig(rank_bound=k, rho=rho))
        loss, oracle = frobenius_losses(inst, res, dn.weights)
        return {
            "eps_shrink": loss,
            "eps_oracle": oracle,
            "rel_excess": (loss - oracle) / oracle,
            "oracle_violation": float(oracle > loss + 1e-10 * inst.signal_norm_sq()),
            "rho_hat": rho,
        }

    groups = _run_points(cfg, trial, [(n,) for n in grid])
    recs = []
    th_loss = _asymptotic_loss(p, spikes)
    for n, rows in zip(grid, groups):
        measured, se = _aggregate(rows, ["rel_excess", "eps_shrink", "eps_oracle", "oracle_violation", "rho_hat"])
        keys = {**_base_keys(cfg, n), "rank_bound": k}
        theory = {"rel_excess": 0.0, "eps_shrink": th_loss, "eps_oracle": th_loss,
                  "oracle_violation": 0.0, "rho_hat": 1.0}
        recs.append(ExperimentRecord(keys, measured, theory, cfg.trials, se))
    return recs + _fit_records(recs, "n", ["rel_excess"])


def _top_pair(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest singular value of ``a`` and its right singular vector."""
    dd = a.shape[0]
    w, u = linalg.eigh(a @ a.T, subset_by_index=[dd - 1, dd - 1])
    s = math.sqrt(max(float(w[0]), 0.0))
    return s, (a.T @ u[:, 0]) / s


def run_sketched_pca(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Right-vector overlaps of sketched PCA and of the R-SVD at matched settings.

    Sketched PCA projects the rows with a Haar ``d x n`` matrix and keeps the
    top right singular vector of the ``d x m`` result.
    """
    p = _params(cfg)
    sigmas = _resolve(cfg, cfg.sigma_grid, p, ())
    if not sigmas:
        sigmas = [2.0]

    def trial(s: float, point: int, t: int) -> dict:
        seeds = trial_seeds(cfg.seed, point, t, 3)
        n, m, d = dims_from_ratios(cfg.n, cfg.gamma, cfg.beta)
        if d >= n:
            raise ConfigError(f"sketched PCA needs d < n, got d={d}, n={n}")
        inst = sample_spiked(n, m, [s], cfg.noise_kind, seeds[0])
        res = _decompose(inst, cfg.beta, cfg.sketch_kind, cfg.q, seeds[1], 1)
        left = make_sketch("haar", d, n, seeds[2])
        sv, v_tilde = _top_pair(apply_sketch_left(left, inst.Y))
        return {
            "rsvd_v": abs(float(inst.v_factors[:, 0] @ res.v_hat[:, 0])),
            "spca_v": abs(float(inst.v_factors[:, 0] @ v_tilde)),
            "spca_sv_sq": sv * sv,
        }

    groups = _run_points(cfg, trial, [(s,) for s in sigmas])
    recs = []
    for s, rows in zip(sigmas, groups):
        measured, se = _aggregate(rows, ["rsvd_v", "spca_v", "spca_sv_sq"])
        sp = sketched_pca_prediction(p, s)
        theory = {"rsvd_v": predict(p, s).overlap_v, "spca_v": sp.overlap_v, "spca_sv_sq": sp.outlier_sq}
        keys = {**_base_keys(cfg, cfg.n), "sigma": s}
        recs.append(ExperimentRecord(keys, measured, theory, cfg.trials, se))
    return recs


def run_snr_curves(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Theory-only thresholds and SNR(0.5) curves over a ``beta`` grid."""
    grid = [float(b) for b in cfg.beta_grid] or list(np.logspace(-4, -2, 9))
    recs = []
    for b in grid:
        try:
            p = ModelParams(cfg.gamma, b)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        th = {
            "sigma_star": detection_threshold(p),
            "small_beta_threshold": small_beta_threshold(p),
            "snr_product": snr_for_overlap(p, 0.5, "product"),
            "snr_u": snr_for_overlap(p, 0.5, "u"),
            "snr_v": snr_for_overlap(p, 0.5, "v"),
            "spca_threshold": None if p.classical else (b * cfg.gamma) ** -0.25,
            "spca_snr": None if p.classical else sketched_pca_snr(p, 0.5),
        }
        recs.append(ExperimentRecord({"gamma": cfg.gamma, "beta": b}, theory=th))
    names = ["sigma_star", "snr_product", "snr_u", "snr_v", "spca_threshold", "spca_snr"]
    return recs + _fit_records(recs, "beta", names, source="theory")


def run_conjecture(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Gap between the computed shrinker and its closed-form candidate."""
    gammas = [float(g) for g in cfg.gamma_grid] or [0.5, 1.0, 2.0]
    betas = [float(b) for b in cfg.beta_grid] or [0.1, 0.5, 0.9]
    recs = []
    for g in gammas:
        for b in betas:
            try:
                p = ModelParams(g, b)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            edge = math.sqrt(bulk_edges(p)[1])
            grid = np.linspace(edge * 1.001, max(10.0, 3.0 * edge), cfg.y_points)
            recs.append(ExperimentRecord({"gamma": g, "beta": b, "classical": int(p.classical)},
                                         theory={"gap": conjecture_gap(p, grid)}))
    return recs


_RUNNERS = {
    "bulk_hist": run_bulk_hist,
    "outlier": run_outlier,
    "angles": run_angles,
    "finite_n": run_finite_n,
    "universality": run_universality,
    "shrinkage": run_shrinkage,
    "sketched_pca": run_sketched_pca,
    "snr_curves": run_snr_curves,
    "conjecture": run_conjecture,
}


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Dispatch on ``cfg.experiment``."""
    return _RUNNERS[cfg.experiment](cfg)

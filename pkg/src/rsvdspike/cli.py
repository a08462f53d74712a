"""Command-line interface.

Subcommands: ``predict``, ``simulate``, ``denoise`` and ``conjecture-check``.
Exit status is 0 on success, 1 on invalid input and 2 on I/O failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError, NoBracketError
from .harness.config import EXPERIMENTS, ExperimentConfig, load_config
from .harness.experiments import run_experiment
from .harness.io import emit, read_matrix, run_metadata, write_matrix
from .mp_law import ModelParams, bulk_edges
from .rsvd import full_svd_reference, rsvd
from .shrinker import DenoiseConfig, conjecture_gap, denoise, optimal_weight
from .sketch import SKETCH_KINDS, make_sketch
from .theory import detection_threshold, predict

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved here for I/O errors
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _params(args) -> ModelParams:
    return ModelParams(args.gamma, args.beta)


def _dump(obj, stream=None) -> None:
    json.dump(obj, stream or sys.stdout, indent=1)
    (stream or sys.stdout).write("\n")


def cmd_predict(args) -> int:
    p = _params(args)
    lo, hi = bulk_edges(p)
    out = {
        "gamma": p.gamma,
        "beta": p.beta,
        "classical": p.classical,
        "lambda_minus": lo,
        "lambda_plus": hi,
        "sigma_star": detection_threshold(p),
    }
    if args.sigma is not None:
        pred = predict(p, args.sigma)
        y = math.sqrt(pred.outlier_sq)
        out.update(
            sigma=args.sigma,
            detectable=pred.detectable,
            conjectured=pred.conjectured,
            Y=y,
            outlier_sq=pred.outlier_sq,
            U=pred.overlap_u,
            V=pred.overlap_v,
            UV=pred.overlap_product,
            shrinker=optimal_weight(p, y) if pred.detectable else 0.0,
        )
    _dump(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.experiment)
    else:
        cfg = ExperimentConfig(experiment=args.experiment)
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out:
        cfg.output_path = args.out
    cfg.validate()
    records = run_experiment(cfg)
    meta = run_metadata(cfg)
    if cfg.output_path:
        emit(records, cfg.output_path, args.format, meta)
    else:
        _dump({"metadata": meta, "records": [r.flat() for r in records]})
    return EXIT_OK


def cmd_denoise(args) -> int:
    p = _params(args)
    cfg = DenoiseConfig(delta=args.delta, rank_bound=args.rank_bound, rho=args.rho)
    y = read_matrix(args.input)
    n, m = y.shape
    d = int(round(p.beta * m))
    if d >= m:
        res = full_svd_reference(y, min(n, m))
    else:
        if d < 2:
            raise DomainError(f"beta * m gives sketch dimension {d}; at least 2 needed")
        res = rsvd(y, make_sketch(args.sketch, d, m, args.seed), args.q)
    result = denoise(res, p, cfg)
    fmt = "csv" if args.input.endswith(".csv") else "bin"
    suffix = ".csv" if fmt == "csv" else ".bin"
    write_matrix(args.out + ".u" + suffix, result.u, fmt)
    write_matrix(args.out + ".v" + suffix, result.v, fmt)
    report = {
        "n": n,
        "m": m,
        "d": int(min(d, n, m)),
        "gamma": p.gamma,
        "beta": p.beta,
        "rho_hat": result.rho_hat,
        "rank_used": result.rank_used,
        "weights": [float(w) for w in result.weights],
        "singular_values": [float(s) for s in res.sing_vals[: max(result.rank_used, 1)]],
    }
    with open(args.out + ".report.json", "w", encoding="utf-8") as fh:
        _dump(report, fh)
    _dump(report)
    return EXIT_OK


def cmd_conjecture_check(args) -> int:
    out = []
    worst = 0.0
    for g in args.gamma_grid:
        for b in args.beta_grid:
            p = ModelParams(g, b)
            edge = math.sqrt(bulk_edges(p)[1])
            grid = np.linspace(edge * 1.001, max(10.0, 3.0 * edge), args.points)
            gap = conjecture_gap(p, grid)
            worst = max(worst, gap)
            out.append({"gamma": g, "beta": b, "gap": gap})
    _dump({"max_gap": worst, "tolerance": args.tol, "passed": worst < args.tol, "points": out})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsvdspike", description="Randomized SVD on spiked matrices.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("predict", help="asymptotic predictions as JSON")
    pr.add_argument("--gamma", type=float, required=True)
    pr.add_argument("--beta", type=float, required=True)
    pr.add_argument("--sigma", type=float)
    pr.set_defaults(func=cmd_predict)

    si = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    si.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    si.add_argument("--config", help="JSON file mirroring the experiment configuration")
    si.add_argument("--out")
    si.add_argument("--format", choices=("csv", "json"), default="csv")
    si.add_argument("--threads", type=int)
    si.set_defaults(func=cmd_simulate)

    de = sub.add_parser("denoise", help="R-SVD followed by optimal shrinkage")
    de.add_argument("--input", required=True)
    de.add_argument("--gamma", type=float, required=True)
    de.add_argument("--beta", type=float, required=True)
    grp = de.add_mutually_exclusive_group(required=True)
    grp.add_argument("--delta", type=float)
    grp.add_argument("--rank-bound", type=int)
    de.add_argument("--rho", type=float)
    de.add_argument("--sketch", choices=SKETCH_KINDS, default="gaussian")
    de.add_argument("--seed", type=int, default=0)
    de.add_argument("--q", type=int, default=0)
    de.add_argument("--out", required=True, help="output prefix")
    de.set_defaults(func=cmd_denoise)

    cc = sub.add_parser("conjecture-check", help="closed-form shrinker agreement")
    cc.add_argument("--gamma-grid", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    cc.add_argument("--beta-grid", type=float, nargs="+", default=[0.1, 0.5, 0.9])
    cc.add_argument("--points", type=int, default=200)
    cc.add_argument("--tol", type=float, default=1e-6)
    cc.set_defaults(func=cmd_conjecture_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError, NoBracketError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

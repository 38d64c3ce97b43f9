"""Command-line entry point: verification, benchmarks, toys, certificates.

Exit codes: 0 success, 1 verification failure, 2 usage error.  All
artifacts are reproducible from (config, seed) alone; flags override
config-file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

# Keep timing honest before numpy spins up a thread pool.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402

from . import bench as B  # noqa: E402
from . import hat as H  # noqa: E402
from . import toytrain as T  # noqa: E402
from . import verify as V  # noqa: E402
from .core import Rng  # noqa: E402
from .query import FrequencyGrid, QueryExpansion  # noqa: E402

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2


@dataclasses.dataclass
class RunConfig:
    """JSON-configurable run settings; unknown keys are rejected."""

    seed: int = 0
    out: str = "out"
    tolerance_overrides: dict = dataclasses.field(default_factory=dict)
    bench_n: list = dataclasses.field(default_factory=lambda: [64])
    bench_d: list = dataclasses.field(default_factory=lambda: [64])
    bench_s: list = dataclasses.field(default_factory=lambda: [20, 40, 80])
    bench_j: list = dataclasses.field(default_factory=lambda: [8])
    bench_repeats: int = 5
    bench_svg: bool = False
    classify: dict = dataclasses.field(default_factory=dict)
    classify_epochs: int = 60
    regress: dict = dataclasses.field(default_factory=dict)
    regress_epochs: int = 300
    hat_epsilon: float = 0.05
    hat_gamma: float = 1e-4

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            setattr(cfg, key, value)
        return cfg


def _emit(payload: dict, as_json: bool):
    if as_json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def cmd_verify(cfg: RunConfig, as_json: bool) -> int:
    results = V.run_all(seed=cfg.seed, tolerance_overrides=cfg.tolerance_overrides)
    if as_json:
        print(json.dumps([dataclasses.asdict(r) for r in results], indent=2, default=str))
    else:
        for r in results:
            print(r.line())
    if all(r.passed for r in results):
        print("verify: all suites passed")
        return EXIT_OK
    for r in results:
        if not r.passed and r.failure is not None:
            print("failing case:", json.dumps(r.failure, default=str))
    return EXIT_VERIFY_FAILED


def cmd_bench(cfg: RunConfig, as_json: bool) -> int:
    rows = B.run_bench(cfg.bench_n, cfg.bench_d, cfg.bench_s, cfg.bench_j,
                       repeats=cfg.bench_repeats, seed=cfg.seed)
    artifacts = B.emit_report(rows, cfg.out, svg=cfg.bench_svg)
    best = max(r.speedup for r in rows)
    _emit({"rows": len(rows), "max_speedup": f"{best:.2f}", **artifacts}, as_json)
    return EXIT_OK


def cmd_train_classify(cfg: RunConfig, as_json: bool) -> int:
    ccfg = T.ClassifyConfig(**cfg.classify)
    metrics = T.train_classifier(ccfg, cfg.classify_epochs, Rng(cfg.seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "classify_metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    curve = "epoch,loss,holdout_accuracy\n" + "\n".join(
        f"{h['epoch']},{h['loss']:.6g},{h['holdout_accuracy']:.6g}" for h in metrics["history"]
    )
    (out / "classify_curve.csv").write_text(curve + "\n")
    _emit({"val_accuracy": metrics["val_accuracy"],
           "diagonal_mass": metrics["diagonal_mass"],
           "epochs_run": metrics["epochs_run"],
           "artifact": str(out / "classify_metrics.json")}, as_json)
    return EXIT_OK


def cmd_train_regress(cfg: RunConfig, as_json: bool) -> int:
    rcfg = T.RegressConfig(**cfg.regress)
    metrics = T.train_regressor(rcfg, cfg.regress_epochs, Rng(cfg.seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "regress_metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    _emit({"baseline_mse": metrics["baseline_mse"], "val_mse": metrics["val_mse"],
           "correlation": metrics["correlation"],
           "artifact": str(out / "regress_metrics.json")}, as_json)
    return EXIT_OK


def cmd_hat(cfg: RunConfig, as_json: bool) -> int:
    rng = np.random.default_rng(cfg.seed)
    a, b = 0.0, 2.0
    anchors = [0.2, 0.7, 1.1]
    keys = V._triangle_keys(rng, anchors, 2)
    grid = FrequencyGrid(np.array([1.0, 2.2, 3.4]))
    qexp = QueryExpansion(grid, rng.normal(size=(3, 2)) * 0.4,
                          rng.normal(size=(3, 2)) * 0.4, rng.normal(size=2) * 0.2)
    rep = H.hat_certificate(qexp, anchors, keys, cfg.hat_epsilon, a, b)
    rep_damped = H.hat_certificate(qexp, anchors, keys, cfg.hat_epsilon, a, b,
                                   bank_damping=cfg.hat_gamma)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"undamped": rep, "damped": rep_damped}
    (out / "hat_certificate.json").write_text(json.dumps(payload, indent=2) + "\n")
    _emit({"bounds_ok": rep["bounds_ok"], "damped_bounds_ok": rep_damped["bounds_ok"],
           "N_used": rep["N_used"], "artifact": str(out / "hat_certificate.json")}, as_json)
    return EXIT_OK if rep["bounds_ok"] and rep_damped["bounds_ok"] else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osciattn",
        description="Closed-form oscillator attention: verification, benchmarks, toys.",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--json", action="store_true", help="machine-readable summaries")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", help="run all property suites")
    pb = sub.add_parser("bench", help="closed-form vs solver timing sweep")
    pb.add_argument("--svg", action="store_true", help="also emit an SVG chart")
    sub.add_parser("train-classify", help="desk-scale classification toy")
    sub.add_parser("train-regress", help="desk-scale regression toy")
    sub.add_parser("hat", help="harmonic approximation certificate")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = RunConfig.load(args.config)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "svg", False):
        cfg.bench_svg = True

    handlers = {
        "verify": cmd_verify,
        "bench": cmd_bench,
        "train-classify": cmd_train_classify,
        "train-regress": cmd_train_regress,
        "hat": cmd_hat,
    }
    try:
        return handlers[args.command](cfg, args.json)
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Measured closed-form vs solver-based layer comparison.

Times the closed-form forward pass against the RK4-plus-quadrature twin on
identical token inputs, single-threaded, median of repeats on a monotonic
clock.  The predicted dominant-term cost ratio is J / (S d); the memory
proxy counts bytes of transient storage, which grows linearly in S for the
solver path and is S-independent for the closed form.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .core import ParameterError, Rng, normalize_times
from .layer import AllocMeter, LayerParams, layer_forward
from .oracles import numerical_attention_layer

MIN_TIMED_SECONDS = 0.01


@dataclass(frozen=True)
class BenchRow:
    N: int
    d: int
    S: int
    J: int
    t_closed_ms: float
    t_numeric_ms: float
    speedup: float
    predicted_ratio: float


def _instance(rng: Rng, N: int, d: int, J: int):
    n_heads = 2 if d % 2 == 0 and d >= 8 else 1
    params = LayerParams.random(rng, d, n_heads, n_modes=J, max_grid_freq=30.0)
    tokens = rng.normal_array((N, d))
    grid = normalize_times(np.sort(np.array([rng.uniform(0.0, 1.0) for _ in range(N)])))
    return tokens, grid, params


def _timed(fn, repeats: int, warmup: int) -> float:
    """Median wall-clock seconds; widens the inner loop for tiny workloads."""
    for _ in range(warmup):
        fn()
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        elapsed = time.perf_counter() - t0
        if elapsed >= MIN_TIMED_SECONDS or inner >= 64:
            break
        inner *= 2
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return float(np.median(samples))


def run_bench(sweep_n, sweep_d, sweep_s, sweep_j, repeats: int = 5,
              warmup: int = 2, seed: int = 0) -> list[BenchRow]:
    """Full sweep over the cartesian product of the four size lists."""
    if repeats < 3:
        raise ParameterError("repeats must be >= 3")
    if min(min(sweep_n), min(sweep_d), min(sweep_s), min(sweep_j)) < 1:
        raise ParameterError("sweep values must be >= 1")
    rows = []
    for N, d, J in product(sweep_n, sweep_d, sweep_j):
        rng = Rng(seed)
        tokens, grid, params = _instance(rng, N, d, J)
        t_closed = _timed(lambda: layer_forward(tokens, grid, params), repeats, warmup)
        for S in sweep_s:
            t_num = _timed(lambda: numerical_attention_layer(tokens, grid, params, S),
                           repeats, warmup)
            rows.append(BenchRow(
                N=N, d=d, S=S, J=J,
                t_closed_ms=t_closed * 1e3,
                t_numeric_ms=t_num * 1e3,
                speedup=t_num / t_closed,
                predicted_ratio=J / (S * d),
            ))
    return rows


def memory_proxy(N: int, d: int, S_values, J: int, seed: int = 0) -> dict:
    """Transient allocation bytes of both paths across solver resolutions."""
    rng = Rng(seed)
    tokens, grid, params = _instance(rng, N, d, J)
    closed, numeric = {}, {}
    for S in S_values:
        m1 = AllocMeter()
        layer_forward(tokens, grid, params, meter=m1)
        m2 = AllocMeter()
        numerical_attention_layer(tokens, grid, params, S, meter=m2)
        closed[int(S)] = m1.total_bytes
        numeric[int(S)] = m2.total_bytes
    return {"closed_bytes": closed, "numeric_bytes": numeric}


CSV_HEADER = "N,d,S,J,t_closed_ms,t_numeric_ms,speedup,predicted_ratio"


def emit_report(rows, outdir, svg: bool = False) -> dict:
    """Write bench.csv (exact schema, 6 significant digits), summary JSON,
    and optionally a minimal SVG line chart of speedup vs S."""
    if not rows:
        raise ParameterError("need at least one row")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.N},{r.d},{r.S},{r.J},{r.t_closed_ms:.6g},{r.t_numeric_ms:.6g},"
            f"{r.speedup:.6g},{r.predicted_ratio:.6g}"
        )
    csv_path = outdir / "bench.csv"
    csv_path.write_text("\n".join(lines) + "\n")

    summary = {
        "rows": [asdict(r) for r in rows],
        "max_speedup": max(r.speedup for r in rows),
        "min_speedup": min(r.speedup for r in rows),
    }
    json_path = outdir / "bench_summary.json"
    json_path.write_text(json.dumps(summary, indent=2) + "\n")
    artifacts = {"csv": str(csv_path), "json": str(json_path)}

    if svg:
        svg_path = outdir / "bench_speedup.svg"
        svg_path.write_text(_speedup_svg(rows))
        artifacts["svg"] = str(svg_path)
    return artifacts


def _speedup_svg(rows, width: int = 480, height: int = 320) -> str:
    """Hand-emitted polyline chart: speedup against solver steps."""
    pts = sorted((r.S, r.speedup) for r in rows)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    pad = 40
    x_lo, x_hi = min(xs), max(xs) or 1
    y_lo, y_hi = 0.0, max(ys) * 1.1 or 1.0

    def sx(x):
        span = (x_hi - x_lo) or 1.0
        return pad + (x - x_lo) / span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
    labels = "".join(
        f'<text x="{sx(x):.1f}" y="{height - pad + 14}" font-size="10" '
        f'text-anchor="middle">{x}</text>' for x in xs
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="100%" height="100%" fill="white"/>'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>'
        f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>'
        f"{labels}"
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="11" text-anchor="middle">solver steps S</text>'
        f'<text x="12" y="{pad - 10}" font-size="11">speedup</text>'
        "</svg>\n"
    )

"""Independent numerical ground truth for every closed-form path.

Fixed-step RK4 integration, Gauss-Legendre and composite Simpson
quadrature, central finite differences, and the solver-based baseline
attention layer.  Nothing here shares code with the closed forms it checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ParameterError, RangeError

_LEGGAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


@dataclass(frozen=True)
class OdeSystem:
    """dz/dt = rhs(t, z) with a deterministic, side-effect-free evaluator."""

    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]


def rk4_integrate(sys: OdeSystem, z0, t0: float, t1: float, steps: int,
                  return_path: bool = False):
    """Classic fixed-step fourth-order integration from t0 to t1.

    With ``return_path`` the full (steps + 1, dim) trajectory including both
    endpoints is returned instead of just the final state.
    """
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    if t1 < t0:
        raise RangeError("t1 must be >= t0")
    z = np.asarray(z0, dtype=float).copy()
    h = (t1 - t0) / steps
    path = np.empty((steps + 1, z.size)) if return_path else None
    if return_path:
        path[0] = z
    t = t0
    for i in range(steps):
        k1 = sys.rhs(t, z)
        k2 = sys.rhs(t + 0.5 * h, z + 0.5 * h * k1)
        k3 = sys.rhs(t + 0.5 * h, z + 0.5 * h * k2)
        k4 = sys.rhs(t + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * h
        if return_path:
            path[i + 1] = z
    return path if return_path else z


def quad_gauss(f: Callable, a: float, b: float, nodes: int = 256) -> float:
    """Gauss-Legendre quadrature; ``f`` is called once on the node array."""
    if not b > a:
        raise RangeError("need b > a")
    if nodes < 1:
        raise ParameterError("nodes must be >= 1")
    if nodes not in _LEGGAUSS_CACHE:
        _LEGGAUSS_CACHE[nodes] = np.polynomial.legendre.leggauss(nodes)
    x, w = _LEGGAUSS_CACHE[nodes]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return float(half * np.dot(w, f(mid + half * x)))


def quad_simpson(f: Callable, a: float, b: float, panels: int = 1024) -> float:
    """Composite Simpson rule on an even number of subintervals."""
    if not b > a:
        raise RangeError("need b > a")
    if panels < 1:
        raise ParameterError("panels must be >= 1")
    n = 2 * panels
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def finite_diff(f: Callable, x: float, h: float, order: int = 1) -> float:
    """Central-difference first or second derivative."""
    if h <= 0:
        raise ParameterError("h must be > 0")
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    raise ParameterError("order must be 1 or 2")


def numerical_attention_layer(tokens, grid, params, S: int, meter=None,
                              vector_field: str = "dense-linear"):
    """ContiFormer-shaped baseline: RK4 trajectories plus path quadrature.

    Same layer semantics as the closed-form forward pass, but key/value
    trajectories are advanced with S fixed RK4 steps per query-key pair and
    logits/value averages come from composite quadrature on the stored
    S-node path.  ``vector_field`` selects how the oscillator dynamics are
    evaluated: "dense-linear" multiplies by the dense (2 d_h)^2 system
    matrix (the cost model's dense linear map); "tanh" wraps the same map in
    a one-layer tanh net of width 2 d_h for architecture parity and is not
    expected to match the closed form.
    """
    from .layer import _baseline_forward

    if S < 2:
        raise ParameterError("S must be >= 2")
    return _baseline_forward(tokens, grid, params, S, meter, vector_field)

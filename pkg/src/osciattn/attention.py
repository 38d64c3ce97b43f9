"""Averaged attention logits assembled from the closed-form kernels.

The logit between a query expansion and an anchored key trajectory is the
window average of their inner product.  It splits into a homogeneous part,
a constant-offset part, and the driven part (steady state plus transient),
each reduced to exponential-trigonometric kernels per coordinate with that
coordinate's damping regime.  This module is the slow, readable reference
path; the batched engine in :mod:`osciattn.layer` must agree with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CausalityError,
    Critical,
    MaskError,
    Overdamped,
    Underdamped,
    WindowError,
)
from .driven import (
    CriticalTransient,
    KeyTrajectory,
    OverdampedTransient,
    UnderdampedTransient,
    _Channel,
)
from .kernels import kernel_C, kernel_I, kernel_S, kernel_tC, kernel_tS
from .query import QueryExpansion, RotatedQuery, mean_query, rotate_query


@dataclass(frozen=True)
class AttentionResult:
    """Masked logits, row-stochastic weights and aggregated outputs."""

    logits: np.ndarray
    weights: np.ndarray
    outputs: np.ndarray


def _hom_coeffs(ch: _Channel):
    """Coefficients of the homogeneous position on the regime basis."""
    g = float(ch.params.gamma)
    x0, p0 = ch.x0, ch.p0
    if isinstance(ch.regime, Underdamped):
        return x0, (g * x0 + p0) / ch.regime.omega_d
    if isinstance(ch.regime, Critical):
        return x0, g * x0 + p0
    sig = ch.regime.sigma
    u = ((sig + g) * x0 + p0) / (2.0 * sig)
    v = ((sig - g) * x0 - p0) / (2.0 * sig)
    return u, v


def _basis_window_integrals(ch: _Channel, delta: float, omegas: np.ndarray):
    """Integrals of the regime basis against cos/sin of each query mode.

    Returns (bc_cos, bc_sin, bs_cos, bs_sin): the first basis function and
    the second one, each integrated against cos(w s) and sin(w s).
    """
    g = float(ch.params.gamma)
    if isinstance(ch.regime, Underdamped):
        wd = ch.regime.omega_d
        return (
            kernel_I("cc", delta, g, wd, omegas),
            kernel_I("cs", delta, g, wd, omegas),
            kernel_I("sc", delta, g, wd, omegas),
            kernel_I("ss", delta, g, wd, omegas),
        )
    if isinstance(ch.regime, Critical):
        return (
            kernel_C(delta, g, omegas),
            kernel_S(delta, g, omegas),
            kernel_tC(delta, g, omegas),
            kernel_tS(delta, g, omegas),
        )
    sig = ch.regime.sigma
    return (
        kernel_C(delta, g - sig, omegas),
        kernel_S(delta, g - sig, omegas),
        kernel_C(delta, g + sig, omegas),
        kernel_S(delta, g + sig, omegas),
    )


def _transient_pair(ch: _Channel):
    tc = ch.transient
    if isinstance(tc, (UnderdampedTransient, CriticalTransient)):
        return tc.E[0], tc.F[0]
    return tc.U[0], tc.V[0]


def hom_logit(rq: RotatedQuery, k: KeyTrajectory, t_i: float, t_j: float) -> float:
    """Window-averaged inner product of the query with the homogeneous key."""
    if not t_j > t_i:
        raise WindowError("hom_logit needs t_j > t_i")
    delta = t_j - t_i
    total = 0.0
    for c, ch in enumerate(k.channels):
        ca, cb = _hom_coeffs(ch)
        bc_c, bc_s, bs_c, bs_s = _basis_window_integrals(ch, delta, rq.omegas)
        total += float(
            rq.a_tilde[:, c] @ (ca * bc_c + cb * bs_c)
            + rq.b_tilde[:, c] @ (ca * bc_s + cb * bs_s)
        )
    return total / delta


def driven_logit(rq: RotatedQuery, k: KeyTrajectory, delta: float) -> float:
    """Window-averaged query inner product with the driven (particular) key.

    Steady-state part: a double sum over query modes and drive modes of
    rotated-coefficient inner products times undamped kernels.  Transient
    part: the regime-matched damped kernels per coordinate.
    """
    if delta <= 0:
        raise WindowError("driven_logit needs delta > 0")
    if k.forcing.n_modes == 0:
        return 0.0
    freqs = k.forcing.freqs
    d = k.dim
    C_rot = np.column_stack([ch.steady.C_rot[:, 0] for ch in k.channels]).reshape(freqs.size, d)
    D_rot = np.column_stack([ch.steady.D_rot[:, 0] for ch in k.channels]).reshape(freqs.size, d)

    kcc = kernel_I("cc", delta, 0.0, rq.omegas[:, None], freqs[None, :])
    kcs = kernel_I("cs", delta, 0.0, rq.omegas[:, None], freqs[None, :])
    ksc = kernel_I("sc", delta, 0.0, rq.omegas[:, None], freqs[None, :])
    kss = kernel_I("ss", delta, 0.0, rq.omegas[:, None], freqs[None, :])
    steady = float(
        np.sum((rq.a_tilde @ C_rot.T) * kcc)
        + np.sum((rq.a_tilde @ D_rot.T) * kcs)
        + np.sum((rq.b_tilde @ C_rot.T) * ksc)
        + np.sum((rq.b_tilde @ D_rot.T) * kss)
    )

    transient = 0.0
    for c, ch in enumerate(k.channels):
        e1, e2 = _transient_pair(ch)
        bc_c, bc_s, bs_c, bs_s = _basis_window_integrals(ch, delta, rq.omegas)
        transient += float(
            rq.a_tilde[:, c] @ (e1 * bc_c + e2 * bs_c)
            + rq.b_tilde[:, c] @ (e1 * bc_s + e2 * bs_s)
        )
    return (steady + transient) / delta


def attention_logit(q: QueryExpansion, k: KeyTrajectory, t_j: float) -> float:
    """Complete averaged logit; the boundary t_j = anchor is pointwise."""
    if t_j < k.anchor:
        raise CausalityError(f"t_j = {t_j} precedes the key anchor {k.anchor}")
    if t_j == k.anchor:
        return float(q.evaluate(t_j) @ (k.x0 + k.offset))
    rq = rotate_query(q, k.anchor)
    total = hom_logit(rq, k, k.anchor, t_j) + driven_logit(rq, k, t_j - k.anchor)
    if np.any(k.offset != 0.0):
        total += float(mean_query(q, k.anchor, t_j) @ k.offset)
    return total


def softmax(x: np.ndarray) -> np.ndarray:
    """Plain stable softmax of a vector."""
    x = np.asarray(x, dtype=float)
    z = np.exp(x - x.max())
    return z / z.sum()


def masked_softmax(logit_row, d_k: int, mask) -> np.ndarray:
    """Scaled softmax over the valid entries; invalid entries get weight 0."""
    logits = np.asarray(logit_row, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape != mask.shape:
        raise MaskError("logits and mask must have the same shape")
    if not mask.any():
        raise MaskError("softmax needs at least one valid entry")
    scaled = logits / np.sqrt(float(d_k))
    shifted = np.exp(scaled - scaled[mask].max())
    shifted = np.where(mask, shifted, 0.0)
    return shifted / shifted.sum()


def mean_value(v: KeyTrajectory, t_i: float, t_j: float) -> np.ndarray:
    """Componentwise time average of a value trajectory over [t_i, t_j].

    At t_j = t_i this degenerates to the instantaneous value.
    """
    if t_j < t_i:
        raise CausalityError("t_j must be >= t_i")
    if t_j == t_i:
        return v.x0 + v.offset
    delta = t_j - t_i
    out = np.empty(v.dim)
    for c, ch in enumerate(v.channels):
        ha, hb = _hom_coeffs(ch)
        e1, e2 = _transient_pair(ch)
        bc_c, _, bs_c, _ = _basis_window_integrals(ch, delta, np.zeros(1))
        acc = (ha + e1) * bc_c[0] + (hb + e2) * bs_c[0]
        ss = ch.steady
        if ss.freqs.size:
            acc += float(
                ss.C_rot[:, 0] @ kernel_C(delta, 0.0, ss.freqs)
                + ss.D_rot[:, 0] @ kernel_S(delta, 0.0, ss.freqs)
            )
        out[c] = acc / delta + v.offset[c]
    return out

"""Driven damped oscillators: steady state, anchored transients, trajectories.

A key (or value) trajectory anchored at t_i is

    k(t) = hom(t) + steady(t) + transient(t) + offset,

where hom propagates the initial state with exp(A (t - t_i)), steady is the
per-mode sinusoidal response solved by Cramer's rule, and the transient is
the homogeneous piece that makes the particular part and its derivative
vanish exactly at the anchor ("clean anchoring").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CausalityError,
    Critical,
    OscParams,
    Overdamped,
    ParameterError,
    ResonanceSingularityError,
    ShapeError,
    Underdamped,
    classify_regime,
)
from .propagator import _sinc_like, _sinhc_like

RESONANCE_TOL = 1e-24


@dataclass(frozen=True)
class ForcingExpansion:
    """Sinusoidal drive in absolute time: sum_m P_m cos(w_m t) + Q_m sin(w_m t).

    Amplitudes are (M, d) arrays: one d-vector per drive mode.
    """

    freqs: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if P.shape != Q.shape or P.shape[0] != freqs.size:
            raise ShapeError("freqs, P, Q must agree on the mode axis")
        if freqs.size and (not np.all(np.isfinite(freqs)) or np.any(freqs <= 0)):
            raise ParameterError("drive frequencies must be positive and finite")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
            raise ParameterError("drive amplitudes must be finite")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def zero(cls, dim: int) -> "ForcingExpansion":
        return cls(np.empty(0), np.empty((0, dim)), np.empty((0, dim)))

    @classmethod
    def anchored(cls, freqs, cos_amps, sin_amps, anchor: float) -> "ForcingExpansion":
        """Build from amplitudes phased relative to the anchor.

        a cos(w (t - t_i)) + b sin(w (t - t_i)) rewritten in absolute time.
        """
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        a = np.atleast_2d(np.asarray(cos_amps, dtype=float))
        b = np.atleast_2d(np.asarray(sin_amps, dtype=float))
        phase = freqs * anchor
        c = np.cos(phase)[:, None]
        s = np.sin(phase)[:, None]
        return cls(freqs, a * c - b * s, a * s + b * c)

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    @property
    def n_modes(self) -> int:
        return self.freqs.size

    def evaluate(self, t) -> np.ndarray:
        """Drive value at time(s) t; shape (d,) or (len(t), d)."""
        t = np.asarray(t, dtype=float)
        if self.n_modes == 0:
            return np.zeros(t.shape + (self.dim,))
        phases = np.multiply.outer(t, self.freqs)
        return np.cos(phases) @ self.P + np.sin(phases) @ self.Q


@dataclass(frozen=True)
class SteadyState:
    """Per-mode sinusoidal response coefficients of one oscillator channel.

    ``C`` and ``D`` are absolute-time coefficients; ``C_rot`` and ``D_rot``
    (filled by :func:`rotate_steady_state`) express the same response in the
    anchor frame s = t - anchor.
    """

    freqs: np.ndarray
    C: np.ndarray
    D: np.ndarray
    anchor: float | None = None
    C_rot: np.ndarray | None = None
    D_rot: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def value_at_anchor(self) -> np.ndarray:
        self._need_rotation()
        return self.C_rot.sum(axis=0) if self.freqs.size else np.zeros(self.dim)

    def derivative_at_anchor(self) -> np.ndarray:
        self._need_rotation()
        if not self.freqs.size:
            return np.zeros(self.dim)
        return (self.freqs[:, None] * self.D_rot).sum(axis=0)

    def _need_rotation(self):
        if self.anchor is None:
            raise ParameterError("steady state has not been rotated to an anchor")


@dataclass(frozen=True)
class UnderdampedTransient:
    E: np.ndarray
    F: np.ndarray


@dataclass(frozen=True)
class CriticalTransient:
    E: np.ndarray
    F: np.ndarray


@dataclass(frozen=True)
class OverdampedTransient:
    U: np.ndarray
    V: np.ndarray


TransientCoeffs = UnderdampedTransient | CriticalTransient | OverdampedTransient


def steady_state(p: OscParams, f: ForcingExpansion) -> SteadyState:
    """Solve the per-mode 2x2 response system by Cramer's rule.

    The denominator (omega0^2 - w^2)^2 + (2 gamma w)^2 vanishes only at an
    undamped resonance, which is rejected; callers must perturb gamma or the
    drive frequency.
    """
    w0sq = float(p.omega0) ** 2
    g = float(p.gamma)
    if f.n_modes == 0:
        return SteadyState(f.freqs, np.empty((0, f.dim)), np.empty((0, f.dim)))
    detune = w0sq - f.freqs**2
    damp = 2.0 * g * f.freqs
    den = detune**2 + damp**2
    scale = np.maximum(np.maximum(f.freqs, float(p.omega0)), 1.0) ** 4
    if np.any(den <= RESONANCE_TOL * scale):
        raise ResonanceSingularityError(
            "undamped drive at the natural frequency has no steady state"
        )
    C = (f.P * detune[:, None] - f.Q * damp[:, None]) / den[:, None]
    D = (f.Q * detune[:, None] + f.P * damp[:, None]) / den[:, None]
    return SteadyState(f.freqs, C, D)


def rotate_steady_state(ss: SteadyState, anchor: float) -> SteadyState:
    """Re-express the steady response in the anchor frame s = t - anchor."""
    if ss.freqs.size == 0:
        return SteadyState(ss.freqs, ss.C, ss.D, float(anchor), ss.C.copy(), ss.D.copy())
    phase = ss.freqs * anchor
    c = np.cos(phase)[:, None]
    s = np.sin(phase)[:, None]
    return SteadyState(
        ss.freqs,
        ss.C,
        ss.D,
        float(anchor),
        C_rot=ss.C * c + ss.D * s,
        D_rot=-ss.C * s + ss.D * c,
    )


def transient_coeffs(p: OscParams, ss: SteadyState, anchor: float) -> TransientCoeffs:
    """Coefficients of the decaying piece that zeroes the particular part
    and its derivative at the anchor, matched to the damping regime."""
    if ss.anchor is None or ss.anchor != float(anchor):
        ss = rotate_steady_state(ss, anchor)
    x0 = ss.value_at_anchor()
    v0 = ss.derivative_at_anchor()
    g = float(p.gamma)
    regime = classify_regime(p)
    if isinstance(regime, Underdamped):
        E = -x0
        F = (g * E - v0) / regime.omega_d
        return UnderdampedTransient(E, F)
    if isinstance(regime, Critical):
        E = -x0
        return CriticalTransient(E, g * E - v0)
    sig = regime.sigma
    U = (-(g + sig) * x0 - v0) / (2.0 * sig)
    V = ((g - sig) * x0 + v0) / (2.0 * sig)
    return OverdampedTransient(U, V)


@dataclass(frozen=True)
class _Channel:
    """Per-coordinate solution pieces, precomputed once per trajectory."""

    params: OscParams
    regime: object
    x0: float
    p0: float
    steady: SteadyState
    transient: TransientCoeffs


@dataclass(frozen=True)
class KeyTrajectory:
    """Anchored oscillator trajectory of a d-vector key or value.

    ``params`` may be a single OscParams shared by all coordinates or a
    sequence of length d.  ``z0`` holds the homogeneous initial data
    (positions, velocities) at the anchor; the drive enters through
    ``forcing`` and the constant ``offset`` is added verbatim.
    """

    params: tuple
    x0: np.ndarray
    p0: np.ndarray
    forcing: ForcingExpansion
    offset: np.ndarray
    anchor: float
    channels: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        params = self.params
        if isinstance(params, OscParams):
            params = (params,) * x0.size
        params = tuple(params)
        d = x0.size
        if not (p0.size == d and offset.size == d and len(params) == d):
            raise ShapeError("params, z0 and offset must share the coordinate count")
        if self.forcing.n_modes and self.forcing.dim != d:
            raise ShapeError("forcing dimension must match the trajectory")
        channels = []
        for c in range(d):
            ss_c = steady_state(params[c], _slice_forcing(self.forcing, c))
            ss_c = rotate_steady_state(ss_c, self.anchor)
            tc = transient_coeffs(params[c], ss_c, self.anchor)
            channels.append(
                _Channel(params[c], classify_regime(params[c]), x0[c], p0[c], ss_c, tc)
            )
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "channels", tuple(channels))

    @property
    def dim(self) -> int:
        return self.x0.size


def _slice_forcing(f: ForcingExpansion, c: int) -> ForcingExpansion:
    if f.n_modes == 0:
        return ForcingExpansion.zero(1)
    return ForcingExpansion(f.freqs, f.P[:, c : c + 1], f.Q[:, c : c + 1])


def _hom_xy(ch: _Channel, s):
    """Homogeneous position and velocity at offsets s >= 0 (vectorized)."""
    g = float(ch.params.gamma)
    w2 = float(ch.params.omega0) ** 2
    x0, p0 = ch.x0, ch.p0
    if isinstance(ch.regime, Underdamped):
        wd = ch.regime.omega_d
        decay = np.exp(-g * s)
        c = np.cos(wd * s)
        so = _vec_sinc(wd, s)
        x = decay * ((c + g * so) * x0 + so * p0)
        v = decay * (-w2 * so * x0 + (c - g * so) * p0)
        return x, v
    if isinstance(ch.regime, Critical):
        decay = np.exp(-g * s)
        x = decay * ((1.0 + g * s) * x0 + s * p0)
        v = decay * (-g * g * s * x0 + (1.0 - g * s) * p0)
        return x, v
    sig = ch.regime.sigma
    ea = np.exp(-(g - sig) * s)
    eb = np.exp(-(g + sig) * s)
    chh = 0.5 * (ea + eb)
    sh = _vec_sinhc_paired(g, sig, s, ea, eb)
    x = (chh + g * sh) * x0 + sh * p0
    v = -w2 * sh * x0 + (chh - g * sh) * p0
    return x, v


def _vec_sinc(w: float, s):
    u = w * s
    small = np.abs(u) < 1e-4
    if np.ndim(u) == 0:
        return _sinc_like(w, float(s))
    out = np.where(small, s * (1.0 - u * u / 6.0), np.sin(u) / w)
    return out


def _vec_sinhc_paired(g, sig, s, ea, eb):
    u = sig * s
    small = np.abs(u) < 1e-4
    series = np.exp(-g * s) * s * (1.0 + u * u / 6.0)
    if np.ndim(u) == 0:
        return float(series) if small else 0.5 * (ea - eb) / sig
    return np.where(small, series, 0.5 * (ea - eb) / sig)


def _steady_xy(ch: _Channel, s):
    ss = ch.steady
    if ss.freqs.size == 0:
        zero = np.zeros_like(np.asarray(s, dtype=float))
        return zero, zero
    phase = np.multiply.outer(np.asarray(s, dtype=float), ss.freqs)
    cr = ss.C_rot[:, 0]
    dr = ss.D_rot[:, 0]
    x = np.cos(phase) @ cr + np.sin(phase) @ dr
    v = (-np.sin(phase) * ss.freqs) @ cr + (np.cos(phase) * ss.freqs) @ dr
    return x, v


def _transient_xy(ch: _Channel, s):
    g = float(ch.params.gamma)
    tc = ch.transient
    if isinstance(tc, UnderdampedTransient):
        wd = ch.regime.omega_d
        decay = np.exp(-g * s)
        c, si = np.cos(wd * s), np.sin(wd * s)
        E, F = tc.E[0], tc.F[0]
        x = decay * (E * c + F * si)
        v = decay * ((-g * E + F * wd) * c + (-g * F - E * wd) * si)
        return x, v
    if isinstance(tc, CriticalTransient):
        decay = np.exp(-g * s)
        E, F = tc.E[0], tc.F[0]
        x = decay * (E + F * s)
        v = decay * (F - g * (E + F * s))
        return x, v
    sig = ch.regime.sigma
    U, V = tc.U[0], tc.V[0]
    ea = np.exp(-(g - sig) * s)
    eb = np.exp(-(g + sig) * s)
    x = U * ea + V * eb
    v = -(g - sig) * U * ea - (g + sig) * V * eb
    return x, v


def eval_trajectory(k: KeyTrajectory, t, with_derivative: bool = False,
                    extrapolate: bool = False):
    """Trajectory value (and optionally velocity) at time(s) t >= anchor.

    ``extrapolate`` lifts the causality guard and evaluates the closed
    forms at raw offsets; verification code uses it for centered finite
    differences at the anchor.
    """
    t_arr = np.asarray(t, dtype=float)
    if extrapolate:
        s = t_arr - k.anchor
    else:
        if np.any(t_arr < k.anchor - 1e-12):
            raise CausalityError(f"t = {t} precedes the anchor {k.anchor}")
        s = np.maximum(t_arr - k.anchor, 0.0)
    xs, vs = [], []
    for c, ch in enumerate(k.channels):
        hx, hv = _hom_xy(ch, s)
        sx, sv = _steady_xy(ch, s)
        tx, tv = _transient_xy(ch, s)
        xs.append(hx + sx + tx + k.offset[c])
        vs.append(hv + sv + tv)
    x = np.stack(xs, axis=-1)
    if with_derivative:
        return x, np.stack(vs, axis=-1)
    return x

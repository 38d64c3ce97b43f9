"""Closed-form homogeneous flow exp(A t) for one oscillator channel.

A = [[0, 1], [-omega0^2, -2 gamma]] is the first-order form of
x'' + 2 gamma x' + omega0^2 x = 0.  The three damping regimes get their
exact closed forms; a generic scaling-and-squaring matrix exponential acts
as the independent cross-check and never runs in production paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    SERIES_SWITCH,
    Critical,
    OscParams,
    Overdamped,
    ParameterError,
    State2,
    Underdamped,
    classify_regime,
)

# Beyond this value of sigma*t the naive cosh/sinh evaluation overflows;
# the paired-exponential form below is immune, so only kept for reference.
OVERFLOW_GUARD = 20.0


@dataclass(frozen=True)
class Propagator:
    """Entries of exp(A t); det = exp(-2 gamma t) since trace(A) = -2 gamma."""

    m11: float
    m12: float
    m21: float
    m22: float

    def apply(self, z: State2) -> State2:
        return State2(
            x=self.m11 * z.x + self.m12 * z.p,
            p=self.m21 * z.x + self.m22 * z.p,
        )

    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21


def _sinc_like(x: float, t: float) -> float:
    """sin(x t)/x, series-evaluated when |x t| is small enough to cancel."""
    u = x * t
    if abs(u) < SERIES_SWITCH:
        u2 = u * u
        return t * (1.0 - u2 / 6.0 + u2 * u2 / 120.0)
    return np.sin(u) / x


def _sinhc_like(x: float, t: float) -> float:
    """sinh(x t)/x with the same small-argument series switch."""
    u = x * t
    if abs(u) < SERIES_SWITCH:
        u2 = u * u
        return t * (1.0 + u2 / 6.0 + u2 * u2 / 120.0)
    return np.sinh(u) / x


def exp_At(p: OscParams, t: float) -> Propagator:
    """Exact homogeneous flow over a duration t >= 0."""
    if t < 0:
        raise ParameterError(f"duration must be >= 0, got {t}")
    g = float(p.gamma)
    w2 = float(p.omega0) ** 2
    regime = classify_regime(p)
    if isinstance(regime, Underdamped):
        wd = regime.omega_d
        decay = np.exp(-g * t)
        c = np.cos(wd * t)
        s_over = _sinc_like(wd, t)
        return Propagator(
            m11=decay * (c + g * s_over),
            m12=decay * s_over,
            m21=-decay * w2 * s_over,
            m22=decay * (c - g * s_over),
        )
    if isinstance(regime, Critical):
        decay = np.exp(-g * t)
        return Propagator(
            m11=decay * (1.0 + g * t),
            m12=decay * t,
            m21=-decay * g * g * t,
            m22=decay * (1.0 - g * t),
        )
    sig = regime.sigma
    # Paired exponentials exp(-(gamma -/+ sigma) t) stay finite where a bare
    # cosh(sigma t) would overflow for large sigma t.
    ea = np.exp(-(g - sig) * t)
    eb = np.exp(-(g + sig) * t)
    ch = 0.5 * (ea + eb)
    if abs(sig * t) < SERIES_SWITCH:
        u2 = (sig * t) ** 2
        sh_over = np.exp(-g * t) * t * (1.0 + u2 / 6.0 + u2 * u2 / 120.0)
    else:
        sh_over = 0.5 * (ea - eb) / sig
    return Propagator(
        m11=ch + g * sh_over,
        m12=sh_over,
        m21=-w2 * sh_over,
        m22=ch - g * sh_over,
    )


def expm_oracle(a11: float, a12: float, a21: float, a22: float, t: float) -> Propagator:
    """Generic 2x2 matrix exponential exp(M t) by scaling and squaring.

    Independent of the regime formulas; used only in tests.  Accurate to
    about 1e-12 relative for ||M t|| <= 50.
    """
    m = np.array([[a11, a12], [a21, a22]], dtype=float) * t
    if not np.all(np.isfinite(m)):
        raise ParameterError("matrix entries must be finite")
    norm = np.max(np.sum(np.abs(m), axis=1))
    if norm > 1e8:
        raise OverflowError(f"||M t|| = {norm:.3g} too large for the oracle")
    squarings = max(0, int(np.ceil(np.log2(norm / 0.25))) if norm > 0.25 else 0)
    ms = m / (2.0**squarings)
    term = np.eye(2)
    result = np.eye(2)
    for k in range(1, 40):
        term = term @ ms / k
        result = result + term
        if np.max(np.abs(term)) < 1e-20 * max(1.0, np.max(np.abs(result))):
            break
    for _ in range(squarings):
        result = result @ result
    return Propagator(result[0, 0], result[0, 1], result[1, 0], result[1, 1])


def propagate(z0: State2, p: OscParams, dt: float) -> State2:
    """Advance a free oscillator state by dt."""
    return exp_At(p, dt).apply(z0)

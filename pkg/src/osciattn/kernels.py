"""Closed forms of the exponential-trigonometric window integrals.

Everything the averaged attention logit needs reduces to

    C(delta, gamma, lam)  = integral_0^delta exp(-gamma s) cos(lam s) ds
    S(delta, gamma, lam)  = integral_0^delta exp(-gamma s) sin(lam s) ds
    tC, tS                = the same integrals with an extra factor s
    I_cc .. I_cs          = products of two trig factors, reduced to C and S

All functions broadcast over numpy arrays and accept tape variables.  The
degenerate corner gamma -> 0, lam -> 0 (where the rational closed forms turn
into 0/0) is handled by an eight-term power series selected elementwise; the
switch point keeps both branches accurate to ~1e-12 relative.
"""

from __future__ import annotations

import math

import numpy as np

from . import _ops as om
from .core import ParameterError

# Below |z| * delta of this size the rational closed forms are evaluated by
# power series instead (z = -gamma + i*lam).
KERNEL_SERIES_SWITCH = 1e-2

_N_SERIES = 8
_INV_FACT_SHIFT1 = [1.0 / math.factorial(n + 1) for n in range(_N_SERIES + 1)]
_INV_N2_FACT = [1.0 / ((n + 2) * math.factorial(n)) for n in range(_N_SERIES + 1)]

VALID_I_KINDS = ("cc", "ss", "sc", "cs")


def _series_pair(delta, gamma, lam, weights):
    """Sum_n Re/Im[(-gamma + i lam)^n] * delta^(n+1) * weights[n]."""
    re, im = 1.0, 0.0
    dpow = delta
    acc_re = re * dpow * weights[0]
    acc_im = 0.0
    for n in range(1, _N_SERIES + 1):
        re, im = -gamma * re - lam * im, lam * re - gamma * im
        dpow = dpow * delta
        acc_re = acc_re + re * dpow * weights[n]
        acc_im = acc_im + im * dpow * weights[n]
    return acc_re, acc_im


def _small_mask(delta, gamma, lam) -> np.ndarray:
    d = om.value_of(delta)
    g = om.value_of(gamma)
    l = om.value_of(lam)
    return np.sqrt(g * g + l * l) * np.abs(d) < KERNEL_SERIES_SWITCH


def _check_args(delta, gamma):
    d = om.value_of(delta)
    g = om.value_of(gamma)
    if np.any(d <= 0):
        raise ParameterError("window length delta must be > 0")
    if np.any(g < 0):
        raise ParameterError("decay gamma must be >= 0")


def _cs_raw(delta, gamma, lam):
    """(C, S) without argument validation; shared by the public kernels."""
    small = _small_mask(delta, gamma, lam)
    den = gamma * gamma + lam * lam
    den = om.where(small, np.ones_like(om.value_of(den)), den)
    decay = om.exp(-gamma * delta)
    c = om.cos(lam * delta)
    s = om.sin(lam * delta)
    c_closed = (decay * (-gamma * c + lam * s) + gamma) / den
    s_closed = (decay * (-gamma * s - lam * c) + lam) / den
    c_series, s_series = _series_pair(delta, gamma, lam, _INV_FACT_SHIFT1)
    return (
        om.where(small, c_series, c_closed),
        om.where(small, s_series, s_closed),
    )


def kernel_C(delta, gamma, lam):
    """Windowed cosine transform of an exponential decay."""
    _check_args(delta, gamma)
    return _cs_raw(delta, gamma, lam)[0]


def kernel_S(delta, gamma, lam):
    """Windowed sine transform of an exponential decay."""
    _check_args(delta, gamma)
    return _cs_raw(delta, gamma, lam)[1]


def kernel_tC(delta, gamma, lam):
    """Like :func:`kernel_C` with an extra factor s under the integral.

    Equals minus the gamma-derivative of ``kernel_C``, implemented
    analytically because the critically damped logit path needs it.
    """
    _check_args(delta, gamma)
    small = _small_mask(delta, gamma, lam)
    den = gamma * gamma + lam * lam
    den = om.where(small, np.ones_like(om.value_of(den)), den)
    decay = om.exp(-gamma * delta)
    c = om.cos(lam * delta)
    s = om.sin(lam * delta)
    num = decay * (-gamma * c + lam * s) + gamma
    closed = (2.0 * gamma * num + den * (delta * decay * (-gamma * c + lam * s) + decay * c - 1.0)) / (den * den)
    series = delta * _series_pair(delta, gamma, lam, _INV_N2_FACT)[0]
    return om.where(small, series, closed)


def kernel_tS(delta, gamma, lam):
    """Like :func:`kernel_S` with an extra factor s under the integral."""
    _check_args(delta, gamma)
    small = _small_mask(delta, gamma, lam)
    den = gamma * gamma + lam * lam
    den = om.where(small, np.ones_like(om.value_of(den)), den)
    decay = om.exp(-gamma * delta)
    c = om.cos(lam * delta)
    s = om.sin(lam * delta)
    num = decay * (-gamma * s - lam * c) + lam
    closed = (2.0 * gamma * num + den * (delta * decay * (-gamma * s - lam * c) + decay * s)) / (den * den)
    series = delta * _series_pair(delta, gamma, lam, _INV_N2_FACT)[1]
    return om.where(small, series, closed)


def kernel_I(kind: str, delta, gamma, lam1, lam2):
    """Damped integral of a product of two trig factors.

    ``kind`` picks the factor pair: "cc" = cos*cos, "ss" = sin*sin,
    "sc" = sin(lam1)*cos(lam2), "cs" = cos(lam1)*sin(lam2).  Reduction to
    sum/difference frequencies keeps a single degeneracy handler: the
    equal-frequency, zero-damping limits fall out of the series branch of
    ``kernel_C`` / ``kernel_S``.
    """
    if kind not in VALID_I_KINDS:
        raise ParameterError(f"unknown kernel kind {kind!r}")
    _check_args(delta, gamma)
    diff = lam1 - lam2
    tot = lam1 + lam2
    if kind == "cc":
        return 0.5 * (_cs_raw(delta, gamma, diff)[0] + _cs_raw(delta, gamma, tot)[0])
    if kind == "ss":
        return 0.5 * (_cs_raw(delta, gamma, diff)[0] - _cs_raw(delta, gamma, tot)[0])
    if kind == "sc":
        return 0.5 * (_cs_raw(delta, gamma, tot)[1] + _cs_raw(delta, gamma, diff)[1])
    return 0.5 * (_cs_raw(delta, gamma, tot)[1] - _cs_raw(delta, gamma, diff)[1])


def particular_I1_I2(delta: float, gamma: float, omega_d: float, omega_j: float):
    """Driven-response integrals via the sum/difference frequency route.

    Returns (I1, I2) with
        I1 = integral exp(-gamma s) sin(omega_d s) cos(omega_j s) ds
        I2 = integral exp(-gamma s) sin(omega_d s) sin(omega_j s) ds
    evaluated over [0, delta] term by term at lam = omega_d +/- omega_j.
    Kept as a separate literal evaluation path so the generic kernels can be
    cross-validated against it.  Note the difference-frequency cosine term
    enters I2 with a plus and the sum-frequency one with a minus.
    """
    _check_args(delta, gamma)

    def cs_term(lam):
        den = gamma * gamma + lam * lam
        if np.sqrt(den) * delta < KERNEL_SERIES_SWITCH:
            return _series_pair(delta, gamma, lam, _INV_FACT_SHIFT1)
        e = np.exp(-gamma * delta)
        sl = np.sin(lam * delta)
        cl = np.cos(lam * delta)
        c_val = (-gamma * e * cl + lam * e * sl + gamma) / den
        s_val = (-gamma * e * sl - lam * (e * cl - 1.0)) / den
        return c_val, s_val

    c_plus, s_plus = cs_term(omega_d + omega_j)
    c_minus, s_minus = cs_term(omega_d - omega_j)
    i1 = 0.5 * (s_plus + s_minus)
    i2 = 0.5 * (c_minus - c_plus)
    return i1, i2

"""Harmonic approximation machinery and the end-to-end certificate.

Any continuous key trajectory on a compact interval can be approximated
uniformly by a trigonometric polynomial on the fixed half-range grid
w_n = n pi / L (Fejér means of the even periodic extension), phase-shifted
to the key's anchor, and realized exactly as the summed positions of a bank
of undamped oscillators.  The certificate measures the resulting key,
logit, and softmax-weight errors and checks them against the theoretical
bounds, including a rerun with small uniform damping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .attention import softmax
from .core import CapacityError, ParameterError, ShapeError
from .oracles import quad_gauss
from .query import QueryExpansion

FEJER_SAMPLES = 8192
N_LADDER = (8, 16, 32, 64, 128, 256)


def fejer_kernel_eval(N: int, theta: float) -> float:
    """Nonnegative Fejér kernel of order N via the squared-sinc form."""
    if N < 0:
        raise ParameterError("order must be >= 0")
    half = 0.5 * theta
    s = np.sin(half)
    if abs(s) < 1e-12:
        return float(N + 1)
    return float(np.sin((N + 1) * half) ** 2 / ((N + 1) * s * s))


@dataclass(frozen=True)
class TrigPolynomial:
    """c0 + sum_n c_n cos(w_n (t - base)) + s_n sin(w_n (t - base)).

    Frequencies live on the fixed grid w_n = n pi / length.
    """

    base: float
    length: float
    c0: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        if self.length <= 0:
            raise ParameterError("length must be positive")
        if self.cos_coeffs.shape != self.sin_coeffs.shape:
            raise ShapeError("cosine and sine coefficient shapes differ")

    @property
    def degree(self) -> int:
        return self.cos_coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.c0.size

    def frequencies(self) -> np.ndarray:
        return np.arange(1, self.degree + 1) * np.pi / self.length

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.degree == 0:
            return np.broadcast_to(self.c0, t.shape + (self.dim,)).copy()
        phases = np.multiply.outer(t - self.base, self.frequencies())
        return self.c0 + np.cos(phases) @ self.cos_coeffs + np.sin(phases) @ self.sin_coeffs


def fejer_approx(f: Callable, a: float, b: float, N: int,
                 n_samples: int = FEJER_SAMPLES) -> TrigPolynomial:
    """Cesàro-weighted cosine expansion of the even extension of f.

    The even 2L-periodic extension of a continuous f on [a, b] has a pure
    cosine series; composite trapezoid on ``n_samples`` points gives its
    coefficients, and the weights (1 - k/(N+1)) turn the partial sum into
    the uniformly convergent Fejér mean.
    """
    if N < 0:
        raise ParameterError("order must be >= 0")
    if n_samples < 4096:
        raise ParameterError("need at least 4096 sample points")
    L = b - a
    if L <= 0:
        raise ParameterError("need b > a")
    s = np.linspace(0.0, L, n_samples)
    vals = np.atleast_2d(np.asarray([np.atleast_1d(f(a + si)) for si in s], dtype=float))
    w = np.full(n_samples, L / (n_samples - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    c0 = (w @ vals) / L
    if N == 0:
        d = vals.shape[1]
        return TrigPolynomial(a, L, c0, np.zeros((0, d)), np.zeros((0, d)))
    modes = np.arange(1, N + 1)
    basis = np.cos(np.pi / L * np.outer(s, modes))
    raw = (2.0 / L) * (basis * w[:, None]).T @ vals
    cesaro = (1.0 - modes / (N + 1.0))[:, None]
    return TrigPolynomial(a, L, c0, raw * cesaro, np.zeros_like(raw))


def phase_shift(p: TrigPolynomial, new_base: float) -> TrigPolynomial:
    """Rewrite the polynomial relative to a new base point (same values)."""
    if p.degree == 0:
        return TrigPolynomial(new_base, p.length, p.c0, p.cos_coeffs, p.sin_coeffs)
    phi = p.frequencies() * (new_base - p.base)
    c = np.cos(phi)[:, None]
    s = np.sin(phi)[:, None]
    return TrigPolynomial(
        new_base,
        p.length,
        p.c0,
        p.cos_coeffs * c + p.sin_coeffs * s,
        -p.cos_coeffs * s + p.sin_coeffs * c,
    )


@dataclass(frozen=True)
class OscillatorBank:
    """Initial states of the shared-grid modes realizing one key.

    Mode n has natural frequency n pi / length (mode 0 is the constant
    carrier and always has zero initial velocity) and damping gammas[n].
    """

    length: float
    anchor: float
    pos0: np.ndarray   # (M + 1, d)
    vel0: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        if np.any(self.vel0[0] != 0.0):
            raise ParameterError("zero mode must carry no initial velocity")
        if np.any(self.gammas < 0):
            raise ParameterError("mode damping must be >= 0")

    @property
    def n_modes(self) -> int:
        return self.pos0.shape[0]

    def with_damping(self, gamma: float) -> "OscillatorBank":
        return OscillatorBank(self.length, self.anchor, self.pos0, self.vel0,
                              np.full(self.n_modes, float(gamma)))


def realize_bank(p: TrigPolynomial, M: int) -> OscillatorBank:
    """Choose undamped initial states so the summed positions equal p.

    Mode n >= 1 takes position c_n and velocity w_n s_n; the zero mode
    carries the constant.  Requires M >= degree(p).
    """
    if M < p.degree:
        raise CapacityError(f"need M >= {p.degree} modes, got {M}")
    d = p.dim
    pos0 = np.zeros((M + 1, d))
    vel0 = np.zeros((M + 1, d))
    pos0[0] = p.c0
    if p.degree:
        pos0[1 : p.degree + 1] = p.cos_coeffs
        vel0[1 : p.degree + 1] = p.frequencies()[:, None] * p.sin_coeffs
    return OscillatorBank(p.length, p.base, pos0, vel0, np.zeros(M + 1))


def bank_readout(bank: OscillatorBank, t) -> np.ndarray:
    """Summed mode positions at time(s) t >= anchor."""
    t = np.asarray(t, dtype=float)
    s = t - bank.anchor
    if np.any(s < -1e-12):
        raise ParameterError("readout before the anchor")
    out = np.broadcast_to(bank.pos0[0], s.shape + (bank.pos0.shape[1],)).copy()
    for n in range(1, bank.n_modes):
        w = n * np.pi / bank.length
        g = bank.gammas[n]
        if g >= w:
            raise ParameterError("bank damping must stay below the mode frequency")
        wd = np.sqrt(w * w - g * g)
        decay = np.exp(-g * s)
        c = np.cos(wd * s)
        sn = np.sin(wd * s) / wd
        x = decay[..., None] * (
            (c + g * sn)[..., None] * bank.pos0[n] + sn[..., None] * bank.vel0[n]
        )
        out = out + x
    return out


def damping_perturbation(bank: OscillatorBank, gamma_max: float, t_end: float,
                         n_grid: int = 512) -> dict:
    """Sup readout difference between the damped and undamped banks."""
    if gamma_max < 0:
        raise ParameterError("gamma_max must be >= 0")
    ts = np.linspace(bank.anchor, t_end, n_grid)
    base = bank_readout(bank.with_damping(0.0), ts)
    pert = bank_readout(bank.with_damping(gamma_max), ts)
    sup = float(np.max(np.linalg.norm(pert - base, axis=-1))) if n_grid else 0.0
    return {"gamma_max": float(gamma_max), "sup_difference": sup}


def _sup_query_norm(q: QueryExpansion, a: float, b: float, n_grid: int = 2048) -> float:
    ts = np.linspace(a, b, n_grid)
    return float(np.max(np.linalg.norm(q.evaluate(ts), axis=-1)))


def _alpha(q: QueryExpansion, key: Callable, t_i: float, t_j: float) -> float:
    if t_j == t_i:
        return float(q.evaluate(t_i) @ np.atleast_1d(key(t_i)))
    f = lambda ts: np.einsum("td,td->t", q.evaluate(ts), _eval_many(key, ts))
    return quad_gauss(f, t_i, t_j, 256) / (t_j - t_i)


def _eval_many(key: Callable, ts: np.ndarray) -> np.ndarray:
    return np.asarray([np.atleast_1d(key(t)) for t in ts], dtype=float)


def hat_certificate(q: QueryExpansion, anchors: Sequence[float], keys: Sequence[Callable],
                    epsilon: float, a: float, b: float,
                    bank_damping: float = 0.0, n_grid: int = 1024) -> dict:
    """Numerical certificate of the shared-bank approximation theorem.

    Searches the mode-count ladder until every key's Fejér approximant is
    within epsilon/2 in sup norm, realizes each key on the shared grid,
    then verifies the three claims: key sup errors below epsilon, logit
    gaps below sup||q|| * epsilon, and softmax l1 gaps below
    sup||q|| * epsilon / sqrt(d_k).  With ``bank_damping`` > 0 the realized
    banks are rerun with that uniform damping (the stability corollary).
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be > 0")
    if len(anchors) != len(keys):
        raise ShapeError("anchors and keys must pair up")
    anchors = [float(t) for t in anchors]
    if any(t < a or t > b for t in anchors):
        raise ParameterError("anchors must lie in [a, b]")

    def extended(key, t_i):
        def f(t):
            return key(max(t, t_i))
        return f

    chosen = None
    polys = None
    for N in N_LADDER:
        polys = []
        worst = 0.0
        for t_i, key in zip(anchors, keys):
            poly = fejer_approx(extended(key, t_i), a, b, N)
            poly = phase_shift(poly, t_i)
            ts = np.linspace(t_i, b, n_grid)
            err = np.max(np.linalg.norm(poly.evaluate(ts) - _eval_many(key, ts), axis=-1))
            worst = max(worst, float(err))
            polys.append(poly)
        if worst < 0.5 * epsilon:
            chosen = N
            break

    report = {
        "epsilon": float(epsilon),
        "gamma_bank": float(bank_damping),
        "N_used": chosen,
        "capacity_exhausted": chosen is None,
    }
    if chosen is None:
        report.update(per_key_sup_error=None, max_logit_gap=None,
                      max_l1_gap=None, bounds_ok=False)
        return report

    banks = [realize_bank(poly, chosen) for poly in polys]
    if bank_damping > 0.0:
        banks = [bank.with_damping(bank_damping) for bank in banks]

    key_errors = []
    readouts = []
    for t_i, key, bank in zip(anchors, keys, banks):
        ts = np.linspace(t_i, b, n_grid)
        tilde = bank_readout(bank, ts)
        key_errors.append(float(np.max(np.linalg.norm(tilde - _eval_many(key, ts), axis=-1))))
        readouts.append(lambda t, bank=bank: bank_readout(bank, t))

    q_norm = _sup_query_norm(q, a, b)
    d_k = q.dim
    eval_times = sorted(set(anchors))
    max_logit_gap = 0.0
    max_l1_gap = 0.0
    for t_j in eval_times:
        valid = [i for i, t_i in enumerate(anchors) if t_i <= t_j]
        alphas = np.array([_alpha(q, keys[i], anchors[i], t_j) for i in valid])
        alphas_t = np.array([_alpha(q, readouts[i], anchors[i], t_j) for i in valid])
        max_logit_gap = max(max_logit_gap, float(np.max(np.abs(alphas - alphas_t))))
        w = softmax(alphas / np.sqrt(d_k))
        w_t = softmax(alphas_t / np.sqrt(d_k))
        max_l1_gap = max(max_l1_gap, float(np.sum(np.abs(w - w_t))))

    per_key = float(np.max(key_errors))
    bounds_ok = (
        per_key < epsilon
        and max_logit_gap <= q_norm * epsilon
        and max_l1_gap <= q_norm * epsilon / np.sqrt(d_k)
    )
    report.update(
        per_key_sup_error=per_key,
        q_sup_norm=q_norm,
        max_logit_gap=max_logit_gap,
        max_l1_gap=max_l1_gap,
        bounds_ok=bool(bounds_ok),
    )
    return report

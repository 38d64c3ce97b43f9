"""Sinusoidal-basis representation of the query trajectory.

A query is fitted once per output time by ridge-regularized least squares on
a fixed frequency grid, rotated into each key's anchor frame, and averaged
over evaluation windows through the gamma = 0 kernels.  A constant (DC)
column is included by default so constant queries are representable; it is
carried through rotation and averaging as a zero-frequency mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ParameterError,
    RankDeficiencyError,
    ShapeError,
    WindowError,
    check_vector,
)
from .kernels import kernel_C, kernel_S

CONDITION_LIMIT = 1e12
DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies, plus a DC flag."""

    freqs: np.ndarray
    include_dc: bool = True

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        if f.size == 0:
            raise ParameterError("grid needs at least one frequency")
        if np.any(f <= 0) or not np.all(np.isfinite(f)):
            raise ParameterError("grid frequencies must be positive and finite")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ParameterError("grid frequencies must be strictly increasing")
        object.__setattr__(self, "freqs", f)

    @classmethod
    def default(cls, span: float, n_modes: int = 8, max_len: int = 64,
                include_dc: bool = True) -> "FrequencyGrid":
        """Log-spaced grid between one cycle per span and pi * max_len."""
        lo = 2.0 * np.pi / max(span, 1e-9)
        hi = np.pi * max_len
        if hi <= lo:
            hi = 4.0 * lo
        return cls(np.geomspace(lo, hi, n_modes), include_dc)

    @property
    def size(self) -> int:
        return self.freqs.size


@dataclass(frozen=True)
class QueryExpansion:
    """Coefficients of q(t) = dc + sum_j A_j cos(w_j t) + B_j sin(w_j t)."""

    grid: FrequencyGrid
    A: np.ndarray
    B: np.ndarray
    dc: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape or A.shape[0] != self.grid.size:
            raise ShapeError("coefficient count must match the grid size")
        dc = self.dc
        if dc is not None:
            dc = check_vector(dc, "dc")
            if dc.size != A.shape[1]:
                raise ShapeError("dc width must match the coefficients")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "dc", dc)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phases = np.multiply.outer(t, self.grid.freqs)
        out = np.cos(phases) @ self.A + np.sin(phases) @ self.B
        if self.dc is not None:
            out = out + self.dc
        return out

    def modes(self):
        """(omegas, A, B) with the DC term folded in as a zero-frequency row."""
        if self.dc is None:
            return self.grid.freqs, self.A, self.B
        omegas = np.concatenate([[0.0], self.grid.freqs])
        A = np.vstack([self.dc[None, :], self.A])
        B = np.vstack([np.zeros((1, self.dim)), self.B])
        return omegas, A, B


@dataclass(frozen=True)
class RotatedQuery:
    """Anchor-frame coefficients; a zero-frequency row carries any DC term."""

    omegas: np.ndarray
    a_tilde: np.ndarray
    b_tilde: np.ndarray

    @property
    def dim(self) -> int:
        return self.a_tilde.shape[1]

    def evaluate_offset(self, s) -> np.ndarray:
        """Query value at anchor + s, from the rotated coefficients."""
        s = np.asarray(s, dtype=float)
        phases = np.multiply.outer(s, self.omegas)
        return np.cos(phases) @ self.a_tilde + np.sin(phases) @ self.b_tilde


def _design_matrix(times: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    phases = np.multiply.outer(times, grid.freqs)
    cols = [np.cos(phases), np.sin(phases)]
    if grid.include_dc:
        cols.insert(0, np.ones((times.size, 1)))
    return np.concatenate(cols, axis=1)


def fit_query(samples, grid: FrequencyGrid, ridge: float = DEFAULT_RIDGE) -> QueryExpansion:
    """Least-squares fit of sampled query values on the cos/sin design.

    ``samples`` is either a list of (t, vector) pairs or a (times, values)
    tuple of arrays.  Solved through the normal equations with a Cholesky
    factorization; if the condition estimate exceeds 1e12 the fit retries
    with a raised ridge, and a singular system at ridge = 0 is an error.
    """
    if ridge < 0:
        raise ParameterError("ridge must be >= 0")
    if isinstance(samples, tuple) and len(samples) == 2:
        times = np.asarray(samples[0], dtype=float)
        values = np.atleast_2d(np.asarray(samples[1], dtype=float))
    else:
        times = np.array([t for t, _ in samples], dtype=float)
        values = np.vstack([np.atleast_1d(np.asarray(v, dtype=float)) for _, v in samples])
    if times.size < 1:
        raise ParameterError("need at least one sample")
    if values.shape[0] != times.size:
        raise ShapeError("times and values disagree")

    phi = _design_matrix(times, grid)
    gram = phi.T @ phi
    rhs = phi.T @ values
    eye = np.eye(gram.shape[0])

    def solve(lam: float) -> np.ndarray:
        m = gram + lam * eye
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as err:
            raise RankDeficiencyError(
                "singular normal matrix; raise the ridge parameter"
            ) from err
        y = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, y)

    lam = ridge
    cond = np.linalg.cond(gram + lam * eye)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        if ridge == 0.0:
            raise RankDeficiencyError(
                f"normal equations condition {cond:.3g} with ridge = 0"
            )
        lam = max(ridge, 1e-8) * 10.0
    theta = solve(lam)

    offset = 1 if grid.include_dc else 0
    J = grid.size
    dc = theta[0] if grid.include_dc else None
    A = theta[offset : offset + J]
    B = theta[offset + J : offset + 2 * J]
    return QueryExpansion(grid, A, B, dc)


def rotate_query(q: QueryExpansion, anchor: float) -> RotatedQuery:
    """Phase-rotate every mode into the anchor frame s = t - anchor."""
    omegas, A, B = q.modes()
    phase = omegas * anchor
    c = np.cos(phase)[:, None]
    s = np.sin(phase)[:, None]
    return RotatedQuery(omegas, A * c + B * s, -A * s + B * c)


def mean_query(q: QueryExpansion, t_i: float, t: float) -> np.ndarray:
    """Average of the query over [t_i, t] through the gamma = 0 kernels."""
    if not t > t_i:
        raise WindowError(f"need t > t_i, got [{t_i}, {t}]")
    delta = t - t_i
    rq = rotate_query(q, t_i)
    cw = np.array([kernel_C(delta, 0.0, w) for w in rq.omegas])
    sw = np.array([kernel_S(delta, 0.0, w) for w in rq.omegas])
    return (cw @ rq.a_tilde + sw @ rq.b_tilde) / delta

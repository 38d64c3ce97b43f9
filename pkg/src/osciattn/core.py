"""Shared scalar/vector contracts, oscillator parameters and deterministic RNG.

Every public boundary works with finite float64 values.  Kernel-level code is
written against a closed set of scalar primitives (add, mul, div, exp, sin,
cos, sinh, cosh, sqrt, power) so that a derivative-carrying value from
:mod:`osciattn.autodiff` flows through the same code paths unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Default relative tolerance used to decide "critically damped".
REGIME_REL_TOL = 1e-9

# |x| * t below this switches sin(x t)/x style expressions to series form.
SERIES_SWITCH = 1e-4


class ParameterError(ValueError):
    """Oscillator or configuration parameters outside their domain."""


class OrderingError(ValueError):
    """Time instants that are not strictly increasing."""


class RangeError(ValueError):
    """Empty or inverted numeric range."""


class CausalityError(ValueError):
    """Evaluation time earlier than the trajectory anchor."""


class ResonanceSingularityError(ValueError):
    """Undamped drive exactly at the natural frequency; no steady state."""


class CapacityError(ValueError):
    """Requested realization exceeds the available oscillator modes."""


class MaskError(ValueError):
    """Softmax asked to normalize over an empty set of valid entries."""


class WindowError(ValueError):
    """Averaging window of zero or negative length."""


class RankDeficiencyError(ValueError):
    """Singular normal equations with no regularization to fall back on."""


class ShapeError(ValueError):
    """Inconsistent array dimensions at a module boundary."""


def check_finite(x, name: str = "value"):
    """Validate that ``x`` is finite everywhere; returns ``x`` unchanged."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite, got {x!r}")
    return x


def check_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    check_finite(arr, name)
    return arr


@dataclass(frozen=True)
class OscParams:
    """One oscillator channel of x'' + 2*gamma*x' + omega0^2*x = F(t)."""

    gamma: float
    omega0: float

    def __post_init__(self):
        g = float(np.asarray(getattr(self.gamma, "data", self.gamma)))
        w = float(np.asarray(getattr(self.omega0, "data", self.omega0)))
        if not (np.isfinite(g) and np.isfinite(w)):
            raise ParameterError("gamma and omega0 must be finite")
        if g < 0.0:
            raise ParameterError(f"gamma must be >= 0, got {g}")
        if w <= 0.0:
            raise ParameterError(f"omega0 must be > 0, got {w}")


@dataclass(frozen=True)
class Underdamped:
    omega_d: float


@dataclass(frozen=True)
class Critical:
    pass


@dataclass(frozen=True)
class Overdamped:
    sigma: float


DampingRegime = Underdamped | Critical | Overdamped


@dataclass(frozen=True)
class State2:
    """Augmented oscillator state z = [x, p] with p = dx/dt."""

    x: float
    p: float


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation instants, normalized into [0, 1]."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ShapeError("TimeGrid needs at least one instant")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise OrderingError("times must be strictly increasing")
        check_finite(t, "times")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size


def classify_regime(p: OscParams, rel_tol: float = REGIME_REL_TOL) -> DampingRegime:
    """Classify damping as under/critically/over damped.

    Critical wins when |gamma - omega0| <= rel_tol * max(gamma, omega0, 1),
    which also keeps the derived frequencies away from ill-conditioned
    near-zero values downstream.
    """
    if not (0.0 < rel_tol <= 1e-3):
        raise ParameterError(f"rel_tol must be in (0, 1e-3], got {rel_tol}")
    g, w = float(p.gamma), float(p.omega0)
    scale = max(g, w, 1.0)
    if abs(g - w) <= rel_tol * scale:
        return Critical()
    if g < w:
        return Underdamped(omega_d=float(np.sqrt((w - g) * (w + g))))
    return Overdamped(sigma=float(np.sqrt((g - w) * (g + w))))


def normalize_times(raw) -> TimeGrid:
    """Map raw instants affinely onto [0, 1]; a single instant maps to 0."""
    t = np.asarray(raw, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ShapeError("need at least one instant")
    if t.size == 1:
        return TimeGrid(np.zeros(1))
    if not np.all(np.diff(t) > 0):
        raise OrderingError("raw times must be strictly increasing")
    span = t[-1] - t[0]
    return TimeGrid((t - t[0]) / span)


_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Deterministic 64-bit splittable counter generator (splitmix64).

    Pure integer arithmetic, so identical seeds give identical streams on
    any platform.  Instances are single-owner; use :meth:`split` to hand
    independent streams to parallel workers.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix(self.state)

    def split(self) -> "Rng":
        """Derive an independent child stream and advance this one."""
        return Rng(self.next_u64() ^ 0xA5A5A5A5A5A5A5A5)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if not lo < hi:
            raise RangeError(f"need lo < hi, got [{lo}, {hi})")
        u = self.next_u64() / 2.0**64
        return lo + u * (hi - lo)

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)])

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise RangeError("n must be positive")
        return self.next_u64() % n

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller; one fresh pair per call keeps the stream splittable.
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        return mu + sigma * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def normal_array(self, shape, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        return np.array([self.normal(mu, sigma) for _ in range(n)]).reshape(shape)

    def exponential(self, rate: float) -> float:
        if rate <= 0:
            raise RangeError("rate must be positive")
        return -np.log(max(1.0 - self.uniform(), 1e-300)) / rate


def rng_next_uniform(rng: Rng, lo: float, hi: float) -> float:
    """Deterministic draw in [lo, hi); advances the generator state."""
    return rng.uniform(lo, hi)

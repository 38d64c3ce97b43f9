"""Dispatch layer between plain numpy values and tape variables.

The closed-form kernels are written against these helpers so that the same
expressions run on floats, numpy arrays, and :class:`osciattn.autodiff.Var`
nodes.  Conditions (for branch selection) are always evaluated on raw
values; gradients flow only through the selected branch.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Var, softplus, where  # noqa: F401  (re-exported)


def value_of(x) -> np.ndarray:
    """Underlying numpy value of a float, array, or tape variable."""
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=float)


def exp(x):
    return x.exp() if isinstance(x, Var) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Var) else np.log(x)


def sin(x):
    return x.sin() if isinstance(x, Var) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Var) else np.cos(x)


def sinh(x):
    return x.sinh() if isinstance(x, Var) else np.sinh(x)


def cosh(x):
    return x.cosh() if isinstance(x, Var) else np.cosh(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Var) else np.sqrt(x)


def maximum(a, b):
    if isinstance(a, Var):
        return a.maximum(b)
    if isinstance(b, Var):
        return b.maximum(a)
    return np.maximum(a, b)


def asum(x, axis=None):
    if isinstance(x, Var):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)

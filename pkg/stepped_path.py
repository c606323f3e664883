"""
Stepped paths
Right-continuous step functions on a uniform grid: observed paths and quasi-paths.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import DomainError, ParameterError

# t is snapped to grid time k*h when within this fraction of h
GRID_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class SteppedPath:
    """
    Step path starting at u on the grid t_k = k*h.

    values[0] = u and values[k] = u + increments[0] + ... + increments[k-1];
    the value on [t_k, t_{k+1}) is values[k]. The terminal value is an exactly
    rounded sum, so it does not depend on the order of the increments.
    """
    u: float
    h: float
    increments: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.increments)

    @property
    def T(self):
        return self.n * self.h

    @property
    def terminal(self):
        return float(self.values[-1])

    def times(self):
        return np.arange(self.n + 1) * self.h

    def to_frame(self):
        return pd.DataFrame({"t_k": self.times(), "value": self.values})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def from_increments(u, h, increments):
    """
    Build the step path u + sum_{j <= k} increments[j].

    Args:
        u: start value
        h: grid spacing (> 0)
        increments: sequence of n reals

    Returns:
        SteppedPath with n + 1 values
    """
    if not h > 0:
        raise ParameterError(f"grid spacing must be > 0, got {h}")
    inc = np.asarray(increments, dtype=float).reshape(-1)
    values = np.empty(len(inc) + 1)
    values[0] = u
    if len(inc):
        values[1:] = u + np.cumsum(inc)
        values[-1] = math.fsum([u, *inc.tolist()])
    inc.setflags(write=False)
    values.setflags(write=False)
    return SteppedPath(float(u), float(h), inc, values)


def grid_index(path, t):
    """Index k with t in [t_k, t_{k+1}); t_n maps to n."""
    if t < 0 or t > path.T * (1 + GRID_SNAP) + GRID_SNAP * path.h:
        raise DomainError(f"t={t} outside [0, {path.T}]")
    return min(int(math.floor(t / path.h + GRID_SNAP)), path.n)


def value_at(path, t):
    """Path value at time t; the k-th jump is already applied at t_k."""
    return float(path.values[grid_index(path, t)])


def ruin_index(path, xi):
    """First k with values[k] < xi, or None."""
    below = np.flatnonzero(path.values < xi)
    return int(below[0]) if below.size else None


def ruin_time(path, xi):
    """
    Default time inf{t : X_t < xi} capped at T.

    For step paths the first passage happens at a grid time; a value equal to
    xi does not ruin.
    """
    k = ruin_index(path, xi)
    return path.T if k is None else k * path.h


def sup_distance(a, b):
    """Uniform distance max_k |a.values[k] - b.values[k]| on a shared grid."""
    if a.n != b.n or a.h != b.h:
        raise ParameterError(f"grid mismatch: (n={a.n}, h={a.h}) vs (n={b.n}, h={b.h})")
    return float(np.max(np.abs(a.values - b.values)))


def shifted(path, c):
    """Same increments, start moved by c (every value moves by c)."""
    return from_increments(path.u + c, path.h, path.increments)

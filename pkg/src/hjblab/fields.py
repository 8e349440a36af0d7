"""Spatial grids, grid-sampled value functions, and feedback policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .errors import ModelConstructionError
from .problems import ControlGrid

__all__ = ["SpatialGrid", "build_grid", "ValueField", "FeedbackPolicy"]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform 1-D grid on [x_lo, x_hi] with n nodes."""

    x_lo: float
    x_hi: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi)):
            raise ModelConstructionError("grid", "bounds must be finite")
        if self.x_lo >= self.x_hi:
            raise ModelConstructionError("grid", "need x_lo < x_hi")
        if self.n < 3:
            raise ModelConstructionError("grid", "need at least 3 nodes")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n)

    def nearest_index(self, x: float) -> int:
        i = int(round((x - self.x_lo) / self.h))
        return min(max(i, 0), self.n - 1)

    def widen(self, factor: float) -> "SpatialGrid":
        """Same spacing, box scaled by ``factor`` about its center."""
        c = 0.5 * (self.x_lo + self.x_hi)
        half = 0.5 * (self.x_hi - self.x_lo) * factor
        n = int(round(2 * half / self.h)) + 1
        return SpatialGrid(c - half, c + half, n)


def build_grid(x_lo: float, x_hi: float, n: int) -> SpatialGrid:
    return SpatialGrid(float(x_lo), float(x_hi), int(n))


class ValueField:
    """Grid samples of a candidate value function with derivative accessors.

    Derivatives are diagnostic approximations of the a.e. derivatives:
    central differences at interior nodes, one-sided at the two boundary
    nodes (second derivative copies its interior neighbour there).
    """

    def __init__(self, grid: SpatialGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise ModelConstructionError("values", "shape must match the grid")
        if not np.all(np.isfinite(values)):
            raise ModelConstructionError("values", "values must be finite")
        self.grid = grid
        self.values = values.copy()
        self.values.flags.writeable = False

    def derivative(self) -> np.ndarray:
        v, h = self.values, self.grid.h
        dv = np.empty_like(v)
        dv[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        dv[0] = (v[1] - v[0]) / h
        dv[-1] = (v[-1] - v[-2]) / h
        return dv

    def second_derivative(self) -> np.ndarray:
        v, h = self.values, self.grid.h
        d2 = np.empty_like(v)
        d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
        d2[0] = d2[1]
        d2[-1] = d2[-2]
        return d2

    def interpolate(self, x) -> np.ndarray:
        """Piecewise-linear interpolation, flat beyond the grid edges."""
        t = (np.asarray(x, dtype=float) - self.grid.x_lo) / self.grid.h
        j = np.clip(np.floor(t).astype(np.int64), 0, self.grid.n - 2)
        frac = np.clip(t - j, 0.0, 1.0)
        return self.values[j] + frac * (self.values[j + 1] - self.values[j])

    def __call__(self, x):
        return self.interpolate(x)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def shifted(self, delta: float) -> "ValueField":
        return ValueField(self.grid, self.values + delta)


class FeedbackPolicy:
    """Argmin feedback law sampled on a grid (piecewise-constant in x).

    ``indices[i]`` selects a point of ``control_grid`` at node i; lookups map
    x to the nearest node and clamp outside the box, so the policy is total
    on the real line.
    """

    def __init__(self, grid: SpatialGrid, indices, control_grid: ControlGrid):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape != (grid.n,):
            raise ModelConstructionError("policy", "one control index per node")
        if indices.min() < 0 or indices.max() >= len(control_grid):
            raise ModelConstructionError("policy", "control index out of range")
        self.grid = grid
        self.indices = indices.copy()
        self.indices.flags.writeable = False
        self.control_grid = control_grid

    def control_values(self) -> np.ndarray:
        """Control value at each node."""
        return self.control_grid.as_array()[self.indices]

    def __call__(self, x):
        if np.ndim(x) == 0:
            return float(self.control_grid.points[self.indices[self.grid.nearest_index(float(x))]])
        t = np.rint((np.asarray(x, dtype=float) - self.grid.x_lo) / self.grid.h)
        j = np.clip(t.astype(np.int64), 0, self.grid.n - 1)
        return self.control_grid.as_array()[self.indices[j]]

    @staticmethod
    def constant(grid: SpatialGrid, control_grid: ControlGrid, index: int = 0) -> "FeedbackPolicy":
        return FeedbackPolicy(grid, np.full(grid.n, index, dtype=np.int64), control_grid)


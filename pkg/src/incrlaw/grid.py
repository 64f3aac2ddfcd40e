"""Dyadic grids and grid functions.

A :class:`GridFunction` stores one nonnegative mass per dyadic cell
``2^-p [i-1, i)`` of ``[0, 1)^d``. It stands for the bounded nondecreasing
function ``s -> mass of [0, s)``. Masses are kept as a ``(2^p,)*d`` array
indexed by the 0-based multi-index; flattening is row-major (C order, last
axis fastest) and that order is part of the JSON format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chernoff import chernoff_h

MAX_DIM = 3
MAX_RESOLUTION = 12
MAX_CELLS = 1 << 24


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class DyadicGrid:
    d: int
    p: int

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise GridError(f"dimension must be in 1..{MAX_DIM}, got {self.d}")
        if not 0 <= self.p <= MAX_RESOLUTION:
            raise GridError(f"resolution must be in 0..{MAX_RESOLUTION}, got {self.p}")
        if (1 << (self.p * self.d)) > MAX_CELLS:
            raise GridError(f"grid d={self.d}, p={self.p} has too many cells")

    @property
    def side(self) -> int:
        """Cells per axis."""
        return 1 << self.p

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def n_cells(self) -> int:
        return self.side**self.d

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.p * self.d)

    def corner_axis(self) -> np.ndarray:
        """Corner coordinates ``0, 2^-p, ..., 1`` along one axis.

        The last entry stands for the limit from below at 1.
        """
        return np.arange(self.side + 1) / self.side

    def corner_points(self) -> np.ndarray:
        """All ``(2^p + 1)^d`` lattice corners, row-major, shape ``(M, d)``."""
        axis = self.corner_axis()
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def cumulative(masses: np.ndarray) -> np.ndarray:
    """Cumulative sums over ``[0, s)`` at every lattice corner.

    Output has shape ``(side + 1,)*d``; entries with a zero index on any axis
    are 0, the all-``side`` entry is the total mass.
    """
    out = np.zeros(tuple(s + 1 for s in masses.shape))
    inner = masses
    for ax in range(masses.ndim):
        inner = np.cumsum(inner, axis=ax)
    out[(slice(1, None),) * masses.ndim] = inner
    return out


def difference(corner_values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cumulative`: d-dimensional finite differences."""
    out = corner_values
    for ax in range(corner_values.ndim):
        out = np.diff(out, axis=ax)
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: DyadicGrid
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.shape != self.grid.shape:
            if m.size != self.grid.n_cells:
                raise GridError(f"expected {self.grid.n_cells} masses, got {m.size}")
            m = m.reshape(self.grid.shape)
        if not np.all(np.isfinite(m)):
            raise GridError("masses must be finite")
        if np.any(m < 0):
            idx = np.unravel_index(int(np.argmin(m)), m.shape)
            raise GridError(f"negative mass {m[idx]:.6g} in cell {idx}")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def zero(cls, grid: DyadicGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def linear(cls, grid: DyadicGrid, slope: float = 1.0) -> "GridFunction":
        """Constant density ``slope`` (slope 1 is the identity, ``g(s) = s_1...s_d``)."""
        return cls(grid, np.full(grid.shape, slope * grid.cell_volume))

    def cumulative(self) -> np.ndarray:
        return cumulative(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.masses, other.masses)

    def to_dict(self) -> dict:
        return {"d": self.grid.d, "p": self.grid.p, "masses": self.masses.ravel(order="C").tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GridFunction":
        extra = set(data) - {"d", "p", "masses"}
        if extra:
            raise GridError(f"unknown keys in grid function: {sorted(extra)}")
        grid = DyadicGrid(int(data["d"]), int(data["p"]))
        return cls(grid, np.asarray(data["masses"], dtype=float).reshape(grid.shape))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        return cls.from_dict(json.loads(text))


def discretize(g_eval: Callable[[np.ndarray], np.ndarray], grid: DyadicGrid, rtol: float = 1e-12) -> GridFunction:
    """Grid function whose cumulative corner values equal ``g_eval``.

    ``g_eval`` receives an ``(M, d)`` array of corners and returns ``M``
    values; it must vanish on the coordinate faces. The corner 1 along an
    axis is read as the limit from below. Differencing noise below
    ``rtol * max|g|`` is clipped; genuinely negative masses are rejected.
    """
    pts = grid.corner_points()
    vals = np.asarray(g_eval(pts), dtype=float).reshape((grid.side + 1,) * grid.d)
    scale = max(1.0, float(np.max(np.abs(vals))))
    for ax in range(grid.d):
        face = np.take(vals, 0, axis=ax)
        if np.any(np.abs(face) > rtol * scale):
            raise GridError("g must vanish where any coordinate is 0")
    masses = difference(vals)
    bad = masses < -rtol * scale
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GridError(f"negative mass {masses[idx]:.6g} in cell {idx}: g is not a distribution function on the grid")
    return GridFunction(grid, np.clip(masses, 0.0, None))


def rate_from_masses(masses: np.ndarray, cell_volume: float) -> np.ndarray:
    """Sum of ``vol * h(mass / vol)`` over the trailing axes (vectorised over rows)."""
    m = np.asarray(masses, dtype=float)
    vals = cell_volume * chernoff_h(m / cell_volume)
    return vals.reshape(vals.shape[0], -1).sum(axis=1) if vals.ndim > 1 else vals.sum()


def rate_Ip(gf: GridFunction) -> float:
    """Dyadic rate ``sum_i 2^-pd h(2^pd g(A_i))``."""
    w = gf.grid.cell_volume
    return float(np.sum(w * chernoff_h(gf.masses.ravel() / w)))


_P_MAX_BY_DIM = {1: 12, 2: 8, 3: 6}


def rate_I_sequence(g_eval: Callable[[np.ndarray], np.ndarray], p_max: int, d: int = 1) -> list[tuple[int, float]]:
    """``[(p, I_p(g^(p))) for p = 1..p_max]``; nondecreasing in ``p`` by Jensen."""
    if p_max > _P_MAX_BY_DIM[d]:
        raise GridError(f"p_max={p_max} too large for d={d} (max {_P_MAX_BY_DIM[d]})")
    return [(p, rate_Ip(discretize(g_eval, DyadicGrid(d, p)))) for p in range(1, p_max + 1)]


def sup_norm_dist(gf1: GridFunction, gf2: GridFunction) -> float:
    """Max of the cumulative difference over all corners, including the total-mass corner."""
    if gf1.grid != gf2.grid:
        raise GridError(f"grid mismatch: {gf1.grid} vs {gf2.grid}")
    return float(np.max(np.abs(cumulative(gf1.masses - gf2.masses))))


def max_cell_oscillation(gf: GridFunction) -> float:
    """Largest increment of the cumulative across a single cell.

    Bounds how far the corner sup-norm can under-read the sup over the
    whole cube for a monotone function.
    """
    cum = gf.cumulative()
    d = gf.grid.d
    upper = cum[(slice(1, None),) * d]
    lower = cum[(slice(None, -1),) * d]
    return float(np.max(upper - lower))


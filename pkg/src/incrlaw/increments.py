"""Normalised window increments of the empirical measure.

For a centre ``z`` and bandwidth ``h`` the window is ``z + h^(1/d) [0, 1)^d``.
Relative coordinates ``(Z - z) / h^(1/d)`` inside ``[0, 1)^d`` are binned on
the dyadic grid with ``floor(2^p u)`` per axis; the grid function's cell mass
is the bin count over ``c f(z) log n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import DyadicGrid, GridError, GridFunction
from .sampling import BandwidthSchedule, DensityModel, poisson_variate


class WindowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IncrementSample:
    center: np.ndarray
    n: int
    h_n: float
    normalization: float
    relative_points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.relative_points)

    def grid_function(self, p: int) -> GridFunction:
        grid = DyadicGrid(len(self.center), p)
        counts = bin_counts(self.relative_points, grid)
        return GridFunction(grid, counts / self.normalization)

    def to_dict(self, p: int) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "n": int(self.n),
            "h_n": float(self.h_n),
            "count": self.count,
            "normalization": float(self.normalization),
            "grid_function": self.grid_function(p).to_dict(),
        }

    def to_json(self, p: int) -> str:
        return json.dumps(self.to_dict(p))


def bin_counts(relative_points: np.ndarray, grid: DyadicGrid) -> np.ndarray:
    """Counts of relative points per dyadic cell, shape ``grid.shape``."""
    rel = np.asarray(relative_points, dtype=float).reshape(-1, grid.d)
    idx = np.minimum(np.floor(rel * grid.side).astype(np.int64), grid.side - 1)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape) if len(rel) else np.zeros(0, dtype=np.int64)
    return np.bincount(flat, minlength=grid.n_cells).reshape(grid.shape).astype(float)


def window_edge(h: float, d: int) -> float:
    return h ** (1.0 / d)


def relative_in_window(points: np.ndarray, z, h: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pts = pts.reshape(-1, len(z))
    rel = (pts - z) / window_edge(h, len(z))
    keep = np.all((rel >= 0.0) & (rel < 1.0), axis=1)
    return rel[keep]


def _check_window(z, h: float, domain: DensityModel | None):
    if domain is None:
        return
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not domain.contains_box(z, z + window_edge(h, len(z))):
        raise WindowError(f"window at {z.tolist()} with edge {window_edge(h, len(z)):.4g} leaves the model domain")


def build_increment(points, z, h_n: float, c: float, f_z: float, n: int | None = None,
                    domain: DensityModel | None = None) -> IncrementSample:
    """Window sample at ``z`` normalised by ``c f(z) log n`` (``n`` defaults to the sample size)."""
    _check_window(z, h_n, domain)
    pts = np.asarray(points, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = len(pts.reshape(-1, len(z))) if n is None else n
    if n < 2:
        raise ValueError("normalisation needs n >= 2")
    rel = relative_in_window(pts, z, h_n)
    return IncrementSample(z, int(n), float(h_n), c * f_z * math.log(n), rel)


def increment_process(points, z, h_n: float, c: float, f_z: float, p: int, n: int | None = None,
                      domain: DensityModel | None = None) -> GridFunction:
    """Grid function of the increment at ``z``; cumulative at corner ``s`` is the increment at ``s``."""
    return build_increment(points, z, h_n, c, f_z, n=n, domain=domain).grid_function(p)


def poissonized_increment(model: DensityModel, n: int, z, schedule: BandwidthSchedule, p: int,
                          rng: np.random.Generator, thinned: bool = True) -> GridFunction:
    """Increment built from ``eta ~ Poisson(n)`` i.i.d. points.

    ``thinned=True`` draws only the points that fall in the window: their
    number is Poisson(``n P(window)``) and, given it, they are i.i.d. from
    the law conditioned on the window. That is the same law as drawing all
    ``eta`` points, at a cost that does not grow with ``n``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    h = schedule(n)
    _check_window(z, h, model)
    f_z = float(model.pdf(z)[0])
    edge = window_edge(h, model.d)
    if thinned:
        lam = float(n * model.box_prob(z, z + edge)[0])
        k = poisson_variate(lam, rng)
        pts = model.sample_in_box(k, z, z + edge, rng)
    else:
        eta = poisson_variate(float(n), rng)
        pts = model.sample(eta, rng)
    return increment_process(pts, z, h, schedule.c, f_z, p, n=n)


def poissonized_cell_counts(model: DensityModel, n: int, z, h: float, grid: DyadicGrid,
                            size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws of the Poissonized cell counts at ``z``.

    Counts over disjoint cells of a Poisson random measure are independent
    Poisson variables with mean ``n P(Z in cell)``. Shape ``(size, n_cells)``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    edge = window_edge(h, grid.d)
    axis = np.arange(grid.side) / grid.side
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    lows = z + edge * np.stack([m.ravel() for m in mesh], axis=-1)
    means = n * model.box_prob(lows, lows + edge / grid.side)
    return rng.poisson(means, size=(size, grid.n_cells))


# -- centre layouts -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CenterLayout:
    mode: str
    centers: np.ndarray  # (m, d), row-major over the per-axis lattices
    edge: float
    axes: tuple

    @property
    def count(self) -> int:
        return len(self.centers)

    def windows_disjoint(self) -> bool:
        """Pairwise disjointness of the half-open windows (checked per axis)."""
        for ax in self.axes:
            gaps = np.diff(np.sort(ax))
            if np.any(gaps < self.edge * (1 - 1e-12)):
                return False
        return True


def center_layout(h_box, schedule: BandwidthSchedule | None, n: int | None, mode: str = "packing",
                  delta: float = 1.0, domain: DensityModel | None = None, h_n: float | None = None) -> CenterLayout:
    """Lattice of window corners over the box ``h_box = [(lo, hi), ...]``.

    Packing: step = window edge ``h_n^(1/d)``, as many disjoint windows as fit
    inside the box. Covering: step = ``(delta h_n)^(1/d)``, last corner on
    each axis clamped to ``hi - edge`` so every window stays inside the box
    while the union covers ``[lo, hi)``. ``h_n`` overrides the schedule.
    """
    box = np.asarray(h_box, dtype=float).reshape(-1, 2)
    d = len(box)
    if mode == "packing" and delta != 1.0:
        raise ValueError("packing layouts use delta = 1")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if h_n is None:
        h_n = schedule(n)
    edge = window_edge(delta * h_n, d)
    axes = []
    for lo, hi in box:
        length = hi - lo
        if length < edge:
            raise WindowError(f"box side {length:.4g} is smaller than one window ({edge:.4g})")
        if mode == "packing":
            k = int(math.floor(length / edge + 1e-9))
            ax = lo + edge * np.arange(k)
        elif mode == "covering":
            k = int(math.ceil(length / edge - 1e-9))
            ax = lo + edge * np.arange(k)
            ax[-1] = hi - edge
        else:
            raise ValueError(f"unknown layout mode {mode!r}")
        axes.append(ax)
    if domain is not None:
        lo_all = np.array([a[0] for a in axes])
        hi_all = np.array([a[-1] for a in axes]) + edge
        if not domain.contains_box(lo_all, hi_all):
            raise WindowError("layout windows leave the model domain")
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    return CenterLayout(mode, centers, edge, tuple(axes))


def packing_counts(points: np.ndarray, layout: CenterLayout, grid: DyadicGrid) -> np.ndarray:
    """Cell counts for every packing window at once, shape ``(m, n_cells)``.

    Packing windows tile a lattice, so each point lands in at most one of
    them and the whole table comes from one pass over the sample.
    """
    if layout.mode != "packing":
        raise ValueError("packing_counts needs a packing layout")
    pts = np.asarray(points, dtype=float).reshape(-1, grid.d)
    origin = np.array([ax[0] for ax in layout.axes])
    sizes = np.array([len(ax) for ax in layout.axes])
    scaled = (pts - origin) / layout.edge
    win = np.floor(scaled)
    keep = np.all((win >= 0) & (win < sizes), axis=1)
    win = win[keep].astype(np.int64)
    rel = scaled[keep] - win
    cell = np.minimum(np.floor(rel * grid.side).astype(np.int64), grid.side - 1)
    win_flat = np.ravel_multi_index(tuple(win.T), tuple(sizes)) if len(win) else np.zeros(0, dtype=np.int64)
    cell_flat = np.ravel_multi_index(tuple(cell.T), grid.shape) if len(cell) else np.zeros(0, dtype=np.int64)
    table = np.bincount(win_flat * grid.n_cells + cell_flat, minlength=layout.count * grid.n_cells)
    return table.reshape(layout.count, grid.n_cells)


def window_counts(points: np.ndarray, layout: CenterLayout) -> np.ndarray:
    """Number of sample points in each window of the layout."""
    pts = np.asarray(points, dtype=float).reshape(-1, layout.centers.shape[1])
    if layout.mode == "packing":
        return packing_counts(pts, layout, DyadicGrid(pts.shape[1], 0))[:, 0]
    if pts.shape[1] == 1:
        xs = np.sort(pts[:, 0])
        lo = layout.centers[:, 0]
        return np.searchsorted(xs, lo + layout.edge, side="left") - np.searchsorted(xs, lo, side="left")
    return np.array([len(relative_in_window(pts, z, layout.edge ** pts.shape[1])) for z in layout.centers])


# -- oscillation ------------------------------------------------------------------

def oscillation_statistic(gf_fine: GridFunction, p: int) -> float:
    """Largest rise of the cumulative inside one coarse cell.

    For each coarse cell ``A_i`` this is ``sup_{s in A_i} G(s) - G(lower
    corner)``; ``G`` is nondecreasing, so the sup is the value at the upper
    corner (a limit from below, since cells are half-open).
    """
    q = gf_fine.grid.p
    if not p < q:
        raise GridError(f"coarse resolution {p} must be below the fine resolution {q}")
    if p < 0:
        raise GridError("resolution must be >= 0")
    d = gf_fine.grid.d
    step = 1 << (q - p)
    coarse = gf_fine.cumulative()[(slice(None, None, step),) * d]
    upper = coarse[(slice(1, None),) * d]
    lower = coarse[(slice(None, -1),) * d]
    return float(np.max(upper - lower))


def oscillation_from_counts(counts: np.ndarray, grid_fine: DyadicGrid, p: int, normalization: float) -> np.ndarray:
    """Row-wise oscillation statistic for a ``(size, n_cells)`` table of fine counts.

    ``p`` may equal the fine resolution, which gives the largest single-cell rise.
    """
    if not 0 <= p <= grid_fine.p:
        raise GridError(f"coarse resolution {p} must be in 0..{grid_fine.p}")
    d = grid_fine.d
    step = 1 << (grid_fine.p - p)
    rows = np.asarray(counts, dtype=float).reshape((-1,) + grid_fine.shape)
    cum = np.zeros((len(rows),) + tuple(k + 1 for k in grid_fine.shape))
    inner = rows
    for ax in range(1, d + 1):
        inner = np.cumsum(inner, axis=ax)
    cum[(slice(None),) + (slice(1, None),) * d] = inner
    coarse = cum[(slice(None),) + (slice(None, None, step),) * d]
    rise = coarse[(slice(None),) + (slice(1, None),) * d] - coarse[(slice(None),) + (slice(None, -1),) * d]
    return rise.reshape(len(rows), -1).max(axis=1) / normalization


# -- rescaling identity ---------------------------------------------------------------

@dataclass(frozen=True)
class RescalingCheck:
    count_discrepancy: int
    value_discrepancy: float
    corners_checked: int
    rho: float


def rescaling_identity_check(points, z, n: int, n_k: int, schedule: BandwidthSchedule, p: int,
                             model: DensityModel, anchor=None) -> RescalingCheck:
    """Compare the increment at bandwidth ``h_n`` with the block-level process at ``h_(n_k)``.

    Uses the first ``n`` points. With ``rho = (h_n / h_(n_k))^(1/d)`` the
    windows satisfy ``[0, s) h_n^(1/d) = [0, rho s) h_(n_k)^(1/d)``, so

        Delta_n(z, h_n, s) = T (f(z) / f(z_k)) H_n(z, rho s),
        T = f(z_k) log n_k / (f(z)^2 log n),

    where ``H_n`` counts over ``c log n_k`` without a density factor and
    ``z_k`` (``anchor``) is the covering centre of ``z``. Only corners with
    ``rho s`` inside ``[0, 1)^d`` are compared.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = len(z)
    anchor = z if anchor is None else np.atleast_1d(np.asarray(anchor, dtype=float))
    pts = np.asarray(points, dtype=float).reshape(-1, d)[:n]
    h_n, h_k = schedule(n), schedule(n_k)
    rho = (h_n / h_k) ** (1.0 / d)
    f_z = float(model.pdf(z)[0])
    f_a = float(model.pdf(anchor)[0])
    c = schedule.c
    t_factor = f_a * math.log(n_k) / (f_z * f_z * math.log(n))

    grid = DyadicGrid(d, p)
    corners = grid.corner_points()
    admissible = np.all(rho * corners < 1.0, axis=1)
    corners = corners[admissible]
    diff = pts - z
    edge_n, edge_k = window_edge(h_n, d), window_edge(h_k, d)
    worst_count, worst_value = 0, 0.0
    for s in corners:
        left = int(np.count_nonzero(np.all((diff >= 0) & (diff < s * edge_n), axis=1)))
        right = int(np.count_nonzero(np.all((diff >= 0) & (diff < rho * s * edge_k), axis=1)))
        lhs = left / (c * f_z * math.log(n))
        rhs = t_factor * (f_z / f_a) * right / (c * math.log(n_k))
        worst_count = max(worst_count, abs(left - right))
        worst_value = max(worst_value, abs(lhs - rhs))
    return RescalingCheck(worst_count, worst_value, len(corners), rho)

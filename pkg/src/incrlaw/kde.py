"""Kernel density estimates at Erdős–Rényi bandwidths and window occupancy extremes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .increments import CenterLayout, window_counts, window_edge
from .sampling import DensityModel

KERNELS = ("uniform", "triangular")


@dataclass(frozen=True)
class Kernel:
    """Kernel supported on the unit cube, anchored at its lower corner.

    ``uniform`` is the indicator of ``[0, 1)^d``; ``triangular`` is the
    product of ``2 (1 - |2u - 1|)`` over the axes. Both integrate to 1.
    """

    shape: str = "uniform"

    def __post_init__(self):
        if self.shape not in KERNELS:
            raise ValueError(f"unknown kernel {self.shape!r}; choose from {KERNELS}")

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        inside = np.all((u >= 0.0) & (u < 1.0), axis=1)
        if self.shape == "uniform":
            return inside.astype(float)
        vals = np.prod(2.0 * (1.0 - np.abs(2.0 * u - 1.0)), axis=1)
        return np.where(inside, vals, 0.0)


def _as_points(points, d: int) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, d)


def kde_estimate(points, kernel: Kernel, z, h_n: float, n: int) -> float:
    """``(1 / (n h_n)) sum_i K((Z_i - z) / h_n^(1/d))``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pts = _as_points(points, len(z))
    if len(pts) == 0:
        return 0.0
    u = (pts - z) / window_edge(h_n, len(z))
    return float(kernel(u).sum() / (n * h_n))


def kde_at_centers(points, kernel: Kernel, centers, h_n: float, n: int) -> np.ndarray:
    """:func:`kde_estimate` at every row of ``centers``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d = centers.shape[1]
    pts = _as_points(points, d)
    edge = window_edge(h_n, d)
    if d == 1:
        xs = np.sort(pts[:, 0])
        lo = np.searchsorted(xs, centers[:, 0], side="left")
        hi = np.searchsorted(xs, centers[:, 0] + edge, side="left")
        if kernel.shape == "uniform":
            return (hi - lo) / (n * h_n)
        out = np.empty(len(centers))
        for i, (a, b) in enumerate(zip(lo, hi)):
            out[i] = kernel(((xs[a:b] - centers[i, 0]) / edge)[:, None]).sum()
        return out / (n * h_n)
    return np.array([kde_estimate(pts, kernel, z, h_n, n) for z in centers])


def sup_error(points, kernel: Kernel, model: DensityModel, h_grid, h_n: float, n: int) -> float:
    """Largest ``|f_n(z) - f(z)|`` over the probe centres ``h_grid``."""
    centers = np.atleast_2d(np.asarray(h_grid, dtype=float))
    est = kde_at_centers(points, kernel, centers, h_n, n)
    return float(np.max(np.abs(est - model.pdf(centers))))


@dataclass(frozen=True)
class OccupancyExtremes:
    min_ratio: float
    max_ratio: float
    mean_ratio: float

    def __iter__(self):
        # unpacks as (min_ratio, max_ratio)
        return iter((self.min_ratio, self.max_ratio))


def window_count_extremes(points, layout: CenterLayout, schedule, model: DensityModel, n: int | None = None) -> OccupancyExtremes:
    """Extremes of ``count / (f(z_i) n h_n)`` over the windows of a packing layout.

    ``n`` defaults to the number of points; ``h_n`` comes from ``schedule``
    when one is given, otherwise from the layout's window edge.
    """
    if layout.mode != "packing":
        raise ValueError("window_count_extremes needs a packing layout")
    d = layout.centers.shape[1]
    pts = _as_points(points, d)
    n = len(pts) if n is None else n
    h_n = schedule(n) if schedule is not None else layout.edge**d
    counts = window_counts(pts, layout)
    ratios = counts / (model.pdf(layout.centers) * n * h_n)
    return OccupancyExtremes(float(ratios.min()), float(ratios.max()), float(ratios.mean()))

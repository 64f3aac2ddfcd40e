"""Rate budgets, membership and sup-norm distance to the rate sublevel set.

The distance from a grid function ``G`` to ``{x : I_p(x) <= 1/a}`` is found
by bisection on the radius ``t``. For fixed ``t`` the feasibility question is

    min  sum_i w h(x_i / w)   s.t.  |C_j(x) - C_j(G)| <= t  at every corner j,
                                     x >= 0

with ``C`` the cumulative map. In one dimension the minimiser is the taut
path through the tube (it is the same path for every convex cost whose
minimum sits at density 1), computed exactly in :func:`tube_path`. For
``d > 1`` the concave dual is maximised with L-BFGS-B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .chernoff import chernoff_h as _h_scaled
from .grid import GridError, GridFunction, rate_from_masses, rate_Ip, sup_norm_dist

__all__ = [
    "RateBudget",
    "ProjectionError",
    "gamma_contains",
    "dist_to_gamma",
    "tube_path",
    "min_rate_in_tube",
]

_RATE_SLACK = 1e-12


class ProjectionError(RuntimeError):
    """Bisection or inner solver failed; ``bracket`` holds the best (lo, hi)."""

    def __init__(self, msg: str, bracket: tuple[float, float]):
        super().__init__(f"{msg} (bracket {bracket[0]:.6g}..{bracket[1]:.6g})")
        self.bracket = bracket


@dataclass(frozen=True)
class RateBudget:
    a: float

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"rate budget a must be finite and > 0, got {self.a}")

    @property
    def level(self) -> float:
        """The sublevel ``1/a``."""
        return 1.0 / self.a


def gamma_contains(gf: GridFunction, budget: RateBudget) -> bool:
    """True iff ``I_p(gf) <= 1/a``.

    Certifies that the piecewise-uniform extension of ``gf`` (constant
    density in each cell) has ``I <= 1/a``, since ``I = I_p`` for it.
    """
    return rate_Ip(gf) <= budget.level


def tube_path(lower: np.ndarray, upper: np.ndarray, cell: float) -> np.ndarray:
    """Cell masses of the taut path through a 1-d tube.

    ``lower[j-1] <= C_j <= upper[j-1]`` for ``j = 1..N`` with ``C_0 = 0`` and a
    free right end. The path is built in coordinates relative to the
    density-1 line, where it prefers to be flat: from each anchor it takes
    the flattest slope allowed by the funnel of bounds seen so far, and
    re-anchors on the bound that closes the funnel.
    """
    n = len(lower)
    j = np.arange(1, n + 1, dtype=float)
    lo = np.asarray(lower, dtype=float) - cell * j
    hi = np.asarray(upper, dtype=float) - cell * j
    if np.any(lo > hi):
        raise GridError("empty tube")
    path = np.empty(n + 1)
    path[0] = 0.0
    k, v = 0, 0.0
    while k < n:
        steps = np.arange(1, n - k + 1, dtype=float)
        a = (lo[k:] - v) / steps
        b = (hi[k:] - v) / steps
        a_run = np.maximum.accumulate(a)
        b_run = np.minimum.accumulate(b)
        crossed = np.nonzero(a_run > b_run)[0]
        if crossed.size:
            c = int(crossed[0])
            if a[c] == a_run[c] and a[c] > b_run[c]:
                # a lower bound closed the funnel: bend on the tightest upper bound before it
                seg = b[:c]
                idx = int(np.flatnonzero(seg == seg.min())[-1])
                slope, anchor_val = seg[idx], hi[k + idx]
            else:
                seg = a[:c]
                idx = int(np.flatnonzero(seg == seg.max())[-1])
                slope, anchor_val = seg[idx], lo[k + idx]
        else:
            s_lo, s_hi = a_run[-1], b_run[-1]
            if s_lo <= 0.0 <= s_hi:
                path[k + 1 :] = v
                break
            if s_hi < 0.0:
                idx = int(np.flatnonzero(b == s_hi)[-1])
                slope, anchor_val = s_hi, hi[k + idx]
            else:
                idx = int(np.flatnonzero(a == s_lo)[-1])
                slope, anchor_val = s_lo, lo[k + idx]
        stop = k + idx + 1
        path[k + 1 : stop] = v + slope * np.arange(1, idx + 1)
        path[stop] = anchor_val
        k, v = stop, anchor_val
    x = np.diff(path) + cell
    return np.clip(x, 0.0, None)


def _dual_min_rate(lower: np.ndarray, upper: np.ndarray, cell: float, stop_above: float | None = None):
    """Max of the concave dual of the tube problem for any ``d``.

    Returns ``(value, masses, converged)``. ``value`` is a lower bound on the
    primal minimum at every iterate, so the solve can stop early once it
    exceeds ``stop_above``.
    """
    shape = lower.shape
    size = lower.size
    axes = tuple(range(lower.ndim))
    L = lower.ravel()
    U = upper.ravel()

    def adjoint(lam):
        out = lam.reshape(shape)
        for ax in axes:
            out = np.flip(np.cumsum(np.flip(out, axis=ax), axis=ax), axis=ax)
        return out

    def forward(x):
        out = x
        for ax in axes:
            out = np.cumsum(out, axis=ax)
        return out.ravel()

    class _Early(Exception):
        pass

    best = {"val": -np.inf, "x": None}

    def neg_dual(z):
        nu, mu = z[:size], z[size:]
        theta = adjoint(nu - mu)
        ex = np.exp(np.minimum(theta, 700.0))
        x = cell * ex
        val = float(np.sum(cell - x) + nu @ L - mu @ U)
        if val > best["val"]:
            best["val"], best["x"] = val, x
        if stop_above is not None and val > stop_above + _RATE_SLACK:
            raise _Early
        cx = forward(x)
        grad = np.concatenate([cx - L, U - cx])
        return -val, grad

    z = np.zeros(2 * size)
    converged = False
    try:
        for _ in range(8):
            res = minimize(
                neg_dual,
                z,
                jac=True,
                method="L-BFGS-B",
                bounds=[(0.0, None)] * (2 * size),
                options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30},
            )
            z = res.x
            x = cell * np.exp(np.minimum(adjoint(z[:size] - z[size:]), 700.0))
            cx = forward(x)
            # gap = complementary slackness residual; violation = primal infeasibility
            violation = float(max(np.max(L - cx), np.max(cx - U), 0.0))
            gap = float(np.sum(cell * _h_scaled(x / cell))) + float(res.fun)
            if violation < 1e-6 and gap < 1e-6:
                converged = True
                break
    except _Early:
        converged = True
    return best["val"], best["x"], converged


def min_rate_in_tube(center: GridFunction, t: float, method: str = "auto", stop_above: float | None = None):
    """Smallest ``I_p`` over grid functions within corner sup-distance ``t`` of ``center``.

    Returns ``(value, masses)``; ``masses`` is the minimiser (approximate for
    the dual method).
    """
    grid = center.grid
    cum = center.cumulative()[(slice(1, None),) * grid.d]
    lower, upper = cum - t, cum + t
    if method == "auto":
        method = "tube" if grid.d == 1 else "dual"
    if method == "tube":
        if grid.d != 1:
            raise GridError("tube method is one-dimensional")
        x = tube_path(lower, upper, grid.cell_volume)
        return float(rate_from_masses(x, grid.cell_volume)), x
    if method == "dual":
        val, x, ok = _dual_min_rate(np.maximum(lower, 0.0), upper, grid.cell_volume, stop_above)
        if not ok:
            raise ProjectionError("dual solver did not converge", (t, t))
        return val, x.reshape(grid.shape)
    raise ValueError(f"unknown method {method!r}")


def dist_to_gamma(
    gf: GridFunction,
    budget: RateBudget,
    tol: float = 1e-6,
    method: str = "auto",
    max_iter: int = 200,
) -> float:
    """Corner sup-norm distance from ``gf`` to ``{x : I_p(x) <= 1/a}``, to within ``tol``.

    Bisection on the radius; the upper end of the bracket is always
    feasible and is what gets returned.
    """
    if tol < 1e-6:
        raise ValueError("tol must be >= 1e-6")
    level = budget.level
    if rate_Ip(gf) <= level:
        return 0.0
    identity = GridFunction.linear(gf.grid, 1.0)  # I_p = 0, inside every budget

    lo, hi = 0.0, min(sup_norm_dist(gf, identity), gf.total_mass + 1.0)
    for _ in range(max_iter):
        if hi - lo < tol:
            return hi
        mid = 0.5 * (lo + hi)
        val, _ = min_rate_in_tube(gf, mid, method=method, stop_above=level)
        if val <= level + _RATE_SLACK:
            hi = mid
        else:
            lo = mid
    raise ProjectionError("bisection did not converge", (lo, hi))


def dist_to_gamma_1d(masses: np.ndarray, level: float, cell: float, tol: float = 1e-6, start: float | None = None) -> float:
    """Array-level one-dimensional distance, skipping the dataclass overhead.

    With ``start`` given, returns ``start`` straight away whenever the
    distance is at most ``start`` (used to maximise over many windows).
    """
    masses = np.asarray(masses, dtype=float)
    if float(rate_from_masses(masses, cell)) <= level:
        return 0.0
    cum = np.cumsum(masses)

    def feasible(t):
        x = tube_path(cum - t, cum + t, cell)
        return float(rate_from_masses(x, cell)) <= level + _RATE_SLACK

    if start is not None and feasible(start):
        return start
    j = np.arange(1, len(masses) + 1) * cell
    lo = 0.0 if start is None else start
    hi = min(float(np.max(np.abs(cum - j))), float(cum[-1]) + 1.0)
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi

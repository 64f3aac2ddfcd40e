"""Chernoff function, Poisson log-MGF duality and Poisson tail probabilities.

Values of the Chernoff function live in the extended half-line; +infinity is
represented by ``math.inf`` (scalars) or ``numpy.inf`` (arrays).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, xlogy

__all__ = [
    "chernoff_h",
    "poisson_log_mgf",
    "legendre_check",
    "h_root",
    "poisson_tail_exact",
    "poisson_chernoff_bound",
]

# exp(u) overflows float64 just above this
_EXP_MAX = 709.782712893384
_TAIL_LAMBDA_MAX = 1e4


def chernoff_h(x):
    """Chernoff function ``h(x) = x log x - x + 1``.

    ``h(0) = 1`` and ``h(x) = inf`` for ``x < 0``. Accepts scalars or arrays;
    scalars give back a Python float.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if x < 0.0:
            return math.inf
        if x == 0.0:
            return 1.0
        return x * math.log(x) - x + 1.0
    x = np.asarray(x, dtype=float)
    out = xlogy(x, x) - x + 1.0
    return np.where(x < 0.0, np.inf, out)


def poisson_log_mgf(u: float) -> float:
    """Log moment generating function of Poisson(1) centred at 0: ``e^u - 1``."""
    u = float(u)
    if u > _EXP_MAX:
        raise OverflowError(f"exp({u}) overflows double precision")
    return math.expm1(u)


def legendre_check(z: float, search_bound: float = 50.0) -> float:
    """Numerically evaluate ``sup_u z*u - (e^u - 1)`` over ``|u| <= search_bound``.

    The maximiser is ``log z``, so the bound must contain it. The returned
    value agrees with ``chernoff_h(z)`` to well under 1e-6.
    """
    if not z > 0:
        raise ValueError("legendre_check needs z > 0")
    u_star = math.log(z)
    if abs(u_star) >= search_bound:
        raise ValueError(f"bound too small: |log z| = {abs(u_star):.6g} >= {search_bound}")
    bound = min(float(search_bound), _EXP_MAX)

    res = minimize_scalar(
        lambda u: -(z * u - math.expm1(u)),
        bounds=(-bound, bound),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    return float(-res.fun)


def h_root(y: float, branch: str = "lower", tol: float = 1e-10) -> float:
    """Solve ``h(M) = y`` by bisection.

    ``branch='lower'`` returns the root in [0, 1] (needs ``0 < y <= 1``),
    ``branch='upper'`` the root in [1, inf).
    """
    if not y > 0:
        raise ValueError(f"h_root domain error: y must be > 0, got {y}")
    if branch == "lower":
        if y > 1.0:
            raise ValueError(f"h_root domain error: lower branch needs y <= 1, got {y}")
        lo, hi = 0.0, 1.0  # h decreasing here
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if chernoff_h(mid) > y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi) if y < 1.0 else 0.0
    if branch == "upper":
        lo, hi = 1.0, 2.0
        while chernoff_h(hi) <= y:
            lo, hi = hi, 2.0 * hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if chernoff_h(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    raise ValueError(f"unknown branch {branch!r}")


_STIRLING_SERIES = (1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188)
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _stirling_error(n: np.ndarray) -> np.ndarray:
    """``log n! - log(sqrt(2 pi n) (n/e)^n)`` for integers ``n >= 1``."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15
    ns = n[small]
    out[small] = gammaln(ns + 1.0) - (ns + 0.5) * np.log(ns) + ns - _HALF_LOG_2PI
    nb = n[~small]
    nn = nb * nb
    s0, s1, s2, s3, s4 = _STIRLING_SERIES
    out[~small] = (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / nb
    return out


def _deviance(x: np.ndarray, lam: float) -> np.ndarray:
    """``x log(x / lam) + lam - x`` without cancellation when ``x`` is near ``lam``."""
    x = np.asarray(x, dtype=float)
    out = x * np.log(x / lam) + lam - x
    near = np.abs(x - lam) < 0.1 * (x + lam)
    xn = x[near]
    v = (xn - lam) / (xn + lam)
    acc = (xn - lam) * v
    term = 2.0 * xn * v
    for j in range(1, 40):
        term = term * v * v
        acc = acc + term / (2 * j + 1)
    out[near] = acc
    return out


def _pmf(j: np.ndarray, lam: float) -> np.ndarray:
    # saddle-point form: relative error near machine precision even for large lam
    j = np.asarray(j, dtype=float)
    out = np.empty_like(j)
    zero = j == 0
    out[zero] = math.exp(-lam)
    jp = j[~zero]
    out[~zero] = np.exp(-_stirling_error(jp) - _deviance(jp, lam)) / np.sqrt(2 * math.pi * jp)
    return out


def _direct_upper(lam: float, k: int) -> float:
    # k above the mode: terms decrease monotonically from j = k
    span = int(40.0 * math.sqrt(lam) + 60.0)
    return math.fsum(_pmf(np.arange(k, k + span + 1), lam))


def _direct_lower(lam: float, k: int) -> float:
    return math.fsum(_pmf(np.arange(0, k + 1), lam))


def poisson_tail_exact(lam: float, k: int, side: str = "upper") -> float:
    """Exact Poisson tail, ``P(X >= k)`` (upper) or ``P(X <= k)`` (lower).

    The tail on the far side of the mode is summed directly (saddle-point
    probabilities, compensated summation) so tiny probabilities keep full
    relative accuracy; the near side is taken as a complement.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if lam > _TAIL_LAMBDA_MAX:
        raise ValueError(f"lambda={lam} outside the exact-summation domain (<= {_TAIL_LAMBDA_MAX:g})")
    k = int(k)
    if k < 0:
        raise ValueError("k must be a nonnegative integer")
    mode = math.floor(lam)
    if side == "upper":
        if k == 0:
            return 1.0
        if k > mode:
            return min(1.0, _direct_upper(lam, k))
        return max(0.0, 1.0 - _direct_lower(lam, k - 1))
    if side == "lower":
        if k < mode:
            return min(1.0, _direct_lower(lam, k))
        return max(0.0, 1.0 - _direct_upper(lam, k + 1))
    raise ValueError(f"unknown side {side!r}")


def poisson_chernoff_bound(lam: float, t: float, side: str = "upper") -> float:
    """Chernoff bound ``exp(-lam * h(t / lam))`` on ``P(X >= t)`` or ``P(X <= t)``."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if side == "upper" and t < lam:
        raise ValueError(f"domain error: upper-tail bound needs t >= lambda ({t} < {lam})")
    if side == "lower" and t > lam:
        raise ValueError(f"domain error: lower-tail bound needs t <= lambda ({t} > {lam})")
    if side not in ("upper", "lower"):
        raise ValueError(f"unknown side {side!r}")
    return math.exp(-lam * chernoff_h(t / lam))

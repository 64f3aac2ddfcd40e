"""Density models, reproducible random streams, bandwidth schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1


# -- seeds ------------------------------------------------------------------

def mix64(z: int) -> int:
    """SplitMix64 finaliser (a bijection on 64-bit integers)."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, replicate: int, center: int) -> int:
    """64-bit stream seed for one (replicate, center) task.

    ``mix64(master ^ mix64((replicate << 32) | center))``; both indices must
    fit in 32 bits, which makes the map injective for a fixed master seed.
    """
    if not (0 <= replicate < 1 << 32 and 0 <= center < 1 << 32):
        raise ValueError("replicate and center indices must fit in 32 bits")
    tag = mix64((replicate << 32) | center)
    return mix64((int(master_seed) & MASK64) ^ tag)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def seed(self, replicate: int, center: int = 0) -> int:
        return derive_seed(self.master_seed, replicate, center)

    def generator(self, replicate: int, center: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed(replicate, center)))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), 53-bit resolution."""
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) * (1.0 / (1 << 53))


# -- density models ---------------------------------------------------------

@dataclass(frozen=True)
class DensityModel:
    """Product density on the open box ``O = (low, high)^d``.

    Subclasses give the one-dimensional marginal density, CDF and inverse
    CDF; the joint density is their product.
    """

    d: int = 1
    low: float = field(default=0.0, init=False)
    high: float = field(default=1.0, init=False)
    name: str = field(default="", init=False)

    def marginal_pdf(self, s):
        raise NotImplementedError

    def marginal_cdf(self, s):
        raise NotImplementedError

    def marginal_ppf(self, u):
        raise NotImplementedError

    def pdf(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((pts > self.low) & (pts < self.high), axis=1)
        vals = np.prod(self.marginal_pdf(np.clip(pts, self.low, self.high)), axis=1)
        return np.where(inside, vals, 0.0)

    def box_prob(self, lo, hi) -> np.ndarray:
        """``P(Z in [lo, hi))`` for boxes given row-wise (or a single box)."""
        lo = np.clip(np.atleast_2d(lo), self.low, self.high)
        hi = np.clip(np.atleast_2d(hi), self.low, self.high)
        return np.prod(np.maximum(self.marginal_cdf(hi) - self.marginal_cdf(lo), 0.0), axis=1)

    def contains_box(self, lo, hi) -> bool:
        """Whether the closed box ``[lo, hi]`` sits inside the open domain."""
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return bool(np.all(lo > self.low) and np.all(hi < self.high))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` i.i.d. points, shape ``(n, d)``, by per-coordinate CDF inversion."""
        if n < 0:
            raise ValueError("n must be >= 0")
        return self.marginal_ppf(open_uniform(rng, (n, self.d)))

    def sample_in_box(self, n: int, lo, hi, rng: np.random.Generator) -> np.ndarray:
        """``n`` points from the law of ``Z`` conditioned on ``[lo, hi)``."""
        f_lo = self.marginal_cdf(np.asarray(lo, dtype=float))
        f_hi = self.marginal_cdf(np.asarray(hi, dtype=float))
        u = open_uniform(rng, (n, self.d))
        pts = self.marginal_ppf(f_lo + u * (f_hi - f_lo))
        # keep the half-open convention even after rounding
        return np.minimum(np.maximum(pts, lo), np.nextafter(np.asarray(hi, dtype=float), -np.inf))


@dataclass(frozen=True)
class UniformModel(DensityModel):
    name: str = field(default="uniform", init=False)

    def marginal_pdf(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def marginal_cdf(self, s):
        return np.clip(np.asarray(s, dtype=float), 0.0, 1.0)

    def marginal_ppf(self, u):
        return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class TiltedModel(DensityModel):
    """Per-coordinate density ``(1 + s) / 1.5`` on (0, 1)."""

    name: str = field(default="tilted", init=False)

    def marginal_pdf(self, s):
        return (1.0 + np.asarray(s, dtype=float)) / 1.5

    def marginal_cdf(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return (s + 0.5 * s * s) / 1.5

    def marginal_ppf(self, u):
        u = np.asarray(u, dtype=float)
        # root of s^2/2 + s - 1.5u = 0, written to avoid cancellation near 0
        return 3.0 * u / (1.0 + np.sqrt(1.0 + 3.0 * u))


MODELS = {"uniform": UniformModel, "tilted": TiltedModel}


def make_model(name: str, d: int = 1) -> DensityModel:
    try:
        return MODELS[name](d=d)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


def sample(model: DensityModel, n: int, rng: np.random.Generator) -> np.ndarray:
    return model.sample(n, rng)


def poisson_variate(lam: float, rng: np.random.Generator, size=None):
    """Exact Poisson(lam) draws (NumPy: inversion for small means, PTRS otherwise)."""
    if lam < 0 or lam >= 2**31:
        raise ValueError(f"lambda must be in [0, 2^31), got {lam}")
    if lam == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    out = rng.poisson(lam, size=size)
    return int(out) if size is None else out


# -- bandwidths ---------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthSchedule:
    """``h_n = c log n / n`` for ``n >= n_min``.

    With ``n_min`` omitted it is the smallest ``n >= 3`` giving ``h_n < 1``.
    """

    c: float
    n_min: int | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if self.n_min is None:
            n = 3
            while self.c * math.log(n) / n >= 1.0:
                n += 1
            object.__setattr__(self, "n_min", n)
        if self.n_min < 3:
            raise ValueError("n_min must be >= 3")
        if self.c * math.log(self.n_min) / self.n_min >= 1.0:
            raise ValueError(f"h_n >= 1 at n_min={self.n_min} for c={self.c}")

    def __call__(self, n: int) -> float:
        return bandwidth(self, n)

    def epsilon(self, n: int, f_z: float) -> float:
        """Large-deviation speed ``1 / (c f(z) log n)``."""
        return 1.0 / (self.c * f_z * math.log(n))


def bandwidth(schedule: BandwidthSchedule, n: int) -> float:
    if n < schedule.n_min:
        raise ValueError(f"n={n} below n_min={schedule.n_min}")
    return schedule.c * math.log(n) / n


def blocking_subsequence(k_min: int, k_max: int, limit: int = 2**31) -> list[tuple[int, int, range]]:
    """``[(k, n_k, N_k)]`` with ``n_k = floor(exp(k / log k))``.

    ``N_k = {n_(k-1)+1, ..., n_k}`` for ``k > k_min``; the first entry gets an
    empty block, so the blocks tile ``{n_(k_min)+1, ..., n_(k_max)}``. Stops
    at the last ``k`` with ``n_k <= limit``.
    """
    if k_min < 3:
        raise ValueError("k_min must be >= 3")
    out = []
    prev = None
    for k in range(k_min, k_max + 1):
        n_k = math.floor(math.exp(k / math.log(k)))
        if n_k > limit:
            break
        block = range(n_k + 1, n_k + 1) if prev is None else range(prev + 1, n_k + 1)
        out.append((k, n_k, block))
        prev = n_k
    return out

"""Config-driven Monte Carlo experiments.

Every runner returns a :class:`ResultTable`. Randomness comes only from
:class:`~incrlaw.sampling.SeedSpec` streams keyed by (replicate or batch,
stream tag), and rows are sorted before they are returned, so results do
not depend on how many worker processes ran the tasks.

Stream tags: sample paths use tag 0; Monte Carlo batches use
``8 * (index of n in the ladder) + purpose``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import DyadicGrid, GridError, GridFunction, rate_from_masses, rate_Ip
from .increments import (
    center_layout,
    oscillation_from_counts,
    packing_counts,
    poissonized_cell_counts,
    window_edge,
)
from .kde import Kernel, KERNELS, sup_error, window_count_extremes
from .projection import RateBudget, dist_to_gamma, dist_to_gamma_1d, gamma_contains, min_rate_in_tube
from .sampling import MODELS, BandwidthSchedule, SeedSpec, make_model

KINDS = ("rate", "limit-law", "uldp-slope", "product-rate", "poissonization", "oscillation", "kde-gap")

_PURPOSE_ULDP, _PURPOSE_PRODUCT, _PURPOSE_FIXED, _PURPOSE_POISSON, _PURPOSE_OSC = 1, 2, 3, 4, 5

_WILSON_Z = 1.959963984540054


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: str
    model: str = "uniform"
    d: int = 1
    c: float = 2.0
    n_ladder: list = field(default_factory=lambda: [1024])
    p: int = 4
    p_eval: int = 8
    p_ladder: list = field(default_factory=lambda: [1, 2, 3, 4])
    h_box: list | None = None
    delta: float = 1.0
    z0: list | None = None
    replicates: int = 1
    batch_size: int = 10000
    master_seed: int = 0
    output: str | None = None
    tol: float = 1e-6
    mode: str = "sup-inf"
    target_slope: float | None = None
    target: dict | None = None
    eps_ball: float = 0.1
    thresholds: list = field(default_factory=lambda: [0.8, 0.8])
    tau: float = 0.5
    kernel: str = "uniform"
    a: float | None = None
    grid_function: dict | None = None

    def __post_init__(self):
        if self.h_box is None:
            self.h_box = [[0.05, 0.95]] * self.d
        if self.z0 is None:
            self.z0 = [0.5] * self.d
        self.validate()

    # per-kind checks run here so a bad file fails before any sampling
    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if not 1 <= self.d <= 3:
            raise ConfigError("d must be 1, 2 or 3")
        if not self.c > 0:
            raise ConfigError("c must be > 0")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.master_seed < 1 << 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.kind == "rate":
            if self.grid_function is None or self.a is None:
                raise ConfigError("rate needs grid_function and a")
            return
        ladder = list(self.n_ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("n_ladder must be nonempty and strictly increasing")
        schedule = self.schedule()
        if ladder[0] < schedule.n_min:
            raise ConfigError(f"n_ladder starts below n_min={schedule.n_min}")
        try:
            DyadicGrid(self.d, self.p)
        except GridError as exc:
            raise ConfigError(str(exc)) from None
        box = np.asarray(self.h_box, dtype=float)
        if box.shape != (self.d, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ConfigError("h_box must list d intervals [lo, hi] with lo < hi")
        edge = window_edge(self.delta * schedule(ladder[0]), self.d)
        if np.any(box[:, 0] <= 0.0) or np.any(box[:, 1] >= 1.0):
            raise ConfigError("h_box must sit strictly inside the open unit cube")
        if np.any(box[:, 1] - box[:, 0] < edge):
            raise ConfigError(f"h_box is narrower than one window ({edge:.4g}) at n={ladder[0]}")
        z0 = np.asarray(self.z0, dtype=float)
        if z0.shape != (self.d,) or np.any(z0 <= 0.0) or np.any(z0 + window_edge(schedule(ladder[0]), self.d) >= 1.0):
            raise ConfigError("z0 and its window must sit inside the open unit cube")
        if self.kind == "limit-law" and self.mode not in ("sup-inf", "inf-target"):
            raise ConfigError(f"unknown limit-law mode {self.mode!r}")
        if self.kind == "kde-gap" and self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.kind == "product-rate":
            if self.d != 1 or self.p != 1:
                raise ConfigError("product-rate uses the two cells of the d=1, p=1 grid")
            if len(self.thresholds) != 2:
                raise ConfigError("thresholds must be a pair")
        if self.kind == "oscillation":
            if any(not 0 <= q < self.p_eval for q in self.p_ladder):
                raise ConfigError("every p in p_ladder must be below p_eval")
            try:
                DyadicGrid(self.d, self.p_eval)
            except GridError as exc:
                raise ConfigError(str(exc)) from None
        if self.kind == "poissonization" and self.replicates % self.batch_size:
            raise ConfigError("replicates must be a multiple of batch_size")
        scales = [normalization_scale(self, n).max for n in ladder]
        if any(b >= a for a, b in zip(scales, scales[1:])):
            raise ConfigError("normalisation scale must decrease along n_ladder")

    def schedule(self) -> BandwidthSchedule:
        return BandwidthSchedule(self.c)

    def density(self):
        return make_model(self.model, self.d)

    def target_function(self, p: int | None = None) -> GridFunction:
        grid = DyadicGrid(self.d, self.p if p is None else p)
        if self.target is not None:
            try:
                gf = GridFunction.from_dict(self.target)
            except (GridError, KeyError, TypeError) as exc:
                raise ConfigError(f"bad target: {exc}") from None
            if gf.grid != grid:
                raise ConfigError(f"target grid {gf.grid} does not match {grid}")
            return gf
        if self.target_slope is None:
            raise ConfigError("this experiment needs target or target_slope")
        if self.target_slope < 0:
            raise ConfigError("target_slope must be >= 0")
        return GridFunction.linear(grid, self.target_slope)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class NormalizationScale:
    """Per-centre speeds ``1 / (c f(z_i) log n)``."""

    n: int
    eps: np.ndarray

    @property
    def max(self) -> float:
        return float(np.max(self.eps))


def normalization_scale(cfg: ExperimentConfig, n: int) -> NormalizationScale:
    model = cfg.density()
    if cfg.kind in ("limit-law", "kde-gap"):
        centers = center_layout(cfg.h_box, cfg.schedule(), n, "packing").centers
    else:
        centers = np.atleast_2d(cfg.z0)
    return NormalizationScale(n, 1.0 / (cfg.c * model.pdf(centers) * math.log(n)))


# -- results ------------------------------------------------------------------------------

@dataclass
class ResultTable:
    experiment: str
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = [tuple(_plain(v) for v in row) for row in self.rows]
        self.summary = _plain(self.summary)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self, header: str | None = None) -> str:
        """CSV text; ``header`` (e.g. a timestamp) goes first as a ``#`` line."""
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self, header: str | None = None) -> str:
        doc = {"experiment": self.experiment}
        if header:
            doc["generated"] = header
        doc["columns"] = list(self.columns)
        doc["rows"] = [dict(zip(self.columns, row)) for row in self.rows]
        doc["summary"] = self.summary
        return json.dumps(doc, indent=2) + "\n"


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def wilson_interval(k: int, n: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if n <= 0:
        raise ValueError("n must be > 0")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def log_slope(ns, probs) -> dict:
    """Unweighted least squares of ``log p`` on ``log n`` with residuals."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(probs, dtype=float))
    if len(x) < 2:
        return {"slope": None, "intercept": None, "r2": None, "residuals": [0.0] * len(x)}
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "residuals": [float(r) for r in resid]}


def _pool_map(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _batches(total: int, size: int) -> list[int]:
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def _window_table(cfg: ExperimentConfig, pts: np.ndarray, n: int):
    model, schedule = cfg.density(), cfg.schedule()
    layout = center_layout(cfg.h_box, schedule, n, "packing", domain=model)
    grid = DyadicGrid(cfg.d, cfg.p)
    f = model.pdf(layout.centers)
    table = packing_counts(pts, layout, grid) / (cfg.c * f * math.log(n))[:, None]
    return layout, grid, table, f


def _cumulative_rows(table: np.ndarray, grid: DyadicGrid) -> np.ndarray:
    out = table.reshape((-1,) + grid.shape)
    for ax in range(1, grid.d + 1):
        out = np.cumsum(out, axis=ax)
    return out.reshape(len(table), -1)


# -- limit laws ---------------------------------------------------------------------------------

def _sup_inf(table: np.ndarray, grid: DyadicGrid, levels: np.ndarray, tol: float) -> float:
    """Largest distance to the rate sublevel set over the rows of ``table``.

    Rows are visited by decreasing rate excess and each one only has to beat
    the running maximum, which is a single feasibility check when it cannot.
    """
    w = grid.cell_volume
    excess = rate_from_masses(table, w) - levels
    best = 0.0
    for i in np.argsort(-excess, kind="stable"):
        if excess[i] <= 0:
            break
        if grid.d == 1:
            best = dist_to_gamma_1d(table[i], levels[i], w, tol=tol, start=best)
            continue
        gf = GridFunction(grid, table[i])
        if best > 0 and min_rate_in_tube(gf, best, stop_above=levels[i])[0] <= levels[i]:
            continue
        best = max(best, dist_to_gamma(gf, RateBudget(1.0 / levels[i]), tol=tol))
    return best


def _limit_law_task(args):
    cfg_dict, r = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seeds = SeedSpec(cfg.master_seed)
    model = cfg.density()
    path = model.sample(max(cfg.n_ladder), seeds.generator(r, 0))
    if cfg.mode == "inf-target":
        target_cum = _cumulative_rows(cfg.target_function().masses.reshape(1, -1), DyadicGrid(cfg.d, cfg.p))[0]
    out = []
    for n in cfg.n_ladder:
        layout, grid, table, f = _window_table(cfg, path[:n], n)
        if cfg.mode == "sup-inf":
            stat = _sup_inf(table, grid, 1.0 / (cfg.c * f), cfg.tol)
        else:
            stat = float(np.min(np.max(np.abs(_cumulative_rows(table, grid) - target_cum), axis=1)))
        # corner sups under-read the full sup by at most the largest single-cell rise
        cell_rise = float(np.max(oscillation_from_counts(table, grid, cfg.p, 1.0)))
        out.append((n, r, seeds.seed(r, 0), layout.count, stat, cell_rise))
    return out


def _run_limit_law(cfg: ExperimentConfig, workers: int, stat_name: str) -> ResultTable:
    tasks = [(cfg.to_dict(), r) for r in range(cfg.replicates)]
    rows = sorted(row for part in _pool_map(_limit_law_task, tasks, workers) for row in part)
    table = ResultTable(f"limit-law-{cfg.mode}", ("n", "replicate", "seed", "windows", stat_name, "cell_osc_bound"), rows)
    table.summary["median"] = {
        str(n): float(np.median([r[4] for r in rows if r[0] == n])) for n in cfg.n_ladder
    }
    return table


def run_limit_law_sup_inf(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """``D_n``: max over packing centres of the distance to ``Gamma_(c f(z))``.

    Each replicate is one sample path; the rung ``n`` uses its first ``n`` points.
    """
    cfg = dataclasses.replace(cfg, mode="sup-inf")
    return _run_limit_law(cfg, workers, "D_n")


def run_limit_law_inf_target(cfg: ExperimentConfig, target: GridFunction | None = None, workers: int = 1) -> ResultTable:
    """Min over packing centres of the sup-distance from the increment to ``target``."""
    if target is not None:
        cfg = dataclasses.replace(cfg, target=target.to_dict(), target_slope=None)
    cfg = dataclasses.replace(cfg, mode="inf-target")
    gf = cfg.target_function()
    f0 = float(cfg.density().pdf(np.asarray(cfg.z0))[0])
    if not gamma_contains(gf, RateBudget(cfg.c * f0)):
        raise ConfigError("target lies outside the rate budget c f(z0)")
    return _run_limit_law(cfg, workers, "inf_distance")


# -- ULDP slope ----------------------------------------------------------------------------------

def _poisson_block(cfg: ExperimentConfig, j: int, b: int, size: int, purpose: int, grid: DyadicGrid):
    model, n = cfg.density(), cfg.n_ladder[j]
    rng = SeedSpec(cfg.master_seed).generator(b, 8 * j + purpose)
    z0 = np.asarray(cfg.z0, dtype=float)
    counts = poissonized_cell_counts(model, n, z0, cfg.schedule()(n), grid, size, rng)
    norm = cfg.c * float(model.pdf(z0)[0]) * math.log(n)
    return counts, norm


def _uldp_task(args):
    cfg_dict, j, b, size = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    grid = DyadicGrid(cfg.d, cfg.p)
    counts, norm = _poisson_block(cfg, j, b, size, _PURPOSE_ULDP, grid)
    target_cum = _cumulative_rows(cfg.target_function().masses.reshape(1, -1), grid)[0]
    dist = np.max(np.abs(_cumulative_rows(counts / norm, grid) - target_cum), axis=1)
    return j, b, int(np.count_nonzero(dist < cfg.eps_ball))


def _mc_tasks(cfg: ExperimentConfig) -> list:
    return [
        (cfg.to_dict(), j, b, size)
        for j in range(len(cfg.n_ladder))
        for b, size in enumerate(_batches(cfg.replicates, cfg.batch_size))
    ]


def run_uldp_slope(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Frequency of ``{||Delta Pi_n - target|| < eps_ball}`` per ``n`` and its log-log slope.

    Ladder rungs with no successes are dropped from the regression and
    flagged (``kept = 0``).
    """
    cfg.target_function()
    hits = np.zeros(len(cfg.n_ladder), dtype=np.int64)
    for j, _, k in _pool_map(_uldp_task, _mc_tasks(cfg), workers):
        hits[j] += k
    kept = [j for j in range(len(hits)) if hits[j] > 0]
    fit = log_slope([cfg.n_ladder[j] for j in kept], [hits[j] / cfg.replicates for j in kept])
    resid = dict(zip(kept, fit.pop("residuals")))
    rows = []
    for j, n in enumerate(cfg.n_ladder):
        lo, hi = wilson_interval(int(hits[j]), cfg.replicates)
        rows.append((n, cfg.replicates, int(hits[j]), hits[j] / cfg.replicates, lo, hi, int(j in resid), resid.get(j, "")))
    fit["dropped_n"] = [cfg.n_ladder[j] for j in range(len(hits)) if j not in resid]
    columns = ("n", "replicates", "successes", "p_hat", "wilson_low", "wilson_high", "kept", "residual")
    return ResultTable("uldp-slope", columns, rows, fit)


# -- product rate ----------------------------------------------------------------------------------

def _product_task(args):
    cfg_dict, j, b, size = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    counts, norm = _poisson_block(cfg, j, b, size, _PURPOSE_PRODUCT, DyadicGrid(1, 1))
    masses = counts / norm
    e1 = masses[:, 0] >= cfg.thresholds[0]
    e2 = masses[:, 1] >= cfg.thresholds[1]
    return j, int(e1.sum()), int(e2.sum()), int((e1 & e2).sum())


def run_product_rate_check(cfg: ExperimentConfig, thresholds=None, workers: int = 1) -> ResultTable:
    """Slope of the joint tail of two disjoint cells against the sum of the marginal slopes."""
    if thresholds is not None:
        cfg = dataclasses.replace(cfg, thresholds=list(thresholds))
    model = cfg.density()
    z0 = np.asarray(cfg.z0, dtype=float)
    for n in cfg.n_ladder:
        edge = cfg.schedule()(n)
        for i, a in enumerate(cfg.thresholds):
            lo = z0 + i * edge / 2
            mean = n * float(model.box_prob(lo, lo + edge / 2)[0]) / (cfg.c * float(model.pdf(z0)[0]) * math.log(n))
            if a < mean:
                raise ConfigError(f"threshold {a} is below the cell mean {mean:.4g} at n={n}")
    acc = np.zeros((len(cfg.n_ladder), 3), dtype=np.int64)
    for j, k1, k2, k12 in _pool_map(_product_task, _mc_tasks(cfg), workers):
        acc[j] += (k1, k2, k12)
    R = cfg.replicates
    rows, kept = [], []
    for j, n in enumerate(cfg.n_ladder):
        p1, p2, p12 = acc[j] / R
        prod = p1 * p2
        se = math.sqrt(prod * (1 - prod) / R) if 0 < prod < 1 else 0.0
        indep_z = (p12 - prod) / se if se > 0 else 0.0
        ok = bool(np.all(acc[j] > 0))
        if ok:
            kept.append(j)
        rows.append((n, R, int(acc[j][0]), int(acc[j][1]), int(acc[j][2]), p1, p2, p12, prod, indep_z, int(ok)))
    ns = [cfg.n_ladder[j] for j in kept]
    s1 = log_slope(ns, [rows[j][5] for j in kept])["slope"]
    s2 = log_slope(ns, [rows[j][6] for j in kept])["slope"]
    s12 = log_slope(ns, [rows[j][7] for j in kept])["slope"]
    summary = {
        "slope_m1": s1,
        "slope_m2": s2,
        "slope_joint": s12,
        "slope_sum": None if s1 is None else s1 + s2,
        "difference": None if s1 is None else s12 - (s1 + s2),
        "dropped_n": [n for j, n in enumerate(cfg.n_ladder) if j not in kept],
    }
    columns = ("n", "replicates", "hits_m1", "hits_m2", "hits_joint", "p_m1", "p_m2", "p_joint", "product", "indep_z", "kept")
    return ResultTable("product-rate", columns, rows, summary)


# -- poissonization ----------------------------------------------------------------------------------

def _misses_ball(table: np.ndarray, grid: DyadicGrid, target_cum: np.ndarray, eps: float) -> bool:
    return bool(np.all(np.max(np.abs(_cumulative_rows(table, grid) - target_cum), axis=1) >= eps))


def _poissonization_task(args):
    cfg_dict, j, b, size = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    n, model = cfg.n_ladder[j], cfg.density()
    seeds = SeedSpec(cfg.master_seed)
    grid = DyadicGrid(cfg.d, cfg.p)
    target_cum = _cumulative_rows(cfg.target_function().masses.reshape(1, -1), grid)[0]
    fixed_rng = seeds.generator(b, 8 * j + _PURPOSE_FIXED)
    hits_fixed = 0
    for _ in range(size):
        _, _, table, _ = _window_table(cfg, model.sample(n, fixed_rng), n)
        hits_fixed += _misses_ball(table, grid, target_cum, cfg.eps_ball)
    # Poissonized: counts in the disjoint cells of disjoint windows are independent Poissons
    layout = center_layout(cfg.h_box, cfg.schedule(), n, "packing", domain=model)
    axis = np.arange(grid.side) / grid.side
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=-1) * layout.edge
    lows = (layout.centers[:, None, :] + offsets[None, :, :]).reshape(-1, grid.d)
    means = (n * model.box_prob(lows, lows + layout.edge / grid.side)).reshape(layout.count, grid.n_cells)
    norm = (cfg.c * model.pdf(layout.centers) * math.log(n))[:, None]
    pois_rng = seeds.generator(b, 8 * j + _PURPOSE_POISSON)
    hits_pois = 0
    for _ in range(size):
        hits_pois += _misses_ball(pois_rng.poisson(means) / norm, grid, target_cum, cfg.eps_ball)
    return j, b, hits_fixed, hits_pois


def run_poissonization_check(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Batch estimates of ``P_n(E)`` and ``P_Pi(E)`` for E = {every packing window misses the ball}.

    A batch passes when the Wilson intervals allow ``lhs <= 2 rhs``, i.e.
    ``lhs_low <= 2 rhs_high``.
    """
    cfg.target_function()
    rows = []
    for j, b, kf, kp in sorted(_pool_map(_poissonization_task, _mc_tasks(cfg), workers)):
        size = cfg.batch_size
        lhs, rhs = kf / size, kp / size
        lhs_low = wilson_interval(kf, size)[0]
        rhs_high = wilson_interval(kp, size)[1]
        rows.append((cfg.n_ladder[j], b, size, lhs, rhs, 2 * rhs, lhs_low, rhs_high, int(lhs_low <= 2 * rhs_high)))
    holds = [r[-1] for r in rows]
    summary = {"batches": len(rows), "fraction_holds": sum(holds) / len(holds)}
    columns = ("n", "batch", "replicates", "lhs", "rhs", "two_rhs", "lhs_low", "rhs_high", "holds")
    return ResultTable("poissonization", columns, rows, summary)


# -- oscillation ---------------------------------------------------------------------------------------

def _oscillation_task(args):
    cfg_dict, j, b, size = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    grid = DyadicGrid(cfg.d, cfg.p_eval)
    counts, norm = _poisson_block(cfg, j, b, size, _PURPOSE_OSC, grid)
    return j, [int(np.count_nonzero(oscillation_from_counts(counts, grid, p, norm) >= cfg.tau)) for p in cfg.p_ladder]


def run_oscillation_decay(cfg: ExperimentConfig, tau: float | None = None, workers: int = 1) -> ResultTable:
    """Frequency of ``{oscillation >= tau}`` for each coarse ``p`` on shared Poissonized draws."""
    if tau is not None:
        cfg = dataclasses.replace(cfg, tau=tau)
    hits = np.zeros((len(cfg.n_ladder), len(cfg.p_ladder)), dtype=np.int64)
    for j, ks in _pool_map(_oscillation_task, _mc_tasks(cfg), workers):
        hits[j] += ks
    rows = []
    for i, p in enumerate(cfg.p_ladder):
        for j, n in enumerate(cfg.n_ladder):
            lo, hi = wilson_interval(int(hits[j, i]), cfg.replicates)
            rows.append((p, n, cfg.replicates, int(hits[j, i]), hits[j, i] / cfg.replicates, lo, hi))
    rows.sort()
    columns = ("p", "n", "replicates", "hits", "frequency", "wilson_low", "wilson_high")
    return ResultTable("oscillation", columns, rows, {"tau": cfg.tau, "p_eval": cfg.p_eval})


# -- KDE gap -----------------------------------------------------------------------------------------------

def _kde_task(args):
    cfg_dict, r = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seeds = SeedSpec(cfg.master_seed)
    model, schedule, kernel = cfg.density(), cfg.schedule(), Kernel(cfg.kernel)
    path = model.sample(max(cfg.n_ladder), seeds.generator(r, 0))
    out = []
    for n in cfg.n_ladder:
        pts = path[:n]
        layout = center_layout(cfg.h_box, schedule, n, "packing", domain=model)
        err = sup_error(pts, kernel, model, layout.centers, schedule(n), n)
        ext = window_count_extremes(pts, layout, schedule, model)
        out.append((seeds.seed(r, 0), n, cfg.c, cfg.model, cfg.kernel, err, ext.min_ratio, ext.max_ratio, r, ext.mean_ratio))
    return out


def run_kde_gap(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Sup-error of the KDE and normalised occupancy extremes over packing windows."""
    tasks = [(cfg.to_dict(), r) for r in range(cfg.replicates)]
    rows = sorted((row for part in _pool_map(_kde_task, tasks, workers) for row in part), key=lambda r: (r[1], r[8]))
    columns = ("seed", "n", "c", "model", "kernel", "sup_error", "min_ratio", "max_ratio", "replicate", "mean_ratio")
    summary = {}
    for n in cfg.n_ladder:
        sel = [r for r in rows if r[1] == n]
        summary[str(n)] = {
            "median_sup_error": float(np.median([r[5] for r in sel])),
            "median_min_ratio": float(np.median([r[6] for r in sel])),
            "median_max_ratio": float(np.median([r[7] for r in sel])),
        }
    return ResultTable("kde-gap", columns, rows, summary)


# -- rate ------------------------------------------------------------------------------------------------------

def run_rate(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """``I_p``, membership and distance to ``Gamma_a`` for one grid function."""
    try:
        gf = GridFunction.from_dict(cfg.grid_function)
        budget = RateBudget(cfg.a)
    except (GridError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad rate input: {exc}") from None
    row = (gf.grid.d, gf.grid.p, rate_Ip(gf), cfg.a, int(gamma_contains(gf, budget)), dist_to_gamma(gf, budget, tol=cfg.tol))
    return ResultTable("rate", ("d", "p", "I_p", "a", "in_gamma", "dist"), [row])


RUNNERS = {
    "rate": run_rate,
    "uldp-slope": run_uldp_slope,
    "product-rate": run_product_rate_check,
    "poissonization": run_poissonization_check,
    "oscillation": run_oscillation_decay,
    "kde-gap": run_kde_gap,
}


def run(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    if cfg.kind == "limit-law":
        if cfg.mode == "sup-inf":
            return run_limit_law_sup_inf(cfg, workers=workers)
        return run_limit_law_inf_target(cfg, workers=workers)
    return RUNNERS[cfg.kind](cfg, workers=workers)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "NormalizationScale",
    "ResultTable",
    "normalization_scale",
    "wilson_interval",
    "log_slope",
    "run",
    "run_limit_law_sup_inf",
    "run_limit_law_inf_target",
    "run_uldp_slope",
    "run_product_rate_check",
    "run_poissonization_check",
    "run_oscillation_decay",
    "run_kde_gap",
    "run_rate",
]

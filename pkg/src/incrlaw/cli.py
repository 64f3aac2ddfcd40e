"""Command line entry point: ``incrlaw <subcommand> [options]``.

CSV column order per subcommand:

    rate            d, p, I_p, a, in_gamma, dist
    limit-law       n, replicate, seed, windows, D_n, cell_osc_bound            (--mode sup-inf)
                    n, replicate, seed, windows, inf_distance, cell_osc_bound   (--mode inf-target)
    uldp-slope      n, replicates, successes, p_hat, wilson_low, wilson_high, kept, residual
    product-rate    n, replicates, hits_m1, hits_m2, hits_joint, p_m1, p_m2, p_joint, product, indep_z, kept
    poissonization  n, batch, replicates, lhs, rhs, two_rhs, lhs_low, rhs_high, holds
    oscillation     p, n, replicates, hits, frequency, wilson_low, wilson_high
    kde-gap         seed, n, c, model, kernel, sup_error, min_ratio, max_ratio, replicate, mean_ratio

Without ``--deterministic`` the first line of a CSV file is a ``#``
timestamp comment (a ``generated`` key in JSON). Summaries (slopes,
medians, pass fractions) go to JSON output and to stdout.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, run
from .projection import ProjectionError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# small settings so a bare subcommand finishes in seconds
DEFAULTS = {
    "limit-law": {"c": 2.0, "n_ladder": [1024, 4096, 16384], "p": 4, "replicates": 5, "target_slope": 1.0},
    "uldp-slope": {"c": 1.0, "p": 1, "n_ladder": [256, 1024, 4096, 16384], "target_slope": 2.0,
                   "eps_ball": 0.1, "replicates": 20000, "batch_size": 5000},
    "product-rate": {"c": 1.0, "p": 1, "n_ladder": [256, 1024, 4096, 16384], "thresholds": [0.8, 0.8],
                     "replicates": 20000, "batch_size": 5000},
    "poissonization": {"c": 1.0, "p": 2, "n_ladder": [1000], "target_slope": 2.0, "eps_ball": 0.2,
                       "replicates": 2000, "batch_size": 200},
    "oscillation": {"c": 1.0, "n_ladder": [10000], "p_eval": 8, "p_ladder": [1, 2, 3, 4], "tau": 0.5,
                    "replicates": 10000, "batch_size": 2500},
    "kde-gap": {"c": 0.5, "n_ladder": [1000, 10000], "replicates": 20},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incrlaw", description="Window increment limit-law experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit), overrides the config")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--out", type=Path, help="output file, .csv or .json (default: CSV on stdout)")
        p.add_argument("--deterministic", action="store_true", help="omit the timestamp header")
        return p

    rate = common(sub.add_parser("rate", help="I_p and distance to the rate sublevel set of a grid function"))
    rate.add_argument("--input", type=Path, help="grid function JSON file")
    rate.add_argument("--a", type=float, help="rate budget a (sublevel 1/a)")
    rate.add_argument("--tol", type=float, default=1e-6)

    law = common(sub.add_parser("limit-law", help="sup-inf or inf-target limit-law statistics"))
    law.add_argument("--mode", choices=["sup-inf", "inf-target"])

    for name, text in [
        ("uldp-slope", "log-log slope of small-ball probabilities"),
        ("kde-gap", "KDE sup-error and window occupancy extremes"),
        ("oscillation", "frequency of large within-cell oscillation"),
        ("poissonization", "fixed-n versus Poissonized event probabilities"),
        ("product-rate", "joint versus marginal tail slopes of two cells"),
    ]:
        common(sub.add_parser(name, help=text))
    return parser


def load_config(args) -> ExperimentConfig:
    kind = args.command
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        data.setdefault("kind", kind)
        if data["kind"] != kind:
            raise ConfigError(f"config is for {data['kind']!r}, not {kind!r}")
    else:
        data = {"kind": kind, **DEFAULTS.get(kind, {})}
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.out is not None:
        data["output"] = str(args.out)
    if kind == "limit-law" and args.mode:
        data["mode"] = args.mode
    if kind == "rate":
        if args.input is not None:
            try:
                data["grid_function"] = json.loads(args.input.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read grid function: {exc}") from None
        if args.a is not None:
            data["a"] = args.a
        data.setdefault("tol", args.tol)
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args)
        if cfg.output and Path(cfg.output).suffix.lower() not in (".csv", ".json"):
            raise ConfigError(f"output must end in .csv or .json, got {cfg.output}")
        table = run(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProjectionError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    header = None if args.deterministic else "generated " + datetime.now(timezone.utc).isoformat(timespec="seconds")
    out = Path(cfg.output) if cfg.output else None
    if out is None:
        sys.stdout.write(table.to_csv(header))
        if table.summary:
            print(json.dumps(table.summary), file=sys.stderr)
        return EXIT_OK
    text = table.to_json(header) if out.suffix.lower() == ".json" else table.to_csv(header)
    out.write_text(text, encoding="utf-8")
    if table.summary:
        print(json.dumps(table.summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: single runs, sweeps, and bound checks.

Output files are comma-separated text with a '#'-prefixed header block that
echoes the fully resolved configuration (derived r and k included), so any
file can be reproduced byte-for-byte from its own header.  Loss and gradient
columns carry 17 significant digits and round-trip at double precision.

Exit codes: 0 success, 1 configuration error, 2 runtime divergence,
3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import server
from .bounds import compute_B1, compute_B2, run_bound_check
from .config import RunConfig, coerce_value, parse_config
from .errors import ConfigurationError, DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _metric_columns(records) -> list:
    cols = ["round", "global_loss", "grad_norm_sq"]
    if any(rec.train_accuracy is not None for rec in records):
        cols.append("train_accuracy")
    if any(rec.test_accuracy is not None for rec in records):
        cols.append("test_accuracy")
    cols += ["max_age", "mean_age", "wall_ms"]
    return cols


def write_metrics(path, config: RunConfig, records) -> None:
    """One row per completed round, plus an abort marker row if the run
    stopped on a non-finite value."""
    cols = _metric_columns(records)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# otafl run metrics\n")
        for line in config.echo_lines():
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        for rec in records:
            if rec.aborted:
                fh.write(f"abort,{rec.round_index},{rec.note}\n")
                continue
            row = {
                "round": rec.round_index,
                "global_loss": rec.loss,
                "grad_norm_sq": rec.grad_norm_sq,
                "train_accuracy": rec.train_accuracy,
                "test_accuracy": rec.test_accuracy,
                "max_age": rec.max_age,
                "mean_age": rec.mean_age,
                "wall_ms": rec.wall_ms,
            }
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def run_single(config: RunConfig) -> list:
    """Execute one run and write its metrics file; returns the records."""
    if not config.out:
        raise ConfigurationError("an output path is required")
    records = server.run(config)
    write_metrics(config.out, config, records)
    return records


@dataclasses.dataclass
class SweepSpec:
    base: RunConfig
    axis: str
    values: list
    seeds: list

    def __post_init__(self):
        if self.axis not in {f.name for f in dataclasses.fields(RunConfig)}:
            raise ConfigurationError(f"sweep axis {self.axis!r} is not a config field")
        if not self.values or not self.seeds:
            raise ConfigurationError("sweep needs at least one value and one seed")


def _member_config(spec: SweepSpec, value, seed: int) -> RunConfig:
    return dataclasses.replace(spec.base, seed=seed, out=None, **{spec.axis: value})


def _run_member(config: RunConfig) -> dict:
    records = server.run(config)
    if server.run_aborted(records):
        raise DivergenceError(records[-1].note)
    last = records[-1]
    return {
        "loss": last.loss,
        "grad_norm_sq": last.grad_norm_sq,
        "train_accuracy": last.train_accuracy,
        "test_accuracy": last.test_accuracy,
    }


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list:
    """Run every (value, seed) member; summarize final metrics per value.

    Members are independent runs with their own seeds, so the summary does
    not depend on the degree of parallelism.
    """
    members = [
        (vi, si, _member_config(spec, value, seed))
        for vi, value in enumerate(spec.values)
        for si, seed in enumerate(spec.seeds)
    ]
    finals = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (vi, si, _), result in zip(
                members, pool.map(_run_member, [cfg for _, _, cfg in members])
            ):
                finals[vi, si] = result
    else:
        for vi, si, cfg in members:
            finals[vi, si] = _run_member(cfg)

    rows = []
    for vi, value in enumerate(spec.values):
        row = {"value": value, "n_seeds": len(spec.seeds)}
        for metric in ("loss", "grad_norm_sq", "train_accuracy", "test_accuracy"):
            samples = [finals[vi, si][metric] for si in range(len(spec.seeds))]
            if any(s is None for s in samples):
                continue
            arr = np.array(samples, dtype=np.float64)
            row[f"final_{metric}_mean"] = float(arr.mean())
            row[f"final_{metric}_std"] = (
                float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            )
        rows.append(row)
    return rows


def write_sweep_summary(path, spec: SweepSpec, rows) -> None:
    metric_cols = [c for c in rows[0] if c not in ("value", "n_seeds")]
    cols = [spec.axis, "n_seeds"] + metric_cols
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# otafl sweep summary\n")
        fh.write(f"# axis = {spec.axis}\n")
        fh.write(f"# values = {','.join(str(v) for v in spec.values)}\n")
        fh.write(f"# seeds = {','.join(str(s) for s in spec.seeds)}\n")
        for line in spec.base.echo_lines():
            fh.write(f"# base.{line}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            values = [row["value"], row["n_seeds"]] + [row[c] for c in metric_cols]
            fh.write(",".join(_fmt(v) for v in values) + "\n")


def write_bound_report(path, config: RunConfig, report) -> None:
    c = report.constants
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# otafl bound check\n")
        for line in config.echo_lines():
            fh.write(f"# {line}\n")
        fh.write(f"# n_seeds = {report.n_seeds}\n")
        for name in ("L", "G_sq", "sigma_g_sq", "mu_h", "sigma_h_sq",
                     "sigma_z_sq", "gamma", "f0", "f_star"):
            fh.write(f"# {name} = {_fmt(getattr(c, name))}\n")
        fh.write(f"# B1 = {_fmt(compute_B1(c))}\n")
        fh.write(f"# B2 = {_fmt(compute_B2(c))}\n")
        fh.write("T,empirical_mean,empirical_se,bound_rhs,pass\n")
        for cp in report.checkpoints:
            fh.write(
                f"{cp.T},{_fmt(cp.empirical_mean)},{_fmt(cp.empirical_se)},"
                f"{_fmt(cp.rhs)},{str(cp.passed).lower()}\n"
            )


def _int_list(raw: str) -> list:
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--out", required=True, help="output file path")
    for flag, dest in [
        ("--strategy", "strategy"), ("--d", "d"), ("--N", "n_clients"),
        ("--T", "T"), ("--rho-r", "rho_r"), ("--rho-k", "rho_k"),
        ("--eta", "eta"), ("--task", "task"), ("--alpha", "alpha"),
        ("--fading", "fading"), ("--mu-h", "mu_h"),
        ("--sigma-h-sq", "sigma_h_sq"), ("--sigma-z-sq", "sigma_z_sq"),
        ("--n-classes", "n_classes"), ("--m-samples", "m_samples"),
        ("--separation", "separation"), ("--hidden", "hidden"),
        ("--het-scale", "het_scale"), ("--quad-l-min", "quad_l_min"),
        ("--quad-l-max", "quad_l_max"), ("--theta0-scale", "theta0_scale"),
        ("--beta", "beta"), ("--data-file", "data_file"),
        ("--data-seed", "data_seed"),
    ]:
        sub.add_argument(flag, dest=dest, default=None)


def _resolve(args) -> RunConfig:
    overrides = {
        key: getattr(args, key)
        for key in ("strategy", "d", "n_clients", "T", "rho_r", "rho_k", "eta",
                    "task", "alpha", "fading", "mu_h", "sigma_h_sq",
                    "sigma_z_sq", "n_classes", "m_samples", "separation",
                    "hidden", "het_scale", "quad_l_min", "quad_l_max",
                    "theta0_scale", "beta", "data_file", "data_seed")
        if getattr(args, key) is not None
    }
    overrides["seed"] = args.seed
    overrides["out"] = args.out
    return parse_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otafl",
        description="Simulate federated learning with over-the-air "
        "aggregation and partial gradient updates.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="execute one run, write per-round metrics")
    _add_config_flags(p_run)

    p_sweep = subs.add_parser("sweep", help="sweep one config field across seeds")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="config field to vary")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--seeds", required=True, type=_int_list,
                         help="comma-separated seeds")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes")

    p_bound = subs.add_parser("bound-check",
                              help="compare runs against the convergence bound")
    _add_config_flags(p_bound)
    p_bound.add_argument("--checkpoints", type=_int_list, default=[10, 100, 1000],
                         help="comma-separated horizons T")
    group = p_bound.add_mutually_exclusive_group()
    group.add_argument("--seeds", type=_int_list, default=None)
    group.add_argument("--n-seeds", type=int, default=20,
                       help="use seeds seed..seed+n-1")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve(args)
        if args.command == "run":
            records = run_single(config)
            if server.run_aborted(records):
                print(f"run aborted: {records[-1].note}", file=sys.stderr)
                return EXIT_DIVERGED
        elif args.command == "sweep":
            values = [coerce_value(args.axis, tok.strip())
                      for tok in args.values.split(",") if tok.strip()]
            spec = SweepSpec(base=config, axis=args.axis, values=values,
                             seeds=args.seeds)
            rows = run_sweep(spec, jobs=args.jobs)
            write_sweep_summary(config.out, spec, rows)
        else:
            seeds = args.seeds or list(range(args.seed, args.seed + args.n_seeds))
            report = run_bound_check(config, args.checkpoints, seeds)
            write_bound_report(config.out, config, report)
            for cp in report.checkpoints:
                status = "pass" if cp.passed else "FAIL"
                print(f"T={cp.T}: empirical={cp.empirical_mean:.6g} "
                      f"rhs={cp.rhs:.6g} [{status}]")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

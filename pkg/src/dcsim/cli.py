"""Command-line driver: policy sweeps, result comparison and trace tools.

Experiment files are INI-style::

    [experiment]
    hosts = 100
    vms = 150
    horizon = 288
    days = 0-9
    policies = THR-MxMT-0.8, THR-MMT-0.8
    seed = 0

    [output]
    results = results.csv

``days`` picks rows of the built-in day table; synthetic day ``d`` is generated
with seed ``seed + d``. Alternatively ``trace_dirs`` lists directories of
trace files, one simulated day each.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import engine, metrics
from .errors import SimulationError, InvalidArgument
from .model import PolicyConfig, make_default_datacenter, make_vms
from .workload import (PLANETLAB_DAYS, assign_traces, load_trace_dir, synth_traces,
                       trace_stats, write_trace_dir)

log = logging.getLogger("dcsim")

RESULT_FIELDS = ("policy", "day", "energy_kwh", "slatah", "pdm", "slav", "esv", "migrations", "seed")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    """Bad arguments or experiment file (exit status 2)."""


@dataclass(frozen=True)
class Experiment:
    hosts: int
    vms: int | None
    horizon: int
    policies: tuple[PolicyConfig, ...]
    days: tuple[int, ...] = ()
    trace_dirs: tuple[str, ...] = ()
    seed: int = 0
    results: str = "results.csv"
    event_log: str | None = None


def _parse_days(text: str) -> tuple[int, ...]:
    days = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            days.extend(range(int(lo), int(hi) + 1))
        else:
            days.append(int(part))
    return tuple(days)


def load_experiment(path) -> Experiment:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    if not parser.has_section("experiment"):
        raise UsageError(f"{path}: missing [experiment] section")
    exp = parser["experiment"]
    out = parser["output"] if parser.has_section("output") else {}
    try:
        policies = tuple(PolicyConfig.parse(p) for p in exp.get("policies", "").split(",") if p.strip())
        days = _parse_days(exp.get("days", ""))
        trace_dirs = tuple(d.strip() for d in exp.get("trace_dirs", "").split(",") if d.strip())
        vms = exp.get("vms")
        config = Experiment(
            hosts=exp.getint("hosts", 100),
            vms=int(vms) if vms is not None else None,
            horizon=exp.getint("horizon", 288),
            policies=policies,
            days=days,
            trace_dirs=trace_dirs,
            seed=exp.getint("seed", 0),
            results=out.get("results", "results.csv"),
            event_log=out.get("event_log") or None,
        )
    except (ValueError, InvalidArgument) as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if not config.policies:
        raise UsageError(f"{path}: no policies listed")
    if bool(config.days) == bool(config.trace_dirs):
        raise UsageError(f"{path}: give exactly one of 'days' or 'trace_dirs'")
    if any(not 0 <= d < len(PLANETLAB_DAYS) for d in config.days):
        raise UsageError(f"{path}: days must lie in 0-{len(PLANETLAB_DAYS) - 1}")
    if config.vms is None and not config.trace_dirs:
        raise UsageError(f"{path}: 'vms' is required for synthetic days")
    if config.hosts < 2 or config.hosts % 2 or config.horizon < 1:
        raise UsageError(f"{path}: hosts must be even and >= 2, horizon >= 1")
    return config


@dataclass(frozen=True)
class Job:
    policy: str
    day: int
    seed: int
    hosts: int
    vms: int | None
    horizon: int
    trace_dir: str | None
    event_log: str | None


def jobs_for(config: Experiment) -> list[Job]:
    days = list(config.days) if config.days else list(range(len(config.trace_dirs)))
    jobs = []
    for policy in config.policies:
        for day in days:
            trace_dir = config.trace_dirs[day] if config.trace_dirs else None
            log_path = None
            if config.event_log:
                log_path = str(Path(config.event_log) / f"{policy.name}_day{day}.csv")
            jobs.append(Job(policy.name, day, config.seed + day, config.hosts, config.vms,
                            config.horizon, trace_dir, log_path))
    return jobs


def run_job(job: Job) -> dict:
    """Simulate one (policy, day) pair and return its results row."""
    if job.trace_dir is not None:
        traces = load_trace_dir(job.trace_dir)
        n_vms = job.vms or len(traces)
        if n_vms > len(traces):
            raise SimulationError(f"{job.trace_dir}: {len(traces)} traces for {n_vms} VMs")
    else:
        row = PLANETLAB_DAYS[job.day]
        n_vms = job.vms
        traces = synth_traces(n_vms, row.mean, row.stdev, job.seed)
    hosts = make_default_datacenter(job.hosts, job.seed)
    vms = make_vms(n_vms)
    assigned = assign_traces([vm.id for vm in vms], traces, job.seed)
    report = engine.run(hosts, vms, assigned, PolicyConfig.parse(job.policy), job.horizon,
                        job.seed, event_log=job.event_log)
    row = {"policy": job.policy, "day": job.day, "seed": job.seed}
    row.update(metrics.summarize(report))
    return row


def format_results(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for row in rows:
        writer.writerow([repr(row[f]) if isinstance(row[f], float) else row[f] for f in RESULT_FIELDS])
    return buf.getvalue()


def run_sweep(config: Experiment, parallel: int = 1) -> list[dict]:
    jobs = jobs_for(config)
    if config.event_log:
        Path(config.event_log).mkdir(parents=True, exist_ok=True)
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(run_job, jobs))
    else:
        rows = [run_job(job) for job in jobs]
    order = {p.name: i for i, p in enumerate(config.policies)}
    rows.sort(key=lambda r: (order[r["policy"]], r["day"]))
    return rows


def cmd_run(args) -> int:
    config = load_experiment(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.event_log:
        overrides["event_log"] = args.event_log
    if overrides:
        config = Experiment(**{**config.__dict__, **overrides})
    out = Path(args.out) if args.out else Path(config.results)
    if args.out and (out.is_dir() or not out.suffix):
        out = out / "results.csv"
    rows = run_sweep(config, args.parallel)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_results(rows), encoding="utf-8")
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def read_results(path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
                raise UsageError(f"{path}: unexpected header {reader.fieldnames}")
            return list(reader)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def delta(baseline: float, candidate: float) -> float:
    """Relative improvement of ``candidate`` over ``baseline``."""
    if baseline == 0:
        return 0.0 if candidate == 0 else float("nan")
    return (baseline - candidate) / baseline


COMPARED = ("energy_kwh", "slatah", "migrations")


def compare(rows, baseline: str, candidate: str) -> list[dict]:
    """Per-day deltas plus a final ``mean`` row (delta of the day means)."""
    base = {r["day"]: r for r in rows if r["policy"] == baseline}
    cand = {r["day"]: r for r in rows if r["policy"] == candidate}
    for name, got in ((baseline, base), (candidate, cand)):
        if not got:
            raise UsageError(f"policy {name} not in results")
    days = sorted(set(base) & set(cand), key=lambda d: int(d))
    if not days:
        raise UsageError(f"{baseline} and {candidate} share no days")
    table = []
    for day in days:
        table.append({"day": day, **{k: delta(float(base[day][k]), float(cand[day][k])) for k in COMPARED}})
    mean = {"day": "mean"}
    for k in COMPARED:
        b = sum(float(base[d][k]) for d in days) / len(days)
        c = sum(float(cand[d][k]) for d in days) / len(days)
        mean[k] = delta(b, c)
    table.append(mean)
    return table


def cmd_compare(args) -> int:
    table = compare(read_results(args.results), args.baseline, args.candidate)
    print(f"delta = ({args.baseline} - {args.candidate}) / {args.baseline}")
    print(f"{'day':>6} {'energy':>9} {'slatah':>9} {'migrations':>11}")
    for row in table:
        print(f"{row['day']:>6} {row['energy_kwh']:>+9.1%} {row['slatah']:>+9.1%} {row['migrations']:>+11.1%}")
    return EXIT_OK


def cmd_synth(args) -> int:
    mean, stdev = args.mean, args.stdev
    if args.day is not None:
        if not 0 <= args.day < len(PLANETLAB_DAYS):
            raise UsageError(f"day must lie in 0-{len(PLANETLAB_DAYS) - 1}")
        row = PLANETLAB_DAYS[args.day]
        mean = row.mean if mean is None else mean
        stdev = row.stdev if stdev is None else stdev
    if mean is None or stdev is None:
        raise UsageError("give --mean and --stdev, or --day")
    try:
        traces = synth_traces(args.vms, mean, stdev, args.seed, n_samples=args.samples)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    write_trace_dir(traces, args.out)
    print(f"wrote {len(traces)} traces to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    traces = load_trace_dir(args.trace_dir)
    s = trace_stats(traces)
    print(f"vms={len(traces)} mean={s.mean:.2f} stdev={s.stdev:.2f} "
          f"q1={s.quartile1:g} median={s.median:g} q3={s.quartile3:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a policy sweep and write results.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="results file or directory (default: from config)")
    p.add_argument("--seed", type=int, help="base seed, overrides the config")
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.add_argument("--event-log", metavar="DIR", help="write one migration log per run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="relative deltas between two policies")
    p.add_argument("results")
    p.add_argument("--baseline", required=True)
    p.add_argument("--candidate", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write synthetic traces")
    p.add_argument("--vms", type=int, required=True)
    p.add_argument("--mean", type=float)
    p.add_argument("--stdev", type=float)
    p.add_argument("--day", type=int, help="take mean/stdev from the built-in day table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=288)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="summary statistics of a trace directory")
    p.add_argument("trace_dir")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "parallel", 1) < 1:
        parser.error("--parallel must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""PlanetLab-style CPU utilization traces: loading, synthesis and summary statistics.

A trace directory holds one plain-text file per VM, named after the VM, with
one integer utilization percentage (0-100) per line at 5-minute intervals.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .errors import InvalidArgument, TraceParseError

TRACE_INTERVAL = 300
SAMPLES_PER_DAY = 288


class DayStats(NamedTuple):
    date: str
    n_vms: int
    mean: float
    stdev: float
    quartile1: float
    median: float
    quartile3: float


# Published statistics of ten PlanetLab days (March/April 2011), percent.
PLANETLAB_DAYS = (
    DayStats("03/03/2011", 1052, 12.31, 17.09, 2, 6, 15),
    DayStats("06/03/2011", 898, 11.44, 16.83, 2, 5, 13),
    DayStats("09/03/2011", 1061, 10.70, 15.57, 2, 4, 13),
    DayStats("22/03/2011", 1516, 9.26, 12.78, 2, 5, 12),
    DayStats("25/03/2011", 1078, 10.56, 14.14, 2, 6, 14),
    DayStats("03/04/2011", 1463, 12.39, 16.55, 2, 6, 17),
    DayStats("09/04/2011", 1358, 11.12, 15.09, 2, 6, 15),
    DayStats("11/04/2011", 1233, 11.56, 15.07, 2, 6, 16),
    DayStats("12/04/2011", 1054, 11.54, 15.15, 2, 6, 16),
    DayStats("20/04/2011", 1033, 10.43, 15.21, 2, 4, 12),
)


@dataclass(frozen=True)
class Trace:
    vm_id: str
    samples: tuple[int, ...]
    interval: int = TRACE_INTERVAL

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(int(s) for s in self.samples))
        if not self.samples:
            raise InvalidArgument(f"trace {self.vm_id!r} is empty")
        if any(s < 0 or s > 100 for s in self.samples):
            raise InvalidArgument(f"trace {self.vm_id!r} has samples outside [0, 100]")
        if self.interval != TRACE_INTERVAL:
            raise InvalidArgument(f"trace interval must be {TRACE_INTERVAL} s")

    def __len__(self):
        return len(self.samples)


class TraceSummary(NamedTuple):
    mean: float
    stdev: float
    quartile1: float
    median: float
    quartile3: float


def parse_trace_file(path: str | os.PathLike) -> Trace:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read trace file {path}: {exc}") from exc
    samples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        try:
            value = int(line)
        except ValueError:
            raise TraceParseError(path, lineno, f"not an integer: {line!r}") from None
        if not 0 <= value <= 100:
            raise TraceParseError(path, lineno, f"utilization {value} outside [0, 100]")
        samples.append(value)
    if not samples:
        raise TraceParseError(path, 0, "empty trace")
    return Trace(path.name, samples)


def load_trace_dir(path: str | os.PathLike) -> list[Trace]:
    """One trace per regular file in ``path``, sorted by file name."""
    path = Path(path)
    if not path.is_dir():
        raise OSError(f"trace directory {path} does not exist")
    files = sorted(p for p in path.iterdir() if p.is_file())
    return [parse_trace_file(p) for p in files]


def write_trace_dir(traces: Sequence[Trace], path: str | os.PathLike):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for trace in traces:
        (path / trace.vm_id).write_text("".join(f"{s}\n" for s in trace.samples))


def lognormal_params(mean: float, stdev: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal with the given mean and standard deviation."""
    sigma2 = math.log1p((stdev / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def clipped_lognormal_moments(mu: float, sigma: float, cap: float = 100.0) -> tuple[float, float]:
    """Mean and standard deviation of min(Y, cap) for Y ~ LogNormal(mu, sigma)."""
    lc = math.log(cap)
    tail = norm.sf((lc - mu) / sigma)
    m1 = math.exp(mu + sigma**2 / 2) * norm.cdf((lc - mu - sigma**2) / sigma) + cap * tail
    m2 = math.exp(2 * mu + 2 * sigma**2) * norm.cdf((lc - mu - 2 * sigma**2) / sigma) + cap**2 * tail
    return m1, math.sqrt(max(m2 - m1 * m1, 0.0))


def fit_clipped_lognormal(mean: float, stdev: float, cap: float = 100.0) -> tuple[float, float]:
    """(mu, sigma) whose log-normal, clipped at ``cap``, has the given moments.

    Starts from the plain moment-matched parameters; falls back to them when
    the clipped family cannot reach the requested spread.
    """
    mu0, sigma0 = lognormal_params(mean, stdev)

    def residual(x):
        m, s = clipped_lognormal_moments(x[0], math.exp(x[1]), cap)
        return [m - mean, s - stdev]

    sol, _, ok, _ = optimize.fsolve(residual, [mu0, math.log(sigma0)], full_output=True)
    if ok != 1 or max(abs(r) for r in residual(sol)) > 1e-6:
        return mu0, sigma0
    return float(sol[0]), float(math.exp(sol[1]))


def synth_traces(
    n_vms: int,
    mean: float,
    stdev: float,
    seed: int,
    n_samples: int = SAMPLES_PER_DAY,
    persistence: float = 0.9,
    vm_share: float = 0.1,
) -> list[Trace]:
    """Synthetic traces with log-normal marginals clipped to [0, 100].

    The log-normal is fitted so that its clipped mean and standard deviation
    equal ``mean`` and ``stdev``.

    The latent Gaussian of each VM is a per-VM level (``vm_share`` of the
    variance) plus an AR(1) process with lag-one correlation
    ``persistence``, so every sample is marginally N(0, 1) and the
    utilization is marginally log-normal with the requested moments.
    """
    if n_vms < 1:
        raise InvalidArgument("n_vms must be >= 1")
    if not 0 < mean < 100:
        raise InvalidArgument("mean must be in (0, 100)")
    if not stdev > 0:
        raise InvalidArgument("stdev must be > 0")
    if not 0 <= persistence < 1 or not 0 <= vm_share < 1:
        raise InvalidArgument("persistence and vm_share must be in [0, 1)")
    mu, sigma = fit_clipped_lognormal(mean, stdev)
    rng = np.random.default_rng(seed)

    level = rng.standard_normal(n_vms)
    shocks = rng.standard_normal((n_vms, n_samples))
    ar = np.empty_like(shocks)
    ar[:, 0] = shocks[:, 0]
    innovation = math.sqrt(1 - persistence**2)
    for t in range(1, n_samples):
        ar[:, t] = persistence * ar[:, t - 1] + innovation * shocks[:, t]
    latent = math.sqrt(vm_share) * level[:, None] + math.sqrt(1 - vm_share) * ar

    values = np.clip(np.rint(np.exp(mu + sigma * latent)), 0, 100).astype(int)
    width = len(str(n_vms - 1))
    return [Trace(f"vm{i:0{width}d}", row.tolist()) for i, row in enumerate(values)]


def trace_stats(traces: Sequence[Trace]) -> TraceSummary:
    """Pooled statistics over every sample of every trace."""
    if not traces:
        raise InvalidArgument("trace_stats needs at least one trace")
    pooled = np.concatenate([np.asarray(t.samples, dtype=float) for t in traces])
    q1, med, q3 = np.quantile(pooled, [0.25, 0.5, 0.75], method="linear")
    return TraceSummary(float(pooled.mean()), float(pooled.std()), float(q1), float(med), float(q3))


def assign_traces(vm_ids: Sequence, traces: Sequence[Trace], seed: int) -> dict:
    """Map each VM id to a trace: seeded shuffle of the traces, then pair by index."""
    if len(traces) < len(vm_ids):
        raise InvalidArgument(f"{len(vm_ids)} VMs but only {len(traces)} traces")
    shuffled = sorted(traces, key=lambda t: t.vm_id)
    random.Random(seed).shuffle(shuffled)
    return {vm_id: trace for vm_id, trace in zip(sorted(vm_ids), shuffled)}

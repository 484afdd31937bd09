"""Discrete-time consolidation loop.

Every 300 s step: refresh VM demands from the traces, detect overloaded
hosts and move VMs off them, evacuate underloaded hosts, complete
migrations, put empty hosts to sleep and account energy and SLA time.
"""

from __future__ import annotations

import copy
import csv
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .detection import is_overloaded, overload_threshold
from .errors import ConfigurationError, NoBandwidthError
from .model import STEP_SECONDS, HostState, PolicyConfig, VmState
from .placement import initial_allocation, pabfd_place
from .power import power_at, step_energy
from .selection import migration_time, selector_for
from .workload import Trace

log = logging.getLogger(__name__)

# Share of a migrating VM's demand lost to the migration.
MIGRATION_DEGRADATION = 0.1


@dataclass(frozen=True)
class Migration:
    vm: object
    source: int
    dest: int
    started_at: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("migration duration must be > 0")
        if self.source == self.dest:
            raise ValueError("migration source and destination coincide")


@dataclass(frozen=True)
class StepRecord:
    time: float
    active_hosts: int
    energy: float
    violations: int
    migrations_started: int
    host_energy: Mapping[int, float] = field(default_factory=dict)  # kWh per host that drew power


@dataclass(frozen=True)
class RunReport:
    policy: str
    seed: int
    step_seconds: float
    steps: tuple[StepRecord, ...]
    migrations: tuple[Migration, ...]
    host_active_time: Mapping[int, float]
    host_saturated_time: Mapping[int, float]
    vm_requested: Mapping[object, float]
    vm_degradation: Mapping[object, float]

    @property
    def horizon(self) -> int:
        return len(self.steps)


def sla_flags(host: HostState, demand: float) -> bool:
    """True when the requested MIPS exceed the host's capacity."""
    if not host.is_active:
        return False
    return demand > host.capacity


def write_event_log(report: RunReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for m in report.migrations:
            writer.writerow([f"{m.started_at:g}", m.vm, m.source, m.dest, f"{m.duration:.6f}"])


@dataclass
class _InFlight:
    vm: VmState
    source: HostState
    dest: HostState
    start: float  # offset within the step
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


class _Channels:
    """Per-host migration channels: each host carries at most CHANNELS
    concurrent migrations, each at half its NIC bandwidth. Offsets are
    seconds into the current step; a migration that cannot finish inside the
    step is deferred to the next one."""

    CHANNELS = 2

    def __init__(self, dt: float):
        self.dt = dt
        self.busy = {}

    def _slots(self, table, host_id):
        return table.setdefault(host_id, [0.0] * self.CHANNELS)

    def available(self, host_id) -> bool:
        return min(self._slots(self.busy, host_id)) < self.dt

    def book(self, moves):
        """Start offsets for ``(source id, dest id, duration)`` moves, booked
        in order, or None (and nothing booked) if any would overrun the step."""
        trial = {k: list(v) for k, v in self.busy.items()}
        starts = []
        for src, dst, duration in moves:
            a, b = self._slots(trial, src), self._slots(trial, dst)
            i, j = a.index(min(a)), b.index(min(b))
            start = max(a[i], b[j])
            if start + duration > self.dt + 1e-9:
                return None
            a[i] = b[j] = start + duration
            starts.append(start)
        self.busy = trial
        return starts


def _segments(demand: float, events, until: float):
    """``(length, demand)`` pieces of ``[0, until)`` given ``(offset, delta)`` events."""
    t = 0.0
    pieces = []
    for offset, delta in sorted(events, key=lambda e: e[0]):
        offset = min(offset, until)
        if offset > t:
            pieces.append((offset - t, demand))
            t = offset
        demand += delta
    if until > t:
        pieces.append((until - t, demand))
    return pieces


@dataclass
class _Sim:
    hosts: list[HostState]
    vms: dict
    policy: PolicyConfig
    selector: Callable
    dt: float
    max_evacuations: int | None
    in_flight: list = field(default_factory=list)
    migrations: list = field(default_factory=list)

    def host_vms(self, host, exclude=()):
        return [self.vms[v] for v in host.resident_vms if v not in exclude]

    def composed_history(self, host, exclude=()) -> list[float]:
        """Host utilization history rebuilt from the demand histories of its VMs."""
        vms = self.host_vms(host, exclude)
        if not vms:
            return []
        n = min(len(vm.demand_history) for vm in vms)
        if n == 0:
            return []
        total = np.zeros(n)
        for vm in vms:
            total += np.asarray(vm.demand_history, dtype=float)[-n:]
        return np.minimum(total / host.capacity, 1.0).tolist()

    def caps(self) -> dict:
        return {h.id: overload_threshold(self.policy, h.utilization_history)
                for h in self.hosts if h.is_active}

    def duration(self, vm: VmState, source: HostState, dest: HostState) -> float:
        return max(migration_time(vm, source), migration_time(vm, dest), 1e-9)

    def start_migrations(self, moves, channels: _Channels, now: float) -> bool:
        """Book and start ``(vm, dest)`` moves together, or none of them."""
        by_id = {h.id: h for h in self.hosts}
        legs = []
        try:
            for vm, dest in moves:
                source = by_id[vm.host]
                legs.append((vm, source, dest, self.duration(vm, source, dest)))
        except NoBandwidthError:
            return False
        starts = channels.book([(s.id, d.id, t) for _, s, d, t in legs])
        if starts is None:
            log.debug("t=%g: %d migration(s) deferred, no channel time left", now, len(legs))
            return False
        for (vm, source, dest, duration), start in zip(legs, starts):
            vm.in_migration = True
            vm.migration_remaining = duration
            dest.reserved_demand += vm.cpu_demand
            dest.ram_allocated += vm.ram_used
            self.in_flight.append(_InFlight(vm, source, dest, start, duration))
            self.migrations.append(Migration(vm.id, source.id, dest.id, now + start, duration))
        return True


def _max_free_ram(hosts, skip) -> float:
    return max((h.free_ram for h in hosts if h.id not in skip), default=0.0)


def _attach(vm: VmState, host: HostState):
    vm.host = host.id
    host.resident_vms.append(vm.id)
    host.ram_allocated += vm.ram_used


def _trace_for(traces, vms: Sequence[VmState]) -> dict:
    if isinstance(traces, Mapping):
        missing = [vm.id for vm in vms if vm.id not in traces]
        if missing:
            raise ConfigurationError(f"no trace for VM {missing[0]}")
        return {vm.id: traces[vm.id] for vm in vms}
    traces = list(traces)
    if len(traces) < len(vms):
        raise ConfigurationError(f"{len(vms)} VMs but {len(traces)} traces")
    return {vm.id: tr for vm, tr in zip(vms, traces)}


def run(
    hosts: Sequence[HostState],
    vms: Sequence[VmState],
    traces: Mapping[object, Trace] | Sequence[Trace],
    policy: PolicyConfig,
    horizon: int,
    seed: int = 0,
    *,
    selector: Callable | None = None,
    max_evacuations: int | None = None,
    observer: Callable | None = None,
    event_log=None,
) -> RunReport:
    """Simulate ``horizon`` steps of dynamic consolidation under ``policy``.

    Inputs are copied, never mutated. VMs without a host are placed first by
    :func:`initial_allocation` on their full instance MIPS, and hosts left
    empty go to sleep. ``selector`` overrides the policy's VM selection;
    ``observer(step, hosts, vms)`` is called at the end of every step.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1 step")
    hosts = copy.deepcopy(list(hosts))
    vm_list = copy.deepcopy(list(vms))
    trace_of = _trace_for(traces, vm_list)
    short = [vid for vid, tr in trace_of.items() if len(tr) < horizon]
    if short:
        raise ConfigurationError(
            f"trace for VM {short[0]} has {len(trace_of[short[0]])} samples, horizon is {horizon}")

    by_id = {h.id: h for h in hosts}
    unplaced = [vm for vm in vm_list if vm.host is None]
    for vm in vm_list:
        if vm.host is not None and vm.id not in by_id[vm.host].resident_vms:
            _attach(vm, by_id[vm.host])
    if unplaced:
        placement = initial_allocation(unplaced, hosts)
        for vm in unplaced:
            _attach(vm, by_id[placement[vm.id]])
        for h in hosts:
            h.waking = False
            if h.is_active and not h.resident_vms:
                h.sleep()

    rng = random.Random(seed)
    sim = _Sim(hosts, {vm.id: vm for vm in vm_list}, policy,
               selector or selector_for(policy, rng), STEP_SECONDS, max_evacuations)
    dt = sim.dt
    active_time = {h.id: 0.0 for h in hosts}
    saturated_time = {h.id: 0.0 for h in hosts}
    requested = {vm.id: 0.0 for vm in vm_list}
    degradation = {vm.id: 0.0 for vm in vm_list}
    records = []

    for step in range(horizon):
        now = step * dt
        for h in hosts:
            h.waking = False

        # (1) demands from traces
        for vm in vm_list:
            vm.set_demand(trace_of[vm.id].samples[step] / 100.0 * vm.spec.mips)
            vm.demand_history.append(vm.cpu_demand)
            requested[vm.id] += vm.cpu_demand * dt
        for h in hosts:
            h.demand = sum(sim.vms[v].cpu_demand for v in h.resident_vms)
            h.ram_allocated = sum(sim.vms[v].ram_used for v in h.resident_vms)
            h.reserved_demand = 0.0
        start_demand = {h.id: h.demand for h in hosts}
        violated = {h.id for h in hosts if sla_flags(h, h.demand)}
        was_active = {h.id for h in hosts if h.is_active}

        # (2) utilization histories
        for h in hosts:
            h.utilization_history.clear()
            h.utilization_history.extend(sim.composed_history(h))

        started_before = len(sim.migrations)
        channels = _Channels(dt)

        def has_channel(h):
            return channels.available(h.id)

        # (3) overloaded hosts
        overloaded = [h for h in hosts
                      if h.is_active and h.resident_vms
                      and is_overloaded(policy, h.utilization, h.utilization_history)]
        to_move = []
        for h in overloaded:
            chosen = []
            while True:
                vm_id = sim.selector(h, sim.host_vms(h, chosen))
                if vm_id is None:
                    break
                chosen.append(vm_id)
                remaining = sum(vm.cpu_demand for vm in sim.host_vms(h, chosen))
                history = sim.composed_history(h, chosen)
                if not is_overloaded(policy, remaining / h.capacity, history):
                    break
            to_move.extend(sim.vms[v] for v in chosen)
        overloaded_ids = {h.id for h in overloaded}
        caps = sim.caps()
        if to_move:
            plan = pabfd_place(to_move, hosts, overloaded_ids, utilization_cap=caps,
                               has_bandwidth=has_channel)
            for vm in sorted(to_move, key=lambda vm: vm.id):
                dest_id = plan.get(vm.id)
                # a woken host accepts load from the next step on
                if dest_id is None or by_id[dest_id].waking:
                    continue
                sim.start_migrations([(vm, by_id[dest_id])], channels, now)

        # (4) underloaded hosts
        busy = {m.source.id for m in sim.in_flight} | {m.dest.id for m in sim.in_flight}
        no_evacuate = overloaded_ids | busy
        no_receive = set(overloaded_ids)
        receivers = [h for h in hosts if h.is_active and not h.waking]
        evacuated = 0
        room = _max_free_ram(receivers, no_receive)
        # candidates in find_underloaded order; utilizations are fixed within the pass
        for h in sorted(receivers, key=lambda h: (h.utilization, h.id)):
            if sim.max_evacuations is not None and evacuated >= sim.max_evacuations:
                break
            if h.id in no_evacuate or not h.resident_vms:
                continue
            no_evacuate.add(h.id)
            residents = sim.host_vms(h)
            if any(vm.in_migration for vm in residents) or not has_channel(h):
                continue
            if max(vm.ram_used for vm in residents) > room:
                continue
            plan = pabfd_place(residents, receivers, no_receive | {h.id},
                               utilization_cap=caps, allow_wake=False,
                               has_bandwidth=has_channel)
            if len(plan) < len(residents):
                continue
            moves = [(vm, by_id[plan[vm.id]]) for vm in sorted(residents, key=lambda vm: vm.id)]
            if not sim.start_migrations(moves, channels, now):
                continue
            no_receive.add(h.id)
            no_evacuate.update(plan.values())
            room = _max_free_ram(receivers, no_receive)
            evacuated += 1

        # (5) run this step's migrations to completion
        events = {}
        engaged = {}
        for mig in sim.in_flight:
            vm, src, dst = mig.vm, mig.source, mig.dest
            degradation[vm.id] += MIGRATION_DEGRADATION * vm.cpu_demand * mig.duration
            events.setdefault(src.id, []).append((mig.end, -vm.cpu_demand))
            events.setdefault(dst.id, []).append((mig.end, vm.cpu_demand))
            for h in (src, dst):
                engaged[h.id] = max(engaged.get(h.id, 0.0), mig.end)
            src.resident_vms.remove(vm.id)
            src.demand -= vm.cpu_demand
            src.ram_allocated -= vm.ram_used
            dst.resident_vms.append(vm.id)
            dst.demand += vm.cpu_demand
            dst.reserved_demand -= vm.cpu_demand
            vm.host = dst.id
            vm.in_migration = False
            vm.migration_remaining = 0.0
        sim.in_flight = []

        # (6) sleep empty hosts
        for h in hosts:
            if h.is_active and not h.resident_vms and not h.waking:
                h.sleep()

        # (7) energy and SLA time
        energy = 0.0
        n_active = 0
        host_energy = {}
        for h in hosts:
            if h.is_active:
                busy_for = dt
            elif h.id in was_active:
                # hosts put to sleep this step drew power while their VMs left
                busy_for = min(dt, engaged.get(h.id, 0.0))
            else:
                busy_for = 0.0
            if busy_for <= 0:
                continue
            n_active += 1
            active_time[h.id] += busy_for
            host_kwh = 0.0
            for length, demand in _segments(start_demand[h.id], events.get(h.id, ()), busy_for):
                u = min(1.0, max(0.0, demand / h.capacity))
                host_kwh += step_energy(power_at(h.spec.power_curve, u), length)
                if demand >= h.capacity:
                    saturated_time[h.id] += length
            host_energy[h.id] = host_kwh
            energy += host_kwh
        records.append(StepRecord(now, n_active, energy,
                                  sum(1 for hid in violated if hid in was_active),
                                  len(sim.migrations) - started_before, host_energy))
        if observer is not None:
            observer(step, hosts, sim.vms)

    report = RunReport(
        policy=policy.name,
        seed=seed,
        step_seconds=dt,
        steps=tuple(records),
        migrations=tuple(sim.migrations),
        host_active_time=active_time,
        host_saturated_time=saturated_time,
        vm_requested=requested,
        vm_degradation=degradation,
    )
    if event_log is not None:
        write_event_log(report, event_log)
    return report

"""Power-aware best fit decreasing (PABFD) VM placement."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

from .errors import ConfigurationError
from .model import HostState, VmState
from .power import power_at


def _power_delta(host: HostState, load: float, extra: float) -> float:
    cap = host.capacity
    before = power_at(host.spec.power_curve, min(1.0, load / cap))
    after = power_at(host.spec.power_curve, min(1.0, (load + extra) / cap))
    return after - before


def pabfd_place(
    vms: Sequence[VmState],
    hosts: Sequence[HostState],
    excluded: Iterable[int] = (),
    *,
    demand: Callable[[VmState], float] | None = None,
    utilization_cap: float | Mapping[int, float] = 1.0,
    allow_wake: bool = True,
    has_bandwidth: Callable[[HostState], bool] | None = None,
) -> dict:
    """Assign VMs to hosts by minimal estimated power increase.

    VMs are taken in decreasing demand order (ties by id). A host fits when its
    free RAM and CPU up to ``utilization_cap`` can take the VM and
    ``has_bandwidth(host)`` holds (default: a free migration channel); an
    empty host only needs raw CPU capacity. Sleeping hosts are tried
    only when no active host fits, and the chosen one is woken. VMs that fit
    nowhere are left out of the returned ``{vm id: host id}`` map.
    """
    demand = demand or (lambda vm: vm.cpu_demand)
    has_bandwidth = has_bandwidth or (lambda h: h.free_bandwidth >= h.migration_bandwidth)
    skip = set(excluded)
    order = sorted(vms, key=lambda vm: (-demand(vm), vm.id))

    load = {h.id: h.load for h in hosts}
    ram = {h.id: h.ram_allocated for h in hosts}

    if isinstance(utilization_cap, Mapping):
        cap_of = lambda host: utilization_cap.get(host.spec.id, 1.0)  # noqa: E731
    else:
        cap_of = lambda host: utilization_cap  # noqa: E731

    # (id, host, RAM capacity, CPU capacity, cap) for every eligible host
    rows = [(h.spec.id, h, h.spec.ram_capacity, h.spec.total_mips, cap_of(h))
            for h in hosts if h.spec.id not in skip]
    no_channel = {hid for hid, h, *_ in rows if not has_bandwidth(h)}

    def best_of(candidates, vm, d):
        best = None
        for hid, host, ram_cap, cpu_cap, cap in candidates:
            if ram[hid] + vm.ram_used > ram_cap or hid in no_channel:
                continue
            used = load[hid]
            limit = cpu_cap if used == 0 else cap * cpu_cap
            if used + d > limit:
                continue
            key = (_power_delta(host, used, d), hid)
            if best is None or key < best[0]:
                best = (key, host)
        return None if best is None else best[1]

    active = [r for r in rows if r[1].is_active]
    sleeping = [r for r in rows if not r[1].is_active]
    placement = {}
    for vm in order:
        d = demand(vm)
        host = best_of(active, vm, d)
        if host is None and allow_wake:
            host = best_of(sleeping, vm, d)
            if host is not None:
                host.wake()
                row = next(r for r in sleeping if r[1] is host)
                sleeping.remove(row)
                active.append(row)
        if host is None:
            continue
        placement[vm.id] = host.id
        load[host.id] += d
        ram[host.id] += vm.ram_used
    return placement


def initial_allocation(vms: Sequence[VmState], hosts: Sequence[HostState]) -> dict:
    """Place every VM reserving its full instance MIPS; all VMs must fit."""
    placement = pabfd_place(vms, hosts, demand=lambda vm: vm.spec.mips,
                            allow_wake=True, has_bandwidth=lambda h: True)
    for vm in sorted(vms, key=lambda vm: (-vm.spec.mips, vm.id)):
        if vm.id not in placement:
            raise ConfigurationError(
                f"VM {vm.id} ({vm.spec.mips:g} MIPS, {vm.ram_used:g} MiB) does not fit in the fleet")
    return placement

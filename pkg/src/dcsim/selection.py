"""VM selection: which VM leaves an overloaded host.

MxMT picks the VM with the longest live-migration time (RAM in use over the
host's migration bandwidth), MMT the shortest, RC a uniformly random one.
VMs already being migrated are never candidates.
"""

from __future__ import annotations

import random
from typing import Callable, Iterable

from .errors import NoBandwidthError
from .model import MIB_TO_MBIT, HostState, PolicyConfig, VmState


def _candidates(vms: Iterable[VmState]) -> list[VmState]:
    return sorted((vm for vm in vms if not vm.in_migration), key=lambda vm: vm.id)


def migration_cost_ratio(vm: VmState, host: HostState) -> float:
    """RAM in use (Mbit) over the bandwidth a single migration gets on ``host``."""
    return vm.ram_used * MIB_TO_MBIT / host.migration_bandwidth


def select_mxmt(host: HostState, vms: Iterable[VmState]):
    best = None
    for vm in _candidates(vms):
        ratio = migration_cost_ratio(vm, host)
        if best is None or ratio > best[0]:
            best = (ratio, vm.id)
    return None if best is None else best[1]


def select_mmt(host: HostState, vms: Iterable[VmState]):
    best = None
    for vm in _candidates(vms):
        ratio = migration_cost_ratio(vm, host)
        if best is None or ratio < best[0]:
            best = (ratio, vm.id)
    return None if best is None else best[1]


def select_rc(host: HostState, vms: Iterable[VmState], rng: random.Random):
    candidates = _candidates(vms)
    if not candidates:
        return None
    return rng.choice(candidates).id


def selector_for(policy: PolicyConfig, rng: random.Random | None = None) -> Callable:
    """A ``(host, vms) -> vm id | None`` function for ``policy.selection``."""
    if policy.selection == "MxMT":
        return select_mxmt
    if policy.selection == "MMT":
        return select_mmt
    rng = rng if rng is not None else random.Random(0)
    return lambda host, vms: select_rc(host, vms, rng)


def migration_time(vm: VmState, host: HostState) -> float:
    """Seconds to copy the VM's memory over the host's migration bandwidth."""
    bandwidth = min(host.migration_bandwidth, host.free_bandwidth)
    if bandwidth <= 0:
        raise NoBandwidthError(f"host {host.id} has no free migration bandwidth")
    return vm.ram_used * MIB_TO_MBIT / bandwidth

import random

import pytest
from hypothesis import given, settings, strategies as st

from dcsim.errors import ConfigurationError
from dcsim.model import HostMode, make_default_datacenter, make_vms
from dcsim.placement import initial_allocation, pabfd_place
from dcsim.power import power_at

from conftest import make_host, make_vm, place


def loaded(host_id, model, u, ram=613):
    host = make_host(host_id, model)
    return place(host, make_vm(1000 + host_id, mips=10_000, ram=ram, demand=u * host.capacity))


def greedy_oracle(vms, hosts, cap=1.0):
    """Sequential exhaustive minimization of marginal power, one VM at a time."""
    load = {h.id: h.load for h in hosts}
    ram = {h.id: h.ram_allocated for h in hosts}
    out = {}
    for vm in sorted(vms, key=lambda v: (-v.cpu_demand, v.id)):
        for pool in ([h for h in hosts if h.is_active], [h for h in hosts if not h.is_active]):
            scored = []
            for h in pool:
                limit = h.capacity if load[h.id] == 0 else cap * h.capacity
                if ram[h.id] + vm.ram_used > h.spec.ram_capacity or load[h.id] + vm.cpu_demand > limit:
                    continue
                before = power_at(h.spec.power_curve, min(1, load[h.id] / h.capacity))
                after = power_at(h.spec.power_curve, min(1, (load[h.id] + vm.cpu_demand) / h.capacity))
                scored.append((after - before, h.id))
            if scored:
                _, hid = min(scored)
                out[vm.id] = hid
                load[hid] += vm.cpu_demand
                ram[hid] += vm.ram_used
                if pool and not pool[0].is_active:
                    next(h for h in hosts if h.id == hid).mode = HostMode.ACTIVE
                break
    return out


def test_single_vm_matches_exhaustive_choice():
    hosts = [loaded(0, "G4", 0.5), loaded(1, "G4", 0.1)]
    vm = make_vm(1, mips=500, demand=372)
    expected = min(hosts, key=lambda h: (
        power_at(h.spec.power_curve, h.utilization + 0.1) - power_at(h.spec.power_curve, h.utilization), h.id))
    assert pabfd_place([vm], hosts) == {1: expected.id}


def test_infeasible_vm_is_left_out():
    hosts = [loaded(0, "G4", 0.9)]
    assert pabfd_place([make_vm(1, mips=2500, demand=2500)], hosts) == {}


def test_decreasing_demand_order():
    host = make_host(0)
    small, big = make_vm(1, demand=500, ram=2000), make_vm(2, mips=2000, demand=2000, ram=2000)
    host.ram_allocated = 4096 - 2000  # room for exactly one
    assert pabfd_place([small, big], [host]) == {2: 0}


def test_ram_is_checked():
    host = make_host(0)
    assert pabfd_place([make_vm(1, ram=4097, demand=10)], [host]) == {}


def test_excluded_hosts():
    hosts = [make_host(0), make_host(1)]
    assert pabfd_place([make_vm(1, demand=100)], hosts, excluded={0}) == {1: 1}


def test_bandwidth_predicate():
    hosts = [make_host(0), make_host(1)]
    hosts[0].migrations_in_flight = 2
    assert pabfd_place([make_vm(1, demand=100)], hosts) == {1: 1}
    assert pabfd_place([make_vm(1, demand=100)], hosts, has_bandwidth=lambda h: h.id == 0) == {1: 0}


def test_sleeping_hosts_only_when_needed():
    active = loaded(0, "G4", 0.5)
    asleep = make_host(1, "G4")
    asleep.mode = HostMode.SLEEPING
    assert pabfd_place([make_vm(1, demand=100)], [active, asleep]) == {1: 0}
    assert asleep.mode is HostMode.SLEEPING
    plan = pabfd_place([make_vm(2, mips=3000, demand=3000)], [active, asleep])
    assert plan == {2: 1}
    assert asleep.is_active and asleep.waking


def test_no_wake_when_disallowed():
    asleep = make_host(0)
    asleep.mode = HostMode.SLEEPING
    assert pabfd_place([make_vm(1, demand=100)], [asleep], allow_wake=False) == {}
    assert not asleep.is_active


def test_utilization_cap():
    host = loaded(0, "G4", 0.5)
    vm = make_vm(1, demand=0.2 * host.capacity)
    assert pabfd_place([vm], [host], utilization_cap=0.6) == {}
    assert pabfd_place([vm], [host], utilization_cap={0: 0.8}) == {1: 0}
    empty = make_host(1)
    big = make_vm(2, mips=5000, demand=0.95 * empty.capacity)
    assert pabfd_place([big], [empty], utilization_cap=0.5) == {2: 1}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_exhaustive_greedy(seed):
    rng = random.Random(seed)
    hosts = []
    for i in range(rng.randint(1, 4)):
        h = make_host(i, rng.choice(["G4", "G5"]))
        if rng.random() < 0.7:
            place(h, make_vm(100 + i, mips=10_000, ram=rng.choice([613, 870, 1740]),
                             demand=rng.uniform(0, 0.9) * h.capacity))
        elif rng.random() < 0.5:
            h.mode = HostMode.SLEEPING
        hosts.append(h)
    vms = [make_vm(i, mips=2500, ram=rng.choice([613, 870, 1740, 3840]),
                   demand=rng.choice([0, 250, 500, 1000, 2000, 2500])) for i in range(rng.randint(1, 6))]
    cap = rng.choice([1.0, 0.8])
    mirror = [make_host(h.id, h.spec.model) for h in hosts]
    for m, h in zip(mirror, hosts):
        m.mode, m.demand, m.ram_allocated = h.mode, h.demand, h.ram_allocated
    assert pabfd_place(vms, hosts, utilization_cap=cap) == greedy_oracle(vms, mirror, cap)


@given(st.permutations(list(range(6))))
def test_input_order_irrelevant(perm):
    vms = [make_vm(i, mips=2500, demand=[2000, 500, 500, 1000, 0, 2500][i]) for i in range(6)]
    hosts_a = [make_host(i, "G4" if i % 2 else "G5") for i in range(3)]
    hosts_b = [make_host(i, "G4" if i % 2 else "G5") for i in range(3)]
    assert pabfd_place(vms, hosts_a) == pabfd_place([vms[i] for i in perm], hosts_b)


@given(st.integers(0, 1000))
def test_never_overcommits(seed):
    rng = random.Random(seed)
    hosts = [make_host(i, rng.choice(["G4", "G5"])) for i in range(3)]
    vms = [make_vm(i, mips=2500, ram=rng.choice([613, 870, 1740, 3840]), demand=rng.uniform(0, 2500))
           for i in range(8)]
    plan = pabfd_place(vms, hosts)
    for h in hosts:
        mine = [vm for vm in vms if plan.get(vm.id) == h.id]
        assert sum(vm.ram_used for vm in mine) <= 4096
        assert sum(vm.cpu_demand for vm in mine) <= h.capacity + 1e-9


def test_initial_allocation_uses_full_mips():
    host = make_host(0)
    assert initial_allocation([make_vm(1, mips=500)], [host]) == {1: 0}
    with pytest.raises(ConfigurationError, match="VM 2"):
        initial_allocation([make_vm(1, mips=3000), make_vm(2, mips=3000)], [make_host(0)])


def test_initial_allocation_800_host_fleet():
    vms = make_vms(1052)
    plan = initial_allocation(vms, make_default_datacenter(800, 0))
    assert len(plan) == 1052

import pytest

from dcsim.model import (G4_CURVE, G5_CURVE, G4_MIPS_PER_CORE, G5_MIPS_PER_CORE, HostSpec,
                         HostState, VmSpec, VmState)
from dcsim.workload import Trace


def make_host(host_id=0, model="G4", ram=4096, bandwidth=1000):
    mips, curve = (G4_MIPS_PER_CORE, G4_CURVE) if model == "G4" else (G5_MIPS_PER_CORE, G5_CURVE)
    return HostState(HostSpec(host_id, 2, mips, ram, bandwidth, curve, model))


def make_vm(vm_id, mips=1000, ram=613, demand=0.0, host=None):
    vm = VmState(VmSpec(vm_id, mips, max(ram, 1)), ram_used=ram)
    vm.cpu_demand = demand
    vm.host = host
    return vm


def place(host, *vms):
    """Put ``vms`` on ``host`` and refresh its aggregate state."""
    for vm in vms:
        vm.host = host.id
        host.resident_vms.append(vm.id)
        host.ram_allocated += vm.ram_used
        host.demand += vm.cpu_demand
    return host


def flat_trace(vm_id, pct, n=288):
    return Trace(str(vm_id), [pct] * n)


@pytest.fixture
def g4():
    return make_host(0, "G4")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

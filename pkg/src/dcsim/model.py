"""Domain types for hosts, VMs, policies and cost parameters."""

from __future__ import annotations

import random
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable

from .errors import InvalidArgument

STEP_SECONDS = 300
HISTORY_LENGTH = 12
MIB_TO_MBIT = 8.388608

# HP ProLiant ML110 power draw (W) at 0%, 10%, ..., 100% CPU load.
G4_WATTS = (86.0, 89.4, 92.6, 96.0, 99.5, 102.0, 106.0, 108.0, 112.0, 114.0, 117.0)
G5_WATTS = (93.7, 97.0, 101.0, 105.0, 110.0, 116.0, 121.0, 125.0, 129.0, 133.0, 135.0)

G4_MIPS_PER_CORE = 1860
G5_MIPS_PER_CORE = 2660
HOST_CORES = 2
HOST_RAM_MIB = 4096
HOST_BANDWIDTH_MBIT = 1000


@dataclass(frozen=True)
class PowerCurve:
    """Power draw at the 11 load levels 0%, 10%, ..., 100%."""

    anchors: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        anchors = tuple(float(a) for a in self.anchors)
        object.__setattr__(self, "anchors", anchors)
        if len(anchors) != 11:
            raise InvalidArgument(f"power curve needs 11 anchors, got {len(anchors)}")
        if any(a <= 0 for a in anchors):
            raise InvalidArgument("power anchors must be positive")
        if any(b < a for a, b in zip(anchors, anchors[1:])):
            raise InvalidArgument("power anchors must be non-decreasing")


G4_CURVE = PowerCurve(G4_WATTS, "HP ProLiant ML110 G4")
G5_CURVE = PowerCurve(G5_WATTS, "HP ProLiant ML110 G5")


@dataclass(frozen=True)
class HostSpec:
    id: int
    cpu_cores: int
    mips_per_core: float
    ram_capacity: float
    net_bandwidth: float
    power_curve: PowerCurve
    model: str = ""

    def __post_init__(self):
        if self.cpu_cores < 1:
            raise InvalidArgument("cpu_cores must be >= 1")
        if self.mips_per_core <= 0 or self.ram_capacity <= 0 or self.net_bandwidth <= 0:
            raise InvalidArgument("host capacities must be positive")

    @property
    def total_mips(self) -> float:
        return self.cpu_cores * self.mips_per_core


@dataclass(frozen=True)
class VmSpec:
    id: Hashable
    mips: float
    ram: float
    name: str = ""

    def __post_init__(self):
        if self.mips <= 0 or self.ram <= 0:
            raise InvalidArgument("VM mips and ram must be positive")


class HostMode(str, Enum):
    ACTIVE = "active"
    SLEEPING = "sleeping"


@dataclass
class VmState:
    spec: VmSpec
    host: int | None = None
    cpu_demand: float = 0.0
    ram_used: float | None = None
    in_migration: bool = False
    migration_remaining: float = 0.0
    demand_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))

    def __post_init__(self):
        if self.ram_used is None:
            self.ram_used = self.spec.ram

    @property
    def id(self):
        return self.spec.id

    def set_demand(self, mips: float):
        if mips < 0 or mips > self.spec.mips:
            raise InvalidArgument(f"demand {mips} outside [0, {self.spec.mips}] for VM {self.id}")
        self.cpu_demand = mips


@dataclass
class HostState:
    spec: HostSpec
    mode: HostMode = HostMode.ACTIVE
    resident_vms: list = field(default_factory=list)
    utilization_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))
    demand: float = 0.0  # requested MIPS of resident VMs, may exceed capacity
    ram_allocated: float = 0.0  # MiB held by residents and inbound migrations
    reserved_demand: float = 0.0  # MIPS reserved for inbound migrations
    # engine bookkeeping
    migrations_in_flight: int = 0
    waking: bool = False

    @property
    def id(self) -> int:
        return self.spec.id

    @property
    def capacity(self) -> float:
        return self.spec.total_mips

    @property
    def utilization(self) -> float:
        """Requested CPU utilization; above 1.0 when the host is oversubscribed."""
        return self.demand / self.capacity

    @property
    def allocated_utilization(self) -> float:
        return min(1.0, self.utilization)

    @property
    def load(self) -> float:
        """MIPS committed on this host, including inbound reservations."""
        return self.demand + self.reserved_demand

    @property
    def free_ram(self) -> float:
        return self.spec.ram_capacity - self.ram_allocated

    @property
    def is_active(self) -> bool:
        return self.mode is HostMode.ACTIVE

    @property
    def migration_bandwidth(self) -> float:
        """Bandwidth granted to a single migration (half the NIC)."""
        return self.spec.net_bandwidth / 2

    @property
    def free_bandwidth(self) -> float:
        used = self.migrations_in_flight * self.migration_bandwidth
        return max(0.0, self.spec.net_bandwidth - used)

    def sleep(self):
        if self.resident_vms:
            raise InvalidArgument(f"host {self.id} still runs VMs")
        self.mode = HostMode.SLEEPING
        self.waking = False
        # drop float residue left by incremental bookkeeping
        self.demand = self.reserved_demand = self.ram_allocated = 0.0

    def wake(self):
        if self.mode is HostMode.SLEEPING:
            self.mode = HostMode.ACTIVE
            self.waking = True


DETECTIONS = ("THR", "IQR", "MAD", "LR", "LRR")
SELECTIONS = ("MXMT", "MMT", "RC")
_SELECTION_NAMES = {"MXMT": "MxMT", "MMT": "MMT", "RC": "RC"}
_POLICY_RE = re.compile(r"^\s*([A-Za-z]+)\s*-?\s*([A-Za-z]+)\s*-\s*([0-9]*\.?[0-9]+)\s*$")


@dataclass(frozen=True)
class PolicyConfig:
    """Detection / selection / safety triple, e.g. ``THR-MxMT-0.8``."""

    detection: str
    safety: float
    selection: str

    def __post_init__(self):
        det = self.detection.upper()
        sel = self.selection.upper()
        if det not in DETECTIONS:
            raise InvalidArgument(f"unknown detection policy {self.detection!r}")
        if sel not in SELECTIONS:
            raise InvalidArgument(f"unknown selection policy {self.selection!r}")
        if not self.safety > 0:
            raise InvalidArgument("safety parameter must be > 0")
        object.__setattr__(self, "detection", det)
        object.__setattr__(self, "selection", _SELECTION_NAMES[sel])
        object.__setattr__(self, "safety", float(self.safety))

    @classmethod
    def parse(cls, text: str) -> PolicyConfig:
        m = _POLICY_RE.match(text)
        if m is None:
            raise InvalidArgument(f"cannot parse policy {text!r}")
        det, sel, safety = m.groups()
        # tolerate the run-together spelling "IQRMxMT-1.5"
        if not sel.upper() in SELECTIONS or not det.upper() in DETECTIONS:
            joined = det + sel
            for d in sorted(DETECTIONS, key=len, reverse=True):
                if joined.upper().startswith(d) and joined[len(d):].upper() in SELECTIONS:
                    det, sel = d, joined[len(d):]
                    break
        return cls(det, float(safety), sel)

    @property
    def name(self) -> str:
        safety = f"{self.safety:g}"
        if "." not in safety and "e" not in safety:
            safety += ".0"
        return f"{self.detection}-{self.selection}-{safety}"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class CostParams:
    """Unit costs for the single-migration and consolidation cost models."""

    c_p: float
    c_v: float
    t_mig: float = 0.0

    def __post_init__(self):
        if self.c_p <= 0 or self.c_v <= 0:
            raise InvalidArgument("c_p and c_v must be positive")
        if self.t_mig < 0:
            raise InvalidArgument("migration time must be >= 0")

    @property
    def s(self) -> float:
        return self.c_v / self.c_p


def instance_catalog() -> list[VmSpec]:
    """The four single-core instance types (MIPS, RAM in MiB).

    Memory sizes are 0.85, 3.75 and 1.7 GiB truncated to whole MiB, plus 613 MiB.
    """
    return [
        VmSpec("high-cpu-medium", 2500, 870, "High-CPU Medium Instance"),
        VmSpec("extra-large", 2000, 3840, "Extra Large Instance"),
        VmSpec("small", 1000, 1740, "Small Instance"),
        VmSpec("micro", 500, 613, "Micro Instance"),
    ]


def make_vms(n_vms: int) -> list[VmState]:
    """``n_vms`` unplaced VMs, instance types drawn round-robin from the catalog."""
    if n_vms < 1:
        raise InvalidArgument("n_vms must be >= 1")
    catalog = instance_catalog()
    vms = []
    for i in range(n_vms):
        kind = catalog[i % len(catalog)]
        vms.append(VmState(VmSpec(i, kind.mips, kind.ram, kind.id)))
    return vms


def make_default_datacenter(n_hosts: int, seed: int = 0) -> list[HostState]:
    """Half G4, half G5 dual-core hosts; the seed permutes models over host ids."""
    if n_hosts < 2 or n_hosts % 2:
        raise InvalidArgument(f"n_hosts must be a positive even number, got {n_hosts}")
    models = ["G4"] * (n_hosts // 2) + ["G5"] * (n_hosts // 2)
    random.Random(seed).shuffle(models)
    hosts = []
    for i, model in enumerate(models):
        mips, curve = (G4_MIPS_PER_CORE, G4_CURVE) if model == "G4" else (G5_MIPS_PER_CORE, G5_CURVE)
        spec = HostSpec(i, HOST_CORES, mips, HOST_RAM_MIB, HOST_BANDWIDTH_MBIT, curve, model)
        hosts.append(HostState(spec))
    return hosts

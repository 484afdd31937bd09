"""Host power draw and energy integration."""

from __future__ import annotations

import math

from .errors import InvalidArgument
from .model import HostState, PowerCurve

JOULES_PER_KWH = 3_600_000.0


def power_at(curve: PowerCurve, utilization: float) -> float:
    """Watts drawn at ``utilization``, linear between the 10% anchors."""
    if not 0.0 <= utilization <= 1.0:
        raise InvalidArgument(f"utilization {utilization} outside [0, 1]")
    x = utilization * 10
    k = round(x)
    if math.isclose(x, k, abs_tol=1e-9):
        return curve.anchors[k]
    lo = math.floor(x)
    frac = x - lo
    a, b = curve.anchors[lo], curve.anchors[lo + 1]
    return a + (b - a) * frac


def host_power(host: HostState, utilization: float) -> float:
    if not host.is_active:
        return 0.0
    return power_at(host.spec.power_curve, utilization)


def step_energy(power: float, dt: float) -> float:
    """Energy in kWh for ``power`` watts held for ``dt`` seconds."""
    if power < 0 or dt <= 0:
        raise InvalidArgument("power must be >= 0 and dt > 0")
    return power * dt / JOULES_PER_KWH

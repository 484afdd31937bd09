"""Evaluation metrics over run reports and the single-migration cost model."""

from __future__ import annotations

import math
from typing import NamedTuple

from .errors import InvalidArgument
from .model import CostParams


def energy_total(report) -> float:
    """Total energy in kWh."""
    return sum(step.energy for step in report.steps)


def slatah(report) -> float:
    """Mean, over hosts that were ever active, of saturated time / active time."""
    ratios = [report.host_saturated_time[h] / t
              for h, t in report.host_active_time.items() if t > 0]
    if not ratios:
        return 0.0
    return sum(ratios) / len(ratios)


def pdm(report) -> float:
    """Mean, over VMs, of migration degradation / requested CPU time."""
    if not report.vm_requested:
        return 0.0
    total = 0.0
    for vm, requested in report.vm_requested.items():
        lost = report.vm_degradation.get(vm, 0.0)
        if requested > 0:
            total += lost / requested
    return total / len(report.vm_requested)


def slav(report) -> float:
    return slatah(report) * pdm(report)


def esv(report) -> float:
    return energy_total(report) * slatah(report) * pdm(report)


def migration_count(report) -> int:
    return len(report.migrations)


UNCOVERED = 0


class MigrationCost(NamedTuple):
    cost: float
    case: int  # 1, 2, 3, or UNCOVERED


def single_migration_cost(v: float, m: float, params: CostParams) -> MigrationCost:
    """Cost of one migration started at ``m`` against a violation starting at ``v``.

    The three cases are selected by their literal conditions. When none
    applies (``m == v`` with a zero migration time) the result is
    ``MigrationCost(nan, UNCOVERED)``.
    """
    T, cp, cv = params.t_mig, params.c_p, params.c_v
    if m < v and v - m >= T:
        return MigrationCost((v - m) * cp, 1)
    if m <= v and v - m < T:
        return MigrationCost((v - m) * cp + 2 * (m - v + T) * cp + (m - v + T) * cv, 2)
    if m > v:
        r = m - v
        return MigrationCost(r * cp + (r - m + v) * cp + r * cv, 3)
    return MigrationCost(math.nan, UNCOVERED)


def total_cost(report, params: CostParams) -> float:
    """Sum over steps of c_p per active host plus c_v per violating host."""
    return sum(params.c_p * step.active_hosts + params.c_v * step.violations
               for step in report.steps)


def competitive_bound(m_vms_per_host: float, s: float) -> float:
    """Upper bound on the online/offline cost ratio for consolidation."""
    if m_vms_per_host < 0 or s < 0:
        raise InvalidArgument("m and s must be non-negative")
    return 1 + m_vms_per_host * s / (2 * (m_vms_per_host + 1))


def summarize(report) -> dict:
    """Row of headline metrics for one run."""
    e, sl, pd = energy_total(report), slatah(report), pdm(report)
    return {
        "energy_kwh": e,
        "slatah": sl,
        "pdm": pd,
        "slav": sl * pd,
        "esv": e * sl * pd,
        "migrations": migration_count(report),
    }

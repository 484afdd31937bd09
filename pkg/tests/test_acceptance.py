"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The sweep criteria (3-5) run 12 policies on 10 synthetic days at desk scale
(100 hosts, 150 VMs, 288 five-minute steps).
"""

import os
import random
from statistics import mean

import numpy as np
import pytest

from dcsim import cli
from dcsim.metrics import UNCOVERED, competitive_bound, single_migration_cost
from dcsim.model import G4_CURVE, G5_CURVE, CostParams, PolicyConfig, make_default_datacenter, make_vms
from dcsim.power import power_at
from dcsim.selection import select_mmt, select_mxmt
from dcsim.workload import Trace

from conftest import ACCEPTANCE_LINES, make_host, make_vm
from test_engine import conservation_observer

HOSTS, VMS, HORIZON, DAYS = 100, 150, 288, tuple(range(10))
PAIRS = [("THR", 0.8), ("IQR", 1.5), ("MAD", 2.5), ("LRR", 1.2), ("LR", 1.2), ("THR", 1.0)]


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def name(det, safety, sel):
    return PolicyConfig(det, safety, sel).name


@pytest.fixture(scope="module")
def sweep():
    policies = tuple(PolicyConfig(d, s, sel) for d, s in PAIRS for sel in ("MxMT", "MMT"))
    config = cli.Experiment(hosts=HOSTS, vms=VMS, horizon=HORIZON, policies=policies, days=DAYS)
    rows = cli.run_sweep(config, parallel=os.cpu_count() or 1)
    table = {}
    for row in rows:
        table.setdefault(row["policy"], []).append(row)
    return rows, table


def test_1_power_anchors():
    g4 = [86, 89.4, 92.6, 96, 99.5, 102, 106, 108, 112, 114, 117]
    g5 = [93.7, 97, 101, 105, 110, 116, 121, 125, 129, 133, 135]
    hits = sum(power_at(G4_CURVE, k / 10) == g4[k] for k in range(11))
    hits += sum(power_at(G5_CURVE, k / 10) == g5[k] for k in range(11))
    assert record(1, hits == 22, f"{hits}/22 exact anchors")


def test_2_selection_oracle():
    rng = random.Random(2024)
    agree = total = 0
    for _ in range(2000):
        host = make_host(bandwidth=rng.choice([100, 1000, 10_000]))
        vms = [make_vm(i, ram=rng.choice([0, 613, 870, 1740, 3840, rng.randint(1, 4096)]))
               for i in range(rng.randint(0, 10))]
        for vm in vms:
            vm.in_migration = rng.random() < 0.2
        cands = [vm for vm in vms if not vm.in_migration]
        ratio = {vm.id: vm.ram_used * 8.388608 / host.migration_bandwidth for vm in cands}
        hi = min((v for v in ratio if ratio[v] == max(ratio.values())), default=None)
        lo = min((v for v in ratio if ratio[v] == min(ratio.values())), default=None)
        agree += (select_mxmt(host, vms) == hi) + (select_mmt(host, vms) == lo)
        total += 2
    assert record(2, agree == total, f"{agree}/{total} choices agree with brute force")


def _means(table, policy, key):
    return mean(float(r[key]) for r in table[policy])


def test_3_energy_direction(sweep):
    _, table = sweep
    notes, ok = [], True
    for det, s in PAIRS:
        mx, mm = _means(table, name(det, s, "MxMT"), "energy_kwh"), _means(table, name(det, s, "MMT"), "energy_kwh")
        reduction = (mm - mx) / mm
        good = mx < mm and (not (det, s) == ("THR", 0.8) or 0.05 <= reduction <= 0.35)
        ok &= good
        notes.append(f"{det}-{s:g} {reduction:+.2%}")
    assert record(3, ok, "energy reduction MxMT vs MMT: " + ", ".join(notes))


def test_4_migration_reduction(sweep):
    _, table = sweep
    notes, ok = [], True
    for det, s in PAIRS:
        mx = sum(int(r["migrations"]) for r in table[name(det, s, "MxMT")])
        mm = sum(int(r["migrations"]) for r in table[name(det, s, "MMT")])
        reduction = (mm - mx) / mm if mm else 0.0
        ok &= reduction >= 0.60
        notes.append(f"{det}-{s:g} {mx} vs {mm} ({reduction:+.0%})")
    assert record(4, ok, "migrations MxMT vs MMT: " + ", ".join(notes))


def test_5_slatah_direction(sweep):
    _, table = sweep
    notes, ok = [], True
    for det, s in PAIRS:
        mx, mm = _means(table, name(det, s, "MxMT"), "slatah"), _means(table, name(det, s, "MMT"), "slatah")
        ok &= mx > mm
        notes.append(f"{det}-{s:g} {mx:.4f} vs {mm:.4f}")
    assert record(5, ok, "mean SLATAH MxMT vs MMT: " + ", ".join(notes))


def test_6_metric_identities(sweep):
    rows, _ = sweep
    bad = [r for r in rows
           if not (r["esv"] == r["energy_kwh"] * r["slatah"] * r["pdm"]
                   and r["slav"] == r["slatah"] * r["pdm"]
                   and 0 <= r["pdm"] <= 0.1 and 0 <= r["slatah"] <= 1)]
    assert record(6, not bad and len(rows) == 120, f"{len(rows) - len(bad)}/{len(rows)} runs satisfy the identities")


def test_7_cost_utilities():
    params = CostParams(1.0, 3.0, 60.0)
    cases = {single_migration_cost(v, m, params).case for v, m in [(200, 100), (100, 80), (100, 100), (100, 150)]}
    grid = np.linspace(0.0, 20.0, 10)
    values = np.array([[competitive_bound(m, s) for s in grid] for m in grid])
    monotone = bool(np.all(np.diff(values, axis=0) >= 0) and np.all(np.diff(values, axis=1) >= 0))
    ok = cases == {1, 2, 3} and competitive_bound(1, 1) == 1.25 and monotone and values.size == 100
    ok &= single_migration_cost(5, 5, CostParams(1.0, 1.0, 0.0)).case == UNCOVERED
    assert record(7, ok, f"branches {sorted(cases)}, bound(1,1)={competitive_bound(1, 1)}, monotone on {values.size} points")


def test_8_determinism(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nhosts = 20\nvms = 30\nhorizon = 288\ndays = 0-3\n"
                   "policies = THR-MxMT-0.8, LRR-MMT-1.2, MAD-RC-2.5\nseed = 0\n")
    outs = []
    for i, parallel in enumerate(["1", "1", "8"]):
        out = tmp_path / f"r{i}.csv"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--parallel", parallel]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    assert record(8, ok, "two serial runs and a --parallel 8 run give byte-identical results.csv")


def test_9_conservation():
    rng = random.Random(99)
    horizon = 1000
    hosts = make_default_datacenter(16, seed=99)
    vms = make_vms(24)
    traces = [Trace(str(i), [min(100, int(rng.expovariate(1 / rng.choice([10, 30, 60])))) for _ in range(horizon)])
              for i in range(24)]
    failures, asleep = [], []
    from dcsim.engine import run
    report = run(hosts, vms, traces, PolicyConfig("IQR", 1.5, "MxMT"), horizon, seed=99,
                 observer=conservation_observer({vm.id for vm in vms}, failures, asleep))
    for t in range(1, horizon):
        if asleep[t - 1] & asleep[t] & set(report.steps[t].host_energy):
            failures.append((t, "sleeping host drew power"))
    ok = not failures and len(asleep) == horizon
    assert record(9, ok, f"{horizon} steps, {len(report.migrations)} migrations, {len(failures)} violations")

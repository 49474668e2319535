#!/usr/bin/env python3
"""Print the platform comparison table produced by the shipped cost table.

Run from the repo root after installing the package:

    python3 scripts/calibrate_costs.py

The asserts at the bottom are the calibration bands the defaults were tuned
against; if you edit default_cost_table() and this script still passes, the
headline acceptance checks will too.
"""

from pisa_sim.perf import PLATFORMS, WI_CHOICES, compare, default_cost_table, platform_reports
from pisa_sim.workload import svhn_workload


def main():
    wl = svhn_workload()
    costs = default_cost_table()
    print("workload: %s" % wl.name)
    print("  sensor MACs %d | PNS MACs %d | total %d" % (wl.sensor_macs, wl.pns_macs, wl.total_macs))
    for wi in sorted(WI_CHOICES):
        print("  W:I 1:%-2d  AND ops %9d  shift/adds %9d" % (wi, wl.and_ops(wi), wl.shift_adds(wi)))
    print()

    header = "%-14s %5s %12s %12s %8s %9s %7s %7s %8s" % (
        "platform", "W:I", "energy(uJ)", "latency(us)", "speedup", "transfer", "btlnk", "util", "fps"
    )
    checks = []
    for wi in sorted(WI_CHOICES):
        reports = platform_reports(wl, costs, wi)
        summary = compare(reports)
        if wi == sorted(WI_CHOICES)[0]:
            print(header)
        for r, row in zip(reports, summary.rows):
            if r.platform == "baseline-cpu" and wi != sorted(WI_CHOICES)[0]:
                continue
            print("%-14s  1:%-2d %12.2f %12.2f %7.2fx %8.1f%% %6.1f%% %6.1f%% %8.1f" % (
                r.platform, wi, r.total_energy * 1e6, r.total_latency * 1e6,
                row["speedup"], 100 * row["transfer_energy_reduction"],
                100 * r.memory_bottleneck_ratio, 100 * r.resource_utilization, r.fps,
            ))
        base = summary.row("baseline-cpu")
        pns2 = summary.row("pisa-pns-ii")
        checks.append((wi, reports, summary, base, pns2))
    print()

    for wi, reports, summary, base, pns2 in checks:
        by = {r.platform: r for r in reports}
        assert by["baseline-cpu"].memory_bottleneck_ratio > 0.90
        assert 50e-6 <= by["pisa-pns-ii"].total_energy <= 170e-6, wi
        assert 3.0 <= pns2["speedup"] <= 7.0, wi
        for p in ("pisa-pns-i", "pisa-pns-ii"):
            assert by[p].memory_bottleneck_ratio < 0.22, (p, wi)
            assert by[p].resource_utilization <= 0.83, (p, wi)
        for p in PLATFORMS[1:]:
            assert 0.79 <= summary.row(p)["transfer_energy_reduction"] <= 0.89, (p, wi)
            assert abs(by[p].fps - 1000.0) < 1e-6, (p, wi)
            assert abs(by[p].efficiency - 1.745) <= 0.1, (p, wi)
    print("all calibration bands hold")


if __name__ == "__main__":
    main()

"""Energy / latency / throughput accounting over execution traces.

A trace is a plain dict of per-stage tallies (primitive name -> count) plus
workload metadata; `account` folds it through a CostTable into a TraceReport
and never mutates it.  Accounting is linear: energy = sum(count * entry),
stage latency = serial sum, with the near-memory stage divided by the number
of parallel sub-arrays.  Host numbers are calibrated per-MAC figures, not
measurements, and reports label them as such.

Conventions:
  * memory_bottleneck_ratio = (conversion + transfer + host memory stalls)
    / total latency.  In-memory row operations count as compute, off-array
    traffic as memory.
  * resource_utilization = busy-compute latency / total latency.
  * efficiency counts 2 ops per MAC and, on platforms with an in-pixel
    stage, refers to that stage's processing energy (NVM reads + the MAC
    cycle); on host-only platforms it refers to the host MACs.
  * fps = 1 / max(frame period, post-exposure pipeline), where a frame
    period is exposure plus the in-sensor compute cycle.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

from .dram import PnsOrganization
from .errors import MissingCost, WorkloadMismatch
from .workload import Workload

PLATFORMS = ("baseline-cpu", "pisa-cpu", "pisa-gpu", "pisa-pns-i", "pisa-pns-ii")

CPU_STALL_FRACTION = 0.85
GPU_STALL_FRACTION = 0.60

WI_CHOICES = (32, 16, 8, 4)  # weight:input configurations 1:32 .. 1:4


class CostEntry(NamedTuple):
    energy: float  # J per operation
    latency: float  # s per operation


def default_cost_table() -> "CostTable":
    """Shipped calibration; scripts/calibrate_costs.py checks the bands."""
    return CostTable(
        entries={
            "pixel_sense": CostEntry(24.4e-12, 0.0),
            "adc_convert_per_sample": CostEntry(4.1e-12, 0.25e-6),
            "sensor_compute_cycle": CostEntry(1.91538e-7, 100e-6),
            "nvm_read": CostEntry(1e-12, 0.0),
            "transfer_per_bit_host": CostEntry(15e-12, 35e-9),
            "transfer_per_bit_pns": CostEntry(12e-12, 16e-9),
            "dram_row_activate": CostEntry(0.35e-9, 45e-9),
            "row_copy": CostEntry(100e-12, 90e-9),
            "dra_compute_cycle": CostEntry(40e-12, 45e-9),
            "drisa_compute_cycle": CostEntry(40e-12, 45e-9),
            "tra_step": CostEntry(115e-12, 90e-9),
            "dpu_bitcount_per_row": CostEntry(60e-12, 10e-9),
            "dpu_shift_add": CostEntry(10e-12, 1e-9),
            "host_cpu_per_mac": CostEntry(30e-12, 60e-12),
            "host_gpu_per_mac": CostEntry(8e-12, 15e-12),
        },
        sensing_standby_w=0.0,
        processing_standby_w=38e-3,
    )


@dataclass
class CostTable:
    entries: dict
    sensing_standby_w: float = 0.0
    processing_standby_w: float = 0.0

    def __post_init__(self):
        for name, e in self.entries.items():
            if e.energy < 0 or e.latency < 0:
                raise ValueError("cost entry %r must be non-negative" % name)
        if self.sensing_standby_w < 0 or self.processing_standby_w < 0:
            raise ValueError("standby powers must be non-negative")

    def __getitem__(self, name) -> CostEntry:
        try:
            return self.entries[name]
        except KeyError:
            raise MissingCost("no cost entry for primitive %r" % (name,)) from None

    def scaled(self, k: float) -> "CostTable":
        return CostTable(
            entries={n: CostEntry(e.energy * k, e.latency * k) for n, e in self.entries.items()},
            sensing_standby_w=self.sensing_standby_w * k,
            processing_standby_w=self.processing_standby_w * k,
        )

    def energy_of(self, tally) -> float:
        return sum(c * self[name].energy for name, c in tally.items())

    def latency_of(self, tally) -> float:
        return sum(c * self[name].latency for name, c in tally.items())


@dataclass
class TraceReport:
    platform: str
    workload_id: str
    energy: dict  # sensor / data_transfer / off_chip / pns, J
    total_latency: float
    fps: float
    efficiency: float  # TOp/s/W, 2 ops per MAC
    memory_bottleneck_ratio: float
    resource_utilization: float

    @property
    def total_energy(self) -> float:
        return sum(self.energy.values())

    def to_dict(self):
        return {
            "platform": self.platform,
            "workload": self.workload_id,
            "energy_j": {**self.energy, "total": self.total_energy},
            "latency_s": self.total_latency,
            "fps": self.fps,
            "efficiency_tops_per_w": self.efficiency,
            "memory_bottleneck_ratio": self.memory_bottleneck_ratio,
            "resource_utilization": self.resource_utilization,
            "host_costs": "calibrated, not measured",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_trace(workload: Workload, platform: str, wi: int = 4) -> dict:
    """Per-stage tallies for one frame of `workload` on `platform`."""
    if platform not in PLATFORMS:
        raise ValueError("unknown platform %r" % (platform,))
    if wi not in WI_CHOICES:
        raise ValueError("wi must be one of %r (input bits)" % (WI_CHOICES,))
    mn = workload.sensor_m * workload.sensor_n
    sensor = Counter()
    transfer = Counter()
    pns = Counter()
    host = Counter()

    if platform == "baseline-cpu":
        # sensing-only readout, full frame off chip, every layer on the host
        sensor["pixel_sense"] = mn
        sensor["adc_convert_per_sample"] = mn
        transfer["transfer_per_bit_host"] = mn * workload.adc_bits
        host["host_cpu_per_mac"] = workload.total_macs
    else:
        sensor["pixel_sense"] = mn
        sensor["sensor_compute_cycle"] = 1
        sensor["nvm_read"] = workload.sensor_macs
        if platform in ("pisa-cpu", "pisa-gpu"):
            transfer["transfer_per_bit_host"] = workload.v
            key = "host_cpu_per_mac" if platform == "pisa-cpu" else "host_gpu_per_mac"
            host[key] = workload.pns_macs
        else:
            transfer["transfer_per_bit_pns"] = workload.v
            transfer["transfer_per_bit_host"] = workload.classes * 16  # logits return
            ands = workload.and_ops(wi)
            pns["row_copy"] = 2 * ands
            if platform == "pisa-pns-ii":
                pns["dra_compute_cycle"] = ands
            else:
                pns["drisa_compute_cycle"] = 3 * ands
            pns["dpu_bitcount_per_row"] = ands
            pns["dpu_shift_add"] = workload.shift_adds(wi)

    return {
        "sensor": sensor,
        "transfer": transfer,
        "pns": pns,
        "host": host,
        "meta": {
            "workload_id": "%s-wi%d" % (workload.name, wi),
            "platform": platform,
            "wi": wi,
            "sensor_macs": workload.sensor_macs if platform != "baseline-cpu" else 0,
            "host_macs": int(sum(host.values())),
            "exposure_time": 0.9e-3,
            "clock_period": 100e-6,
            "parallel_subarrays": PnsOrganization().parallel_subarrays,
        },
    }


def account(trace: dict, costs: CostTable, platform: str) -> TraceReport:
    """Fold a trace through the cost table; pure function of its inputs."""
    meta = trace["meta"]
    if platform != meta["platform"]:
        raise WorkloadMismatch(
            "trace was built for %r, not %r" % (meta["platform"], platform)
        )
    sensor_t, transfer_t = trace["sensor"], trace["transfer"]
    pns_t, host_t = trace["pns"], trace["host"]

    frame_period = meta["exposure_time"] + meta["clock_period"]

    e_sensor = costs.energy_of(sensor_t) + costs.sensing_standby_w * frame_period
    e_transfer = costs.energy_of(transfer_t)
    e_host = costs.energy_of(host_t)
    e_pns = costs.energy_of(pns_t)
    if pns_t:
        e_pns += costs.processing_standby_w * frame_period

    l_sensor = costs.latency_of(sensor_t) - sensor_t.get("pixel_sense", 0) * costs["pixel_sense"].latency
    l_transfer = costs.latency_of(transfer_t)
    l_pns = costs.latency_of(pns_t) / meta["parallel_subarrays"]
    l_host = costs.latency_of(host_t)
    total_latency = l_sensor + l_transfer + l_pns + l_host

    l_conversion = sensor_t.get("adc_convert_per_sample", 0) * costs["adc_convert_per_sample"].latency
    l_compute_cycle = sensor_t.get("sensor_compute_cycle", 0) * costs["sensor_compute_cycle"].latency
    stall = CPU_STALL_FRACTION if "host_cpu_per_mac" in host_t else GPU_STALL_FRACTION
    l_stall = stall * l_host if host_t else 0.0

    bottleneck = 0.0
    utilization = 0.0
    if total_latency > 0:
        bottleneck = (l_conversion + l_transfer + l_stall) / total_latency
        utilization = (l_compute_cycle + l_pns + (l_host - l_stall)) / total_latency

    post_exposure = l_compute_cycle + l_transfer + l_pns + l_host + l_conversion
    sensor_frame = meta["exposure_time"] + l_compute_cycle + l_conversion
    period = max(frame_period if l_compute_cycle else sensor_frame, post_exposure)
    fps = 1.0 / period if period > 0 else 0.0

    if meta["sensor_macs"]:
        proc_energy = (
            sensor_t.get("nvm_read", 0) * costs["nvm_read"].energy
            + sensor_t.get("sensor_compute_cycle", 0) * costs["sensor_compute_cycle"].energy
        )
        efficiency = 2.0 * meta["sensor_macs"] / proc_energy / 1e12 if proc_energy else 0.0
    else:
        efficiency = 2.0 * meta["host_macs"] / e_host / 1e12 if e_host else 0.0

    return TraceReport(
        platform=platform,
        workload_id=meta["workload_id"],
        energy={
            "sensor": e_sensor,
            "data_transfer": e_transfer,
            "off_chip": e_host,
            "pns": e_pns,
        },
        total_latency=total_latency,
        fps=fps,
        efficiency=efficiency,
        memory_bottleneck_ratio=bottleneck,
        resource_utilization=utilization,
    )


@dataclass
class ComparisonSummary:
    baseline: str
    workload_id: str
    rows: list = field(default_factory=list)

    def row(self, platform):
        for r in self.rows:
            if r["platform"] == platform:
                return r
        raise KeyError(platform)

    def to_csv(self) -> str:
        cols = [
            "platform", "total_energy_j", "latency_s", "speedup",
            "transfer_energy_reduction", "memory_bottleneck_ratio",
            "resource_utilization", "fps",
        ]
        out = [",".join(cols)]
        for r in self.rows:
            out.append(",".join("%s" % r[c] for c in cols))
        return "\n".join(out) + "\n"


def compare(reports) -> ComparisonSummary:
    """Ratios of each report against the baseline-cpu report."""
    reports = list(reports)
    if not reports:
        raise WorkloadMismatch("nothing to compare")
    wid = reports[0].workload_id
    base = None
    for r in reports:
        if r.workload_id != wid:
            raise WorkloadMismatch(
                "mixed workloads: %r vs %r" % (r.workload_id, wid)
            )
        if r.platform == "baseline-cpu":
            base = r
    if base is None:
        base = reports[0]
    summary = ComparisonSummary(baseline=base.platform, workload_id=wid)
    for r in reports:
        base_tr = base.energy["data_transfer"]
        summary.rows.append({
            "platform": r.platform,
            "total_energy_j": r.total_energy,
            "latency_s": r.total_latency,
            "speedup": base.total_latency / r.total_latency if r.total_latency else float("inf"),
            "transfer_energy_reduction": 1.0 - r.energy["data_transfer"] / base_tr if base_tr else 0.0,
            "memory_bottleneck_ratio": r.memory_bottleneck_ratio,
            "resource_utilization": r.resource_utilization,
            "fps": r.fps,
        })
    return summary


def platform_reports(workload: Workload, costs: CostTable = None, wi: int = 4):
    costs = costs or default_cost_table()
    return [account(build_trace(workload, p, wi), costs, p) for p in PLATFORMS]

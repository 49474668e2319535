"""Command-line surface.

    pisa-sim infer --weights net.pisaw --images test.idx.gz [--labels ...]
    pisa-sim mc dram --sigma 5,10,15,20,30 --trials 10000
    pisa-sim perf --wi all --out reports/perf
    pisa-sim dump-trace --weights net.pisaw --images test.idx.gz --limit 4
    pisa-sim selftest [--weights net.pisaw --golden vectors.json]

Exit codes: 0 success, 1 usage, 2 broken input data or files,
3 an internal consistency check failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .dram import DramSubArray
from .errors import PisaError
from .io_config import RunConfig, load_config
from .io_golden import check_golden
from .io_images import load_images, load_labels
from .io_weights import load_weights
from .perf import WI_CHOICES, account, compare, default_cost_table, platform_reports
from .pipeline import PisaSystem, merge_traces, per_frame_trace, run_batch
from .sensor import CfpArray
from .variation import mc_dram_sweep, mc_sensor_sweep, sweep_to_csv
from .workload import svhn_workload


def _write_or_print(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print("wrote %s" % out)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "platform", None):
        cfg.platform = args.platform
    if getattr(args, "wi", None) not in (None, "all"):
        cfg.wi = int(args.wi)
    if getattr(args, "cost_table", None):
        cfg.cost_table_path = args.cost_table
    if getattr(args, "substrate", None):
        cfg.substrate = args.substrate
    if getattr(args, "seed", None) is not None:
        cfg.variation = replace(cfg.variation, seed=args.seed)
    return cfg


def _load_net(args, cfg, explicit_hw):
    hw = (cfg.sensor_m, cfg.sensor_n) if explicit_hw else None
    return load_weights(args.weights, input_hw=hw)


def _find_labels(args):
    if args.labels:
        return load_labels(args.labels)
    # canonical MNIST naming: ...-images-idx3-... <-> ...-labels-idx1-...
    guess = str(args.images).replace("images", "labels").replace("idx3", "idx1")
    if guess != str(args.images):
        try:
            return load_labels(guess)
        except Exception:
            return None
    return None


def cmd_infer(args) -> int:
    cfg = _load_run_config(args)
    net = _load_net(args, cfg, explicit_hw=args.config is not None)
    frames = load_images(args.images)
    labels = _find_labels(args)
    if args.limit:
        frames = frames[: args.limit]
    modes = ["coarse", "fine"] if args.mode == "both" else [args.mode]
    costs = cfg.cost_table()

    payload = {}
    for mode in modes:
        system = PisaSystem(net, substrate=cfg.substrate, platform=cfg.platform,
                            sensor_config=cfg.sensor_config())
        results = run_batch(system, frames, mode)
        preds = [r.predicted for r in results]
        report = account(per_frame_trace(merge_traces([r.trace for r in results])),
                         costs, cfg.platform)
        entry = {"predictions": preds, "report": report.to_dict(),
                 "frames": len(preds)}
        if labels is not None:
            acc = float(np.mean(np.asarray(preds) == labels[: len(preds)]))
            entry["accuracy"] = acc
            print("%s accuracy: %.4f (%d frames)" % (mode, acc, len(preds)))
        else:
            shown = ", ".join(str(p) for p in preds[:20])
            more = "" if len(preds) <= 20 else ", ..."
            print("%s predictions: %s%s" % (mode, shown, more))
        payload[mode] = entry
    if args.out:
        _write_or_print(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def cmd_mc(args) -> int:
    cfg = _load_run_config(args)
    sigmas = [float(s) for s in args.sigma.split(",") if s.strip()]
    if not sigmas:
        raise PisaError("no sigma points given")
    if args.target == "dram":
        sa = DramSubArray(v_dd=cfg.v_dd)
        rows = mc_dram_sweep(sa, cfg.variation, sigmas, args.trials)
    else:
        if not (args.weights and args.images):
            raise PisaError("mc sensor needs --weights and --images")
        net = _load_net(args, cfg, explicit_hw=args.config is not None)
        frames = load_images(args.images)[: args.limit or 4]
        m, n = net.input_hw
        arr = CfpArray(m, n, net.v, v_dd=cfg.v_dd, unit_current=cfg.unit_current)
        planes = list(net.layer1_mapping().reshape(net.v, m, n))
        rows = mc_sensor_sweep(arr, frames, planes, cfg.variation, sigmas, args.trials)
    _write_or_print(sweep_to_csv(rows), args.out)
    return 0


def cmd_perf(args) -> int:
    cfg = _load_run_config(args)
    costs = cfg.cost_table()
    wl = svhn_workload()
    wis = sorted(WI_CHOICES) if args.wi == "all" else [int(args.wi or cfg.wi)]
    blocks, bundle = [], {}
    for wi in wis:
        reports = platform_reports(wl, costs, wi)
        summary = compare(reports)
        blocks.append("# W:I 1:%d\n%s" % (wi, summary.to_csv()))
        bundle["1:%d" % wi] = [r.to_dict() for r in reports]
    csv_text = "\n".join(blocks)
    json_text = json.dumps(bundle, indent=2, sort_keys=True) + "\n"
    if args.out:
        base = args.out[:-5] if args.out.endswith(".json") else args.out
        base = base[:-4] if base.endswith(".csv") else base
        _write_or_print(csv_text, base + ".csv")
        _write_or_print(json_text, base + ".json")
    else:
        print(csv_text)
        print(json_text, end="")
    return 0


def cmd_dump_trace(args) -> int:
    cfg = _load_run_config(args)
    net = _load_net(args, cfg, explicit_hw=args.config is not None)
    frames = load_images(args.images)[: args.limit or 8]
    system = PisaSystem(net, substrate=args.substrate or "pns-dra",
                        platform=cfg.platform, sensor_config=cfg.sensor_config())
    results = run_batch(system, frames, args.mode)
    merged = merge_traces([r.trace for r in results])
    doc = {k: dict(merged[k]) for k in ("sensor", "transfer", "pns", "host")}
    doc["meta"] = merged["meta"]
    _write_or_print(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _selftest_checks():
    """Built-in oracle equivalence suite; yields (name, ok, detail)."""
    from .bitplane import decompose
    from .convolve import LayerSpec, bitwise_dot, make_substrate, run_layer
    from .bitplane import QuantTensor
    from .dram import charge_share_voltage, ChargeShareState

    rng = np.random.default_rng(2024)

    def bitplane_dot():
        for _ in range(200):
            m, n = int(rng.integers(1, 9)), int(rng.integers(1, 3))
            k = int(rng.integers(1, 300))
            a = rng.integers(0, 1 << m, k, dtype=np.uint32)
            b = rng.integers(0, 1 << n, k, dtype=np.uint32)
            got = bitwise_dot(decompose(QuantTensor(a, m)), decompose(QuantTensor(b, n)))
            if got != int(np.dot(a.astype(np.int64), b.astype(np.int64))):
                return False, "dot mismatch"
        return True, ""

    def dra_truth():
        sa = DramSubArray()
        r0, r1, rd = 500, 501, 502  # compute-capable rows
        for a in (0, 1):
            for b in (0, 1):
                sa.write_row(r0, np.full(256, a, dtype=np.uint8))
                sa.write_row(r1, np.full(256, b, dtype=np.uint8))
                nand = sa.dra_nand(r0, r1, rd)
                if not (nand == (0 if a and b else 1)).all():
                    return False, "NAND(%d,%d)" % (a, b)
        for ncharged, want in ((0, 0.0), (1, 0.6), (2, 1.2)):
            v = charge_share_voltage(ChargeShareState(ncharged, 2, 1.2))
            if abs(v - want) > 1e-12:
                return False, "charge share n=%d" % ncharged
        return True, ""

    def substrates_agree():
        layer = LayerSpec("fc", 64, 12, weight_bits=1, input_bits=4,
                          weight_planes=rng.integers(0, 2, (1, 12, 64), dtype=np.uint8))
        for _ in range(5):
            x = QuantTensor(rng.integers(0, 16, 64, dtype=np.uint32), 4)
            outs = [run_layer(x, layer, make_substrate(s)).data
                    for s in ("functional", "pns-dra", "pns-tra")]
            if not (np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])):
                return False, "substrate divergence"
        return True, ""

    def sensor_matches_oracle():
        arr = CfpArray(8, 8, 8)
        for _ in range(200):
            signs = rng.choice([-1, 1], (8, 8, 8)).astype(np.int8)
            frame = rng.integers(0, 256, (8, 8)) / 255.0
            bits = arr.run_layer1(frame, weights=list(signs))
            v_pd = np.clip(arr.v_dd - arr.config.exposure_gain * frame, 0, arr.v_dd)
            oracle = (signs.reshape(8, -1) @ v_pd.ravel() > 0).astype(np.uint8)
            if not np.array_equal(bits, oracle):
                return False, "sign bits diverge"
        return True, ""

    def perf_linear():
        wl = svhn_workload()
        costs = default_cost_table()
        a = platform_reports(wl, costs, 4)[4]
        b = platform_reports(wl, costs.scaled(3.0), 4)[4]
        ok = (abs(b.total_energy - 3 * a.total_energy) < 1e-18 + 1e-9 * a.total_energy
              and abs(b.resource_utilization - a.resource_utilization) < 1e-12)
        return ok, ""

    yield "bit-plane dot product vs integer oracle", bitplane_dot
    yield "DRA truth table and charge-share voltages", dra_truth
    yield "substrate bit-equivalence (functional/DRA/TRA)", substrates_agree
    yield "in-pixel layer 1 vs digital sign oracle", sensor_matches_oracle
    yield "cost-table linearity", perf_linear


def cmd_selftest(args) -> int:
    failed = 0
    for name, check in _selftest_checks():
        ok, detail = check()
        print("%s - %s%s" % ("ok" if ok else "FAIL", name,
                             (": " + detail) if detail and not ok else ""))
        failed += 0 if ok else 1
    if args.weights and args.golden:
        cfg = _load_run_config(args)
        net = _load_net(args, cfg, explicit_hw=args.config is not None)
        m, n = net.input_hw
        sensor = CfpArray(m, n, net.v, config=cfg.sensor_config())
        sensor.program_weights(list(net.layer1_mapping().reshape(net.v, m, n)))
        problems = check_golden(net, args.golden, sensor=sensor)
        if problems:
            for p in problems[:20]:
                print("FAIL - golden: %s" % p)
            failed += len(problems)
        else:
            print("ok - golden vectors reproduce bit-for-bit")
    elif args.weights or args.golden:
        raise PisaError("golden check needs both --weights and --golden")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="variation seed override")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--cost-table", dest="cost_table", help="cost table file")
    common.add_argument("--platform", choices=(
        "baseline-cpu", "pisa-cpu", "pisa-gpu", "pisa-pns-i", "pisa-pns-ii"))

    p = argparse.ArgumentParser(prog="pisa-sim",
                                description="behavioural simulator CLI")
    sub = p.add_subparsers(dest="cmd")

    pi = sub.add_parser("infer", parents=[common], help="run inference over images")
    pi.add_argument("--weights", required=True)
    pi.add_argument("--images", required=True)
    pi.add_argument("--labels")
    pi.add_argument("--mode", choices=("coarse", "fine", "both"), default="coarse")
    pi.add_argument("--substrate", choices=("functional", "pns-dra", "pns-tra"))
    pi.add_argument("--limit", type=int)
    pi.set_defaults(func=cmd_infer)

    pm = sub.add_parser("mc", parents=[common], help="Monte-Carlo variation sweep")
    pm.add_argument("target", choices=("sensor", "dram"))
    pm.add_argument("--sigma", default="5,10,15,20,30",
                    help="comma-separated sigma points in percent")
    pm.add_argument("--trials", type=int, default=10000)
    pm.add_argument("--weights")
    pm.add_argument("--images")
    pm.add_argument("--labels")
    pm.add_argument("--limit", type=int)
    pm.set_defaults(func=cmd_mc)

    pp = sub.add_parser("perf", parents=[common], help="platform comparison")
    pp.add_argument("--wi", help="4, 8, 16, 32 or 'all'")
    pp.set_defaults(func=cmd_perf)

    pd = sub.add_parser("dump-trace", parents=[common], help="raw hardware tallies")
    pd.add_argument("--weights", required=True)
    pd.add_argument("--images", required=True)
    pd.add_argument("--mode", choices=("coarse", "fine"), default="coarse")
    pd.add_argument("--substrate", choices=("functional", "pns-dra", "pns-tra"))
    pd.add_argument("--limit", type=int)
    pd.set_defaults(func=cmd_dump_trace)

    ps = sub.add_parser("selftest", parents=[common],
                        help="oracle-equivalence suite, optional golden check")
    ps.add_argument("--weights")
    ps.add_argument("--golden")
    ps.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    if getattr(args, "cmd", None) is None or not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (PisaError, OSError, ValueError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - last-resort mapping to exit code 3
        print("internal error: %r" % e, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

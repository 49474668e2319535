import gzip
import json
import struct

import numpy as np
import pytest

from pisa_sim.cli import main
from pisa_sim.convolve import LayerSpec
from pisa_sim.io_weights import save_weights
from pisa_sim.pipeline import NetworkSpec


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Weight file, IDX images/labels and a golden file for one toy net."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(42)
    m = n = 4

    def fc(n_in, n_out, input_bits, bias=None):
        return LayerSpec(
            kind="fc", in_channels=n_in, out_channels=n_out, weight_bits=1,
            input_bits=input_bits, bn_bias=bias,
            weight_planes=rng.integers(0, 2, (1, n_out, n_in), dtype=np.uint8),
        )

    net = NetworkSpec.from_layers(
        [fc(m * n, 8, 8), fc(8, 4, 1, bias=np.full(4, 10.0))], (m, n), name="toy")
    save_weights(net, root / "toy.pisaw")

    signs = net.layer1_mapping().astype(np.int64)
    frames = []
    while len(frames) < 6:
        raw = rng.integers(0, 256, (m, n), dtype=np.uint8)
        if (signs @ (255 - raw.ravel().astype(np.int64)) != 0).all():
            frames.append(raw)
    frames = np.stack(frames)
    with gzip.open(root / "toy-images.idx.gz", "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, 6, m, n) + frames.tobytes())
    with gzip.open(root / "toy-labels.idx.gz", "wb") as fh:
        fh.write(struct.pack(">II", 0x801, 6)
                 + bytes(rng.integers(0, 4, 6, dtype=np.uint8)))

    from pisa_sim.io_golden import _digital_layers

    doc = {"input_domain": "photodiode-complement", "adc_bits": 8, "frames": []}
    for raw in frames[:3]:
        layers = _digital_layers(net, 255 - raw.astype(np.int64), 8)
        doc["frames"].append({
            "input": [int(x) for x in raw.ravel()],
            "layers": [[int(v) for v in l] for l in layers],
            "prediction": int(np.argmax(layers[-1])),
            "label": 0,
        })
    (root / "golden.json").write_text(json.dumps(doc))
    return root


def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 1
    assert main(["definitely-not-a-command"]) == 1
    assert main(["infer"]) == 1  # missing required --weights/--images
    capsys.readouterr()


def test_help_exits_clean(capsys):
    assert main(["--help"]) == 0
    assert main(["infer", "--help"]) == 0
    capsys.readouterr()


def test_infer_with_discovered_labels(workdir, capsys):
    out = workdir / "report.json"
    rc = main(["infer", "--weights", str(workdir / "toy.pisaw"),
               "--images", str(workdir / "toy-images.idx.gz"),
               "--mode", "both", "--out", str(out)])
    stdout = capsys.readouterr().out
    assert rc == 0
    assert "coarse accuracy:" in stdout and "fine accuracy:" in stdout
    doc = json.loads(out.read_text())
    assert set(doc) == {"coarse", "fine"}
    assert doc["coarse"]["predictions"] == doc["fine"]["predictions"]
    assert doc["coarse"]["frames"] == 6
    assert doc["coarse"]["report"]["fps"] == pytest.approx(1000.0)
    assert doc["coarse"]["report"]["host_costs"] == "calibrated, not measured"


def test_infer_without_labels_prints_predictions(workdir, tmp_path, capsys):
    anon = tmp_path / "frames.idx.gz"
    anon.write_bytes((workdir / "toy-images.idx.gz").read_bytes())
    rc = main(["infer", "--weights", str(workdir / "toy.pisaw"),
               "--images", str(anon), "--limit", "3"])
    stdout = capsys.readouterr().out
    assert rc == 0
    assert "predictions:" in stdout


def test_infer_broken_inputs_exit_2(workdir, tmp_path, capsys):
    rc = main(["infer", "--weights", str(tmp_path / "missing.pisaw"),
               "--images", str(workdir / "toy-images.idx.gz")])
    assert rc == 2
    bad = tmp_path / "bad.pisaw"
    bad.write_bytes(b"NOTAWEIGHTFILE")
    rc = main(["infer", "--weights", str(bad),
               "--images", str(workdir / "toy-images.idx.gz")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_mc_dram_sweep_csv(capsys):
    rc = main(["mc", "dram", "--sigma", "10,30", "--trials", "200"])
    stdout = capsys.readouterr().out
    assert rc == 0
    lines = stdout.strip().splitlines()
    assert lines[0] == "sigma_pct,mechanism,trials,failures,failure_rate"
    assert len(lines) == 1 + 2 * 2  # both mechanisms at each sigma
    assert lines[1].startswith("10,dra,200,")


def test_mc_sensor_needs_weights(capsys):
    assert main(["mc", "sensor", "--trials", "10"]) == 2
    capsys.readouterr()


def test_mc_sensor_sweep(workdir, tmp_path, capsys):
    out = tmp_path / "mc.csv"
    rc = main(["mc", "sensor", "--weights", str(workdir / "toy.pisaw"),
               "--images", str(workdir / "toy-images.idx.gz"),
               "--sigma", "5", "--trials", "40", "--limit", "2",
               "--out", str(out)])
    capsys.readouterr()
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("sigma_pct,")
    assert len(lines) == 2  # one combined pixel+cbl row per sigma
    assert lines[1].startswith("5,sensor,40,")


def test_perf_table_and_files(tmp_path, capsys):
    rc = main(["perf", "--wi", "4"])
    stdout = capsys.readouterr().out
    assert rc == 0
    assert "# W:I 1:4" in stdout
    assert stdout.count("pisa-pns-ii") >= 2  # CSV row plus JSON entry

    base = tmp_path / "perf"
    rc = main(["perf", "--wi", "all", "--out", str(base)])
    capsys.readouterr()
    assert rc == 0
    csv_text = (tmp_path / "perf.csv").read_text()
    assert all(("# W:I 1:%d" % wi) in csv_text for wi in (4, 8, 16, 32))
    doc = json.loads((tmp_path / "perf.json").read_text())
    assert set(doc) == {"1:4", "1:8", "1:16", "1:32"}
    assert len(doc["1:4"]) == 5


def test_dump_trace_tallies(workdir, tmp_path, capsys):
    out = tmp_path / "trace.json"
    rc = main(["dump-trace", "--weights", str(workdir / "toy.pisaw"),
               "--images", str(workdir / "toy-images.idx.gz"),
               "--limit", "2", "--out", str(out)])
    capsys.readouterr()
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["sensor"]["pixel_sense"] == 2 * 16
    assert doc["pns"]["row_copy"] == 2 * doc["pns"]["dra_compute_cycle"]
    assert doc["meta"]["frames"] == 2


def test_selftest_passes(capsys):
    rc = main(["selftest"])
    stdout = capsys.readouterr().out
    assert rc == 0
    assert "FAIL" not in stdout
    assert stdout.count("ok -") == 5


def test_selftest_golden_roundtrip(workdir, tmp_path, capsys):
    rc = main(["selftest", "--weights", str(workdir / "toy.pisaw"),
               "--golden", str(workdir / "golden.json")])
    stdout = capsys.readouterr().out
    assert rc == 0
    assert "golden vectors reproduce bit-for-bit" in stdout

    doc = json.loads((workdir / "golden.json").read_text())
    doc["frames"][0]["layers"][-1][0] += 1
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    rc = main(["selftest", "--weights", str(workdir / "toy.pisaw"),
               "--golden", str(broken)])
    stdout = capsys.readouterr().out
    assert rc == 3
    assert "FAIL - golden" in stdout


def test_selftest_golden_needs_both_flags(workdir, capsys):
    rc = main(["selftest", "--weights", str(workdir / "toy.pisaw")])
    capsys.readouterr()
    assert rc == 2


def test_infer_respects_config_file(workdir, tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[sensor]\nm = 4\nn = 4\nv = 8\n[run]\nplatform = \"pisa-cpu\"\n")
    rc = main(["infer", "--config", str(cfg),
               "--weights", str(workdir / "toy.pisaw"),
               "--images", str(workdir / "toy-images.idx.gz")])
    capsys.readouterr()
    assert rc == 0

import numpy as np
import pytest

from pisa_sim.bitplane import BinaryWeightPlane
from pisa_sim.dram import DramSubArray
from pisa_sim.sensor import CfpArray
from pisa_sim.variation import (
    McReport,
    VariationModel,
    _nvm_flip_mask,
    _stream,
    dram_trial_details,
    mc_dram,
    mc_dram_sweep,
    mc_sensor,
    mc_sensor_sweep,
    sweep_to_csv,
)

# 4x4 fixtures: HEALTHY has a worst-case |preactivation| of ~3.9 units
# (all sign margins comfortable), TIGHT has one CBL near the decision point.
HEALTHY_SIGNS = np.array([
    [1, -1, -1, 1, 1, 1, -1, -1, -1, 1, -1, 1, -1, -1, -1, 1],
    [1, 1, 1, -1, -1, 1, -1, -1, 1, 1, -1, 1, 1, 1, 1, -1],
    [-1, 1, -1, -1, 1, -1, 1, -1, -1, 1, 1, -1, -1, -1, -1, 1],
], dtype=np.int8)
HEALTHY_FRAME = np.array([
    [81, 95, 18, 114], [233, 104, 166, 46], [36, 187, 16, 114], [81, 4, 135, 246],
]) / 255.0
TIGHT_SIGNS = np.array([
    [1, -1, -1, -1, -1, -1, -1, 1, -1, -1, -1, 1, 1, 1, -1, -1],
    [-1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, 1, 1, 1, -1],
    [-1, -1, -1, -1, -1, 1, 1, 1, -1, -1, 1, 1, 1, 1, -1, 1],
], dtype=np.int8)
TIGHT_FRAME = np.array([
    [66, 20, 233, 5], [72, 29, 59, 101], [33, 119, 237, 34], [237, 105, 151, 113],
]) / 255.0


def planes_of(signs):
    return [BinaryWeightPlane.from_signs(signs[j].reshape(4, 4)) for j in range(signs.shape[0])]


def test_model_rejects_negative_sigma():
    with pytest.raises(ValueError):
        VariationModel(sigma_pixel=-0.1)


def test_report_rate():
    assert McReport(trials=200, failures=3).failure_rate == 3 / 200
    assert McReport(trials=0, failures=0).failure_rate == 0.0


def test_dram_zero_sigma_never_fails():
    sa = DramSubArray()
    model = VariationModel(sigma_dram=0.0)
    for mech in ("dra", "tra"):
        assert mc_dram(sa, mech, model, 2000).failures == 0


def test_dram_reproducible_bit_for_bit():
    sa = DramSubArray()
    model = VariationModel(sigma_dram=0.2, seed=99)
    a = mc_dram(sa, "tra", model, 5000)
    b = mc_dram(sa, "tra", model, 5000)
    assert a.failures == b.failures
    c = mc_dram(sa, "tra", VariationModel(sigma_dram=0.2, seed=100), 5000)
    assert c.failures != a.failures  # different seed, different draws


def test_dram_failure_iff_threshold_crossing():
    # the report is derivable from per-trial voltages and thresholds alone
    model = VariationModel(sigma_dram=0.25)
    d = dram_trial_details(model, 0.25, 4000)
    a = (d["combo"] >> 1) & 1
    b = d["combo"] & 1
    clean_nand = ~(a.astype(bool) & b.astype(bool))
    recomputed = (d["v_dra"] < d["t_dra"]) != clean_nand
    assert np.array_equal(recomputed, d["out_dra"] != d["ideal_dra"])
    clean_and = a.astype(bool) & b.astype(bool)
    recomputed_t = (d["v_tra"] >= d["t_tra"]) != clean_and
    assert np.array_equal(recomputed_t, d["out_tra"] != d["ideal_tra"])


def test_dram_paired_draws_shared_between_mechanisms():
    model = VariationModel()
    d1 = dram_trial_details(model, 0.1, 1000, lane=3)
    d2 = dram_trial_details(model, 0.1, 1000, lane=3)
    assert np.array_equal(d1["combo"], d2["combo"])
    assert np.array_equal(d1["v_dra"], d2["v_dra"])
    assert np.array_equal(d1["v_tra"], d2["v_tra"])


def test_dram_sweep_dominance_and_calibration_point():
    sa = DramSubArray()
    rows = mc_dram_sweep(sa, VariationModel(), [5, 10, 15, 20, 30], 10000)
    by = {(pct, mech): fails for pct, mech, _, fails, _ in rows}
    for pct in (5, 10, 15, 20, 30):
        assert by[(pct, "dra")] <= by[(pct, "tra")]
    assert by[(10, "dra")] == 0
    assert 5 <= by[(10, "tra")] <= 50  # 0.05% .. 0.5% of 10000


def test_sensor_zero_sigma_exact():
    arr = CfpArray(4, 4, 3)
    rep = mc_sensor(arr, HEALTHY_FRAME, planes_of(HEALTHY_SIGNS), VariationModel(), 2000)
    assert rep.failures == 0


def test_sensor_ten_percent_on_healthy_margins():
    arr = CfpArray(4, 4, 3)
    model = VariationModel(sigma_pixel=0.10, sigma_cbl=0.10)
    rep = mc_sensor(arr, HEALTHY_FRAME, planes_of(HEALTHY_SIGNS), model, 10000)
    assert rep.failures == 0


def test_sensor_sweep_monotone_under_fixed_seed():
    arr = CfpArray(4, 4, 3)
    rows = mc_sensor_sweep(
        arr, TIGHT_FRAME, planes_of(TIGHT_SIGNS), VariationModel(), [0, 5, 10, 15, 20, 30], 4000
    )
    fails = [r[3] for r in rows]
    assert fails[0] == 0
    assert all(fails[i] <= fails[i + 1] for i in range(len(fails) - 1))
    assert fails[-1] > 0


def test_sensor_reproducible():
    arr = CfpArray(4, 4, 3)
    model = VariationModel(sigma_pixel=0.2, sigma_cbl=0.2, seed=5)
    a = mc_sensor(arr, TIGHT_FRAME, planes_of(TIGHT_SIGNS), model, 3000)
    b = mc_sensor(CfpArray(4, 4, 3), TIGHT_FRAME, planes_of(TIGHT_SIGNS), model, 3000)
    assert a.failures == b.failures


def test_nvm_flips_are_negligible_at_default_sigmas():
    rng = _stream(0, 0)
    states = rng.integers(0, 2, size=200000, dtype=np.uint8)
    mask = _nvm_flip_mask(_stream(0, 1), states, VariationModel())
    assert not mask.any()


def test_nvm_flips_appear_under_exaggerated_sigma():
    rng = _stream(0, 2)
    states = np.ones(100000, dtype=np.uint8)
    model = VariationModel(sigma_nvm_ra=0.30)
    mask = _nvm_flip_mask(_stream(0, 3), states, model)
    # parallel state flips once (1 + 0.3 z) crosses sqrt(2): about 8% of draws
    rate = mask.mean()
    assert 0.04 < rate < 0.15


def test_sweep_csv_format():
    rows = [(5, "dra", 100, 0, 0.0), (10, "tra", 100, 2, 0.02)]
    text = sweep_to_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "sigma_pct,mechanism,trials,failures,failure_rate"
    assert lines[1] == "5,dra,100,0,0.000000"
    assert lines[2] == "10,tra,100,2,0.020000"

import numpy as np
import pytest

from pisa_sim.bitplane import BinaryWeightPlane
from pisa_sim.errors import ModeError, NotReset, ShapeMismatch, WeightsUnprogrammed
from pisa_sim.sensor import COMPUTE, SENSING, CfpArray, NvmCell, SensorConfig, adc_quantize


def make_array(m=4, n=4, v=3, **kw):
    return CfpArray(m, n, v, **kw)


def rand_planes(rng, m, n, v):
    return [BinaryWeightPlane.from_signs(rng.choice([-1, 1], size=(m, n))) for _ in range(v)]


def digital_oracle(arr, frame):
    x = np.clip(arr.v_dd - arr.config.exposure_gain * np.asarray(frame), 0, arr.v_dd)
    signs = np.stack([p.signs().ravel() for p in arr.weights_readback()])
    return (signs @ (x.ravel() / arr.v_dd) > 0).astype(np.uint8)


def test_program_weights_roundtrip():
    rng = np.random.default_rng(0)
    arr = make_array()
    planes = rand_planes(rng, 4, 4, 3)
    arr.program_weights(planes)
    back = arr.weights_readback()
    for a, b in zip(planes, back):
        assert np.array_equal(a.signs(), b.signs())


def test_program_weights_all_plus_one():
    arr = make_array()
    arr.program_weights([np.ones((4, 4)) for _ in range(3)])
    for p in arr.weights_readback():
        assert np.all(p.signs() == 1)


def test_program_weights_shape_errors():
    arr = make_array()
    with pytest.raises(ShapeMismatch):
        arr.program_weights([np.ones((3, 4)) for _ in range(3)])
    with pytest.raises(ShapeMismatch):
        arr.program_weights([np.ones((4, 4)) for _ in range(2)])


def test_expose_dark_full_and_midgray():
    arr = make_array()
    arr.expose(np.zeros((4, 4)))
    assert np.all(arr.v_pd == arr.v_dd)
    arr.reset()
    arr.expose(np.ones((4, 4)))
    assert np.all(arr.v_pd == 0.0)
    arr.reset()
    arr.expose(np.full((4, 4), 0.5))
    assert np.allclose(arr.v_pd, arr.v_dd / 2)


def test_expose_requires_reset():
    arr = make_array()
    arr.expose(np.zeros((4, 4)))
    with pytest.raises(NotReset):
        arr.expose(np.zeros((4, 4)))
    with pytest.raises(ShapeMismatch):
        arr.reset().expose(np.zeros((2, 2)))


def test_sense_readout_dark_and_saturated():
    arr = make_array()
    arr.expose(np.zeros((4, 4)))
    assert np.all(arr.sense_readout(0) == 0)
    arr.reset().expose(np.ones((4, 4)))
    assert np.all(arr.sense_readout(0) == 255)


def test_sense_readout_monotone_gradient():
    arr = CfpArray(1, 32, 1)
    grad = np.linspace(0, 1, 32).reshape(1, 32)
    arr.expose(grad)
    codes = arr.sense_readout(0)
    assert np.all(np.diff(codes.astype(int)) >= 0)
    expect = adc_quantize(arr.v_dd * grad[0], arr.v_dd, 8)
    assert np.array_equal(codes, expect)


def test_byte_frames_read_back_exactly():
    # intensities k/255 must come back as code k through an 8-bit ADC
    rng = np.random.default_rng(1)
    k = rng.integers(0, 256, size=(4, 4))
    arr = make_array()
    arr.expose(k / 255.0)
    got = np.stack([arr.sense_readout(r) for r in range(4)])
    assert np.array_equal(got, k)


def test_sense_readout_mode_error():
    arr = make_array()
    arr.mode = COMPUTE
    with pytest.raises(ModeError):
        arr.sense_readout(0)


def test_compute_mac_uniform_all_plus():
    arr = make_array()
    arr.program_weights([np.ones((4, 4)) for _ in range(3)])
    arr.mode = COMPUTE
    arr.expose(np.full((4, 4), 0.25))
    currents = arr.compute_mac()
    expect = 16 * arr.unit_current * (0.75 * arr.v_dd / arr.v_dd)
    assert np.allclose(currents, expect)


def test_compute_mac_matches_dot_product_oracle():
    rng = np.random.default_rng(2)
    arr = make_array()
    arr.program_weights(rand_planes(rng, 4, 4, 3))
    arr.mode = COMPUTE
    frame = rng.random((4, 4))
    arr.expose(frame)
    currents = arr.compute_mac()
    signs = np.stack([p.signs().ravel() for p in arr.weights_readback()])
    expect = arr.unit_current * (signs @ (arr.v_pd.ravel() / arr.v_dd))
    assert np.allclose(currents, expect, rtol=0, atol=0)


def test_compute_mac_guards():
    arr = make_array()
    with pytest.raises(ModeError):
        arr.compute_mac()
    arr.mode = COMPUTE
    with pytest.raises(WeightsUnprogrammed):
        arr.compute_mac()


def test_sign_activation_cases():
    arr = make_array()
    bits = arr.sign_activation(np.array([32e-6, -5e-6, 0.0]))
    assert list(bits) == [1, 0, 0]


def test_mac_linearity_and_negation():
    rng = np.random.default_rng(3)
    arr = make_array()
    planes = rand_planes(rng, 4, 4, 3)
    arr.program_weights(planes)
    arr.mode = COMPUTE
    frame = rng.random((4, 4)) * 0.5
    arr.expose(frame)
    i1 = arr.compute_mac()
    neg = [BinaryWeightPlane.from_signs(-p.signs()) for p in planes]
    arr.program_weights(neg)
    i2 = arr.compute_mac()
    assert np.allclose(i1, -i2, rtol=0, atol=0)


def test_mode_isolation():
    rng = np.random.default_rng(4)
    frame = rng.random((4, 4))
    # readout does not depend on programmed weights
    a = make_array()
    a.expose(frame)
    codes_plain = a.read_frame()
    b = make_array()
    b.program_weights(rand_planes(rng, 4, 4, 3))
    b.expose(frame)
    assert np.array_equal(codes_plain, b.read_frame())
    # mac does not depend on adc_bits
    c = make_array(config=SensorConfig(adc_bits=4))
    c.program_weights(rand_planes(np.random.default_rng(4), 4, 4, 3))
    d = make_array(config=SensorConfig(adc_bits=12))
    d.program_weights(rand_planes(np.random.default_rng(4), 4, 4, 3))
    for arr in (c, d):
        arr.mode = COMPUTE
        arr.reset()
        arr.expose(frame)
    assert np.array_equal(c.compute_mac(), d.compute_mac())


def test_run_layer1_equals_digital_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        arr = CfpArray(16, 16, 8)
        planes = rand_planes(rng, 16, 16, 8)
        frame = rng.integers(0, 256, (16, 16)) / 255.0
        bits = arr.run_layer1(frame, planes)
        assert np.array_equal(bits, digital_oracle(arr, frame))


def test_run_layer1_zero_frame_balanced_weights():
    # dark frame leaves v_pd uniform; balanced +/-1 weights cancel to zero -> 0
    signs = np.ones((4, 4), dtype=np.int8)
    signs[:2] = -1
    arr = make_array(v=1)
    bits = arr.run_layer1(np.zeros((4, 4)), [BinaryWeightPlane.from_signs(signs)])
    assert list(bits) == [0]


def test_run_layer1_all_positive_pattern():
    rng = np.random.default_rng(6)
    planes = rand_planes(rng, 4, 4, 3)
    # craft a frame so every dot product is positive: bright where w = -1
    frame = np.zeros((4, 4))
    frame[planes[0].signs() < 0] = 1.0
    arr = make_array(v=1)
    bits = arr.run_layer1(frame, [planes[0]])
    assert list(bits) == [1]


def test_single_cycle_contract():
    rng = np.random.default_rng(7)
    for m, n, v in [(4, 4, 2), (16, 16, 8), (28, 28, 5)]:
        arr = CfpArray(m, n, v)
        arr.run_layer1(rng.random((m, n)), rand_planes(rng, m, n, v))
        assert arr.tally["sensor_compute_cycle"] == 1


def test_nvm_cell_roundtrip_and_margin():
    cell = NvmCell()
    for b in (0, 1, 1, 0):
        cell.write(b)
        assert cell.read() == b
    assert NvmCell.read_margin() >= 0.070


def test_sensor_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(adc_bits=0)
    with pytest.raises(ValueError):
        SensorConfig(adc_bits=17)
    with pytest.raises(ValueError):
        SensorConfig(clock_period=0)

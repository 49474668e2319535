"""Golden-vector checks: replay exported frames and compare every fmap.

A golden file is JSON:

    {
      "input_domain": "photodiode-complement",
      "adc_bits": 8,
      "frames": [
        {"input": [raw sensor bytes, row-major],
         "layers": [[layer-1 ints], [layer-2 ints], ...],
         "prediction": 3, "label": 3}
      ]
    }

`input` holds what the camera saw (byte k = intensity k/255). Layer 1 in the
digital replay therefore consumes the complement (2^adc - 1) - k, matching
what the in-pixel MAC integrates off the photodiode. Exporters only emit
frames whose layer-1 preactivations are all nonzero, so the analog sign and
the integer sign agree exactly and the comparison is meaningful bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from .bitplane import QuantTensor
from .convolve import FunctionalSubstrate, run_layer
from .errors import FormatError
from .pipeline import NetworkSpec
from .sensor import CfpArray


def load_golden(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError("golden file is not valid JSON: %s" % e, offset=e.pos) from None
    if not isinstance(doc, dict) or "frames" not in doc:
        raise FormatError("golden file needs a top-level 'frames' list")
    if not doc["frames"]:
        raise FormatError("golden file has no frames")
    return doc


def _digital_layers(net: NetworkSpec, x: np.ndarray, adc_bits: int):
    """Integer replay of every layer; returns the per-layer output lists."""
    layer1 = net.layers[0]
    if layer1.input_bits < adc_bits:
        x = x >> (adc_bits - layer1.input_bits)
    elif layer1.input_bits > adc_bits:
        x = x << (layer1.input_bits - adc_bits)
    if layer1.kind == "conv":
        fmap = QuantTensor(x.astype(np.uint32)[..., None], layer1.input_bits)
    else:
        fmap = QuantTensor(x.astype(np.uint32).ravel(), layer1.input_bits)
    sub = FunctionalSubstrate()
    outs = []
    for layer in net.layers:
        fmap = run_layer(fmap, layer, sub)
        outs.append(fmap.data.ravel().astype(np.int64))
    return outs


def check_golden(net: NetworkSpec, golden, sensor: CfpArray = None) -> list:
    """Replay each golden frame; returns a list of mismatch descriptions.

    Empty list = pass. When `sensor` is given, layer 1 is additionally run
    through the analog in-pixel path and compared against the stored bits.
    """
    if isinstance(golden, (str, bytes)) or hasattr(golden, "__fspath__"):
        golden = load_golden(golden)
    adc_bits = int(golden.get("adc_bits", 8))
    top = (1 << adc_bits) - 1
    m, n = net.input_hw
    failures = []
    for fi, frame in enumerate(golden["frames"]):
        raw = np.asarray(frame["input"], dtype=np.int64)
        if raw.size != m * n:
            failures.append("frame %d: input has %d bytes, sensor is %dx%d"
                            % (fi, raw.size, m, n))
            continue
        if raw.min() < 0 or raw.max() > top:
            failures.append("frame %d: input bytes outside 0..%d" % (fi, top))
            continue
        x = (top - raw).reshape(m, n)
        outs = _digital_layers(net, x, adc_bits)
        want = frame.get("layers", [])
        if len(want) != len(outs):
            failures.append("frame %d: %d stored layers, network has %d"
                            % (fi, len(want), len(outs)))
            continue
        for li, (got, exp) in enumerate(zip(outs, want)):
            exp = np.asarray(exp, dtype=np.int64).ravel()
            if got.shape != exp.shape or not np.array_equal(got, exp):
                failures.append("frame %d layer %d: fmap mismatch" % (fi, li))
        pred = int(np.argmax(outs[-1]))
        if "prediction" in frame and pred != int(frame["prediction"]):
            failures.append("frame %d: predicted %d, golden says %d"
                            % (fi, pred, int(frame["prediction"])))
        if sensor is not None:
            bits = sensor.run_layer1((raw / top).reshape(m, n))
            exp_bits = np.asarray(want[0], dtype=np.int64).ravel()
            if not np.array_equal(bits.astype(np.int64), exp_bits):
                failures.append("frame %d: in-pixel layer-1 bits disagree" % fi)
    return failures

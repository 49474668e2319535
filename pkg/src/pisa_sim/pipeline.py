"""End-to-end BWNN inference over the hybrid system.

Coarse path: layer 1 as an analog in-pixel MAC (no ADC), remaining layers on
the near-memory substrate. Fine path: full ADC readout of the frame, every
layer (including layer 1) computed digitally. Both paths share one NetworkSpec;
the fine path re-references the readout code so that layer 1 sees the same
photodiode-domain values the in-pixel MAC integrates.

Inference is always zero-noise and deterministic; stochastic behaviour is the
variation module's job and never leaks in here.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bitplane import QuantTensor
from .convolve import (
    FunctionalSubstrate,
    LayerSpec,
    PnsSubstrate,
    make_substrate,
    run_layer,
)
from .dram import PnsOrganization
from .errors import ModeError, ShapeMismatch
from .sensor import COMPUTE, SENSING, CfpArray, SensorConfig

HOST_PLATFORMS = ("baseline-cpu", "pisa-cpu", "pisa-gpu")
PNS_PLATFORMS = ("pisa-pns-i", "pisa-pns-ii")
DETECT_THRESHOLD = 0.5
LOGIT_BITS = 16


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers plus the sensor-facing metadata derived from them."""

    name: str
    layers: tuple
    input_hw: tuple  # sensor (m, n)
    classes: int

    @classmethod
    def from_layers(cls, layers, input_hw, name="net"):
        layers = tuple(layers)
        if not layers:
            raise ShapeMismatch("a network needs at least one layer")
        if layers[0].weight_bits != 1:
            raise ShapeMismatch("layer 1 must carry binary weights")
        for i, layer in enumerate(layers):
            if i + 1 < len(layers):
                nxt = layers[i + 1].input_bits
                layer.activation = "sign" if nxt == 1 else "quant_relu"
                layer.out_bits = nxt
            else:
                # final layer emits wide integer logits, no further activation
                layer.activation = "quant_relu"
                layer.out_bits = LOGIT_BITS
        net = cls(
            name=name,
            layers=layers,
            input_hw=(int(input_hw[0]), int(input_hw[1])),
            classes=layers[-1].out_channels,
        )
        net.walk_shapes()  # validates the geometry chain
        return net

    def walk_shapes(self):
        """Propagate fmap shapes through the chain, raising on mismatch."""
        m, n = self.input_hw
        shape = (m, n, self.layers[0].in_channels if self.layers[0].kind == "conv" else 1)
        shapes = []
        for i, layer in enumerate(self.layers):
            elems = shape[0] * shape[1] * shape[2]
            if layer.kind == "fc":
                if layer.in_channels != elems:
                    raise ShapeMismatch(
                        "layer %d wants %d inputs, previous stage emits %d"
                        % (i + 1, layer.in_channels, elems)
                    )
                shape = (1, 1, layer.out_channels)
            else:
                if layer.in_channels != shape[2]:
                    raise ShapeMismatch(
                        "layer %d wants %d channels, previous stage emits %d"
                        % (i + 1, layer.in_channels, shape[2])
                    )
                oh, ow = layer.output_hw(shape[0], shape[1])
                if oh < 1 or ow < 1:
                    raise ShapeMismatch("layer %d kernel does not fit" % (i + 1,))
                shape = (oh, ow, layer.out_channels)
            shapes.append(shape)
        return shapes

    @property
    def v(self) -> int:
        """Layer-1 outputs computed inside the pixel array."""
        first = self.layers[0]
        if first.kind == "fc":
            return first.out_channels
        m, n = self.input_hw
        oh, ow = first.output_hw(m, n)
        return oh * ow * first.out_channels

    def layer1_mapping(self) -> np.ndarray:
        """(v, m*n) +/-1 matrix programmed into the pixel NVM cells.

        Only fully-connected first layers map onto the compute-pixel fabric
        here; a convolutional layer 1 runs on the fine path instead.
        """
        first = self.layers[0]
        m, n = self.input_hw
        if first.kind != "fc" or first.in_channels != m * n:
            raise ShapeMismatch(
                "in-pixel mapping needs an fc layer 1 over the %dx%d frame" % (m, n)
            )
        plane = first.weight_planes[0].astype(np.int8)
        return 2 * plane - 1

    def macs_from_layer(self, start: int) -> int:
        """MAC count of layers start..L over this input geometry."""
        m, n = self.input_hw
        shapes = [(m, n, 1)] + self.walk_shapes()
        total = 0
        for i in range(start, len(self.layers)):
            layer = self.layers[i]
            if layer.kind == "fc":
                positions = 1
            else:
                positions = shapes[i + 1][0] * shapes[i + 1][1]
            total += positions * layer.out_channels * layer.window_elems
        return total


@dataclass
class InferenceResult:
    logits: np.ndarray
    predicted: int
    confidence: float
    detected: bool
    mode: str
    trace: dict

    def to_dict(self):
        return {
            "predicted": self.predicted,
            "confidence": round(float(self.confidence), 6),
            "detected": self.detected,
            "mode": self.mode,
            "logits": [int(x) for x in self.logits],
        }


def _softmax_confidence(logits) -> float:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    p = np.exp(z)
    return float(p.max() / p.sum())


class PisaSystem:
    """One sensor array + one near-memory engine, run frame by frame."""

    def __init__(self, net: NetworkSpec, substrate="functional",
                 sensor_config: SensorConfig = None, platform: str = "pisa-pns-ii",
                 detect_threshold: float = DETECT_THRESHOLD):
        if platform not in HOST_PLATFORMS + PNS_PLATFORMS:
            raise ValueError("unknown platform %r" % (platform,))
        self.net = net
        self.platform = platform
        self.detect_threshold = float(detect_threshold)
        if isinstance(substrate, str):
            substrate = make_substrate(substrate)
        self.substrate = substrate
        if platform in HOST_PLATFORMS and not isinstance(substrate, FunctionalSubstrate):
            raise ValueError("host platforms model layers 2+ as host MACs; "
                             "use the functional substrate")
        m, n = net.input_hw
        self.sensor = CfpArray(m, n, net.v, config=sensor_config)
        try:
            mapping = net.layer1_mapping()
        except ShapeMismatch:
            mapping = None
        if mapping is not None:
            self.sensor.program_weights(list(mapping.reshape(net.v, m, n)))
        self._mapped = mapping is not None
        self.mode = SENSING
        self.frames_run = 0

    # -- mode control --------------------------------------------------------

    def switch_mode(self, to: str):
        """Flip between sensing-only and compute mode; pixel state is kept."""
        if to not in (SENSING, COMPUTE):
            raise ModeError("mode must be %r or %r" % (SENSING, COMPUTE))
        self.mode = to
        self.sensor.mode = to
        return self

    # -- trace plumbing ------------------------------------------------------

    def _snapshot(self):
        return dict(self.sensor.tally), dict(self.substrate.tally)

    def _trace(self, mode, before, transfer, host) -> dict:
        sensor_before, pns_before = before
        sensor_t = Counter(self.sensor.tally)
        sensor_t.subtract(sensor_before)
        pns_t = Counter(self.substrate.tally)
        pns_t.subtract(pns_before)
        pns_t = +pns_t
        sensor_t = +sensor_t
        if self.platform == "pisa-pns-i" and "dra_compute_cycle" in pns_t:
            # DRISA's 1T1C logic takes three cycles for the same AND
            pns_t["drisa_compute_cycle"] = 3 * pns_t.pop("dra_compute_cycle")
        org = (self.substrate.organization if isinstance(self.substrate, PnsSubstrate)
               else PnsOrganization())
        coarse = mode == "coarse"
        return {
            "sensor": sensor_t,
            "transfer": Counter(transfer),
            "pns": pns_t,
            "host": Counter(host),
            "meta": {
                "workload_id": "%s-%s" % (self.net.name, mode),
                "platform": self.platform,
                "wi": self.net.layers[-1].input_bits,
                "sensor_macs": self.sensor.m * self.sensor.n * self.net.v if coarse else 0,
                "host_macs": int(sum(host.values())),
                "exposure_time": self.sensor.config.exposure_time,
                "clock_period": self.sensor.config.clock_period,
                "parallel_subarrays": org.parallel_subarrays,
            },
        }

    def _downstream(self, fmap: QuantTensor, start: int) -> np.ndarray:
        for layer in self.net.layers[start:]:
            fmap = run_layer(fmap, layer, self.substrate)
        return fmap.data.astype(np.int64)

    def _result(self, logits, mode, trace) -> InferenceResult:
        predicted = int(np.argmax(logits))  # ties resolve to the lowest index
        confidence = _softmax_confidence(logits)
        self.frames_run += 1
        return InferenceResult(
            logits=logits,
            predicted=predicted,
            confidence=confidence,
            detected=confidence >= self.detect_threshold,
            mode=mode,
            trace=trace,
        )

    # -- inference paths -----------------------------------------------------

    def run_coarse(self, frame) -> InferenceResult:
        """In-pixel layer 1, remaining layers downstream. No ADC involved."""
        if not self._mapped:
            raise ShapeMismatch("network has no in-pixel layer-1 mapping")
        if self.platform == "baseline-cpu":
            raise ValueError("the baseline platform has no compute-pixel stage")
        if self.net.layers[0].activation != "sign":
            raise ShapeMismatch("in-pixel layer 1 emits sign bits; layer 2 "
                                "must take 1-bit input")
        before = self._snapshot()
        self.switch_mode(COMPUTE)
        bits = self.sensor.run_layer1(np.asarray(frame, dtype=np.float64))
        fmap = QuantTensor(bits.astype(np.uint32), 1)

        host = {}
        if self.platform in PNS_PLATFORMS:
            transfer = {"transfer_per_bit_pns": self.net.v,
                        "transfer_per_bit_host": self.net.classes * LOGIT_BITS}
        else:
            transfer = {"transfer_per_bit_host": self.net.v}
            key = "host_cpu_per_mac" if self.platform == "pisa-cpu" else "host_gpu_per_mac"
            host[key] = self.net.macs_from_layer(1)
        logits = self._downstream(fmap, 1)
        return self._result(logits, "coarse", self._trace("coarse", before, transfer, host))

    def run_fine(self, frame) -> InferenceResult:
        """Full ADC readout; every layer computed on the digital path."""
        if self.mode != SENSING:
            raise ModeError("fine path starts from sensing mode")
        before = self._snapshot()
        self.sensor.reset()
        self.sensor.expose(np.asarray(frame, dtype=np.float64))
        codes = self.sensor.read_frame().astype(np.int64)

        layer1 = self.net.layers[0]
        adc_bits = self.sensor.config.adc_bits
        # the in-pixel MAC integrates the *residual* photodiode voltage, so
        # the digital path complements the code before layer 1 sees it
        x = ((1 << adc_bits) - 1) - codes
        if layer1.input_bits < adc_bits:
            x >>= adc_bits - layer1.input_bits
        elif layer1.input_bits > adc_bits:
            x <<= layer1.input_bits - adc_bits
        if layer1.kind == "conv":
            fmap = QuantTensor(x.astype(np.uint32)[..., None], layer1.input_bits)
        else:
            fmap = QuantTensor(x.astype(np.uint32).ravel(), layer1.input_bits)

        mn_bits = self.sensor.m * self.sensor.n * adc_bits
        host = {}
        if self.platform in PNS_PLATFORMS:
            transfer = {"transfer_per_bit_pns": mn_bits,
                        "transfer_per_bit_host": self.net.classes * LOGIT_BITS}
        else:
            transfer = {"transfer_per_bit_host": mn_bits}
            key = "host_gpu_per_mac" if self.platform == "pisa-gpu" else "host_cpu_per_mac"
            host[key] = self.net.macs_from_layer(0)
        logits = self._downstream(fmap, 0)
        return self._result(logits, "fine", self._trace("fine", before, transfer, host))

    def run_auto(self, frame) -> InferenceResult:
        """Coarse first; if something is detected, switch and take a fine look."""
        coarse = self.run_coarse(frame)
        if not coarse.detected:
            return coarse
        self.switch_mode(SENSING)
        return self.run_fine(frame)


def run_batch(system: PisaSystem, frames, mode: str = "coarse"):
    """Sequential inference over a stack of frames; returns results list."""
    results = []
    for frame in frames:
        if mode == "coarse":
            results.append(system.run_coarse(frame))
        elif mode == "fine":
            system.switch_mode(SENSING)
            results.append(system.run_fine(frame))
        elif mode == "auto":
            results.append(system.run_auto(frame))
        else:
            raise ValueError("mode must be coarse, fine or auto")
    return results


def accuracy(system: PisaSystem, frames, labels, mode: str = "coarse") -> float:
    preds = [r.predicted for r in run_batch(system, frames, mode)]
    labels = np.asarray(labels).ravel()
    return float(np.mean(np.asarray(preds) == labels[: len(preds)]))


def merge_traces(traces) -> dict:
    """Sum per-frame traces (shared meta) into one batch trace."""
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to merge")
    out = {k: Counter() for k in ("sensor", "transfer", "pns", "host")}
    meta = dict(traces[0]["meta"])
    for t in traces:
        if t["meta"]["workload_id"] != meta["workload_id"]:
            raise ShapeMismatch("cannot merge traces from different runs")
        for k in out:
            out[k].update(t[k])
    out["meta"] = meta
    out["meta"]["frames"] = len(traces)
    return out


def per_frame_trace(batch_trace: dict) -> dict:
    """Average a merged batch trace back to one representative frame."""
    frames = batch_trace["meta"].get("frames", 1)
    out = {}
    for k in ("sensor", "transfer", "pns", "host"):
        out[k] = {name: c / frames for name, c in batch_trace[k].items()}
    out["meta"] = {k: v for k, v in batch_trace["meta"].items() if k != "frames"}
    return out

"""Closed-form workload descriptions for the platform comparison.

A Workload records, per post-sensor layer, how many sliding windows the
layer evaluates and how wide each window is.  From that the accounting can
derive exact operation counts for any weight:input (W:I) precision without
executing the network: AND row-operations follow the row-packing rule
(windows share a 256-bit row when they fit, wide windows span several), and
every (window, output channel, plane pair) costs one DPU shift-add.

The default comparison workload is the 8-layer street-number topology:
layer 1 runs on the 32x32 sensor with v = 1280 outputs (a 16x16x5 fmap),
then five 3x3 binary-weight conv layers (16, 32 s2, 32, 64 s2, 64 channels),
a 1024-128 FC and a 128-10 FC.
"""

from __future__ import annotations

from dataclasses import dataclass

from .convolve import rows_for_windows


@dataclass(frozen=True)
class PnsLayerOps:
    name: str
    positions: int  # sliding windows evaluated
    window: int     # elements per window (kh * kw * in_ch)
    out_ch: int

    @property
    def macs(self) -> int:
        return self.positions * self.window * self.out_ch

    def and_ops(self, input_bits: int, weight_bits: int = 1) -> int:
        return self.out_ch * weight_bits * input_bits * rows_for_windows(self.window, self.positions)

    def shift_adds(self, input_bits: int, weight_bits: int = 1) -> int:
        return self.out_ch * weight_bits * input_bits * self.positions


@dataclass(frozen=True)
class Workload:
    name: str
    sensor_m: int
    sensor_n: int
    v: int  # layer-1 outputs computed in-pixel
    adc_bits: int
    classes: int
    pns_layers: tuple

    @property
    def sensor_macs(self) -> int:
        return self.sensor_m * self.sensor_n * self.v

    @property
    def pns_macs(self) -> int:
        return sum(l.macs for l in self.pns_layers)

    @property
    def total_macs(self) -> int:
        return self.sensor_macs + self.pns_macs

    def and_ops(self, input_bits: int) -> int:
        return sum(l.and_ops(input_bits) for l in self.pns_layers)

    def shift_adds(self, input_bits: int) -> int:
        return sum(l.shift_adds(input_bits) for l in self.pns_layers)


def conv_ops(name, in_hw, in_ch, out_ch, k=3, stride=1, pad=1):
    oh = (in_hw + 2 * pad - k) // stride + 1
    return PnsLayerOps(name, oh * oh, k * k * in_ch, out_ch), oh


def svhn_workload() -> Workload:
    """The 6-conv + 2-FC comparison network on a 32x32 sensor."""
    layers = []
    l2, hw = conv_ops("conv2", 16, 5, 16)
    layers.append(l2)
    l3, hw = conv_ops("conv3", hw, 16, 32, stride=2)
    layers.append(l3)
    l4, hw = conv_ops("conv4", hw, 32, 32)
    layers.append(l4)
    l5, hw = conv_ops("conv5", hw, 32, 64, stride=2)
    layers.append(l5)
    l6, hw = conv_ops("conv6", hw, 64, 64)
    layers.append(l6)
    layers.append(PnsLayerOps("fc7", 1, hw * hw * 64, 128))
    layers.append(PnsLayerOps("fc8", 1, 128, 10))
    return Workload(
        name="svhn32",
        sensor_m=32,
        sensor_n=32,
        v=1280,  # 16 x 16 x 5 layer-1 fmap
        adc_bits=8,
        classes=10,
        pns_layers=tuple(layers),
    )

"""Quantized convolution / FC layers as bit-plane AND + bitcount + shift + add.

An M-bit input window and N-bit weight kernel are convolved exactly through
their bit planes:

    dot(I, W) = sum_m sum_n 2^(m+n) * bitcount(AND(C_n(W), C_m(I)))

Binary +/-1 weights (weight_bits == 1) use the single {0,1} plane P via the
identity  val_signed = 2 * dot(I, P) - sum(I over the window),  which follows
from the +1 -> 1 / -1 -> 0 encoding.  Multi-bit weights are treated as
unsigned magnitudes.

Three substrates execute a layer with bit-identical numerics:

  functional  - plain integer arithmetic, zero hardware tally
  pns-dra     - every AND runs through the DRAM bulk path, DRA costing
  pns-tra     - same values, TRA costing

Windows are laid out across the 256-bit DRAM row width, several windows per
row when they fit; the digital processing unit (DPU) does per-window
bitcounts, the (m+n) barrel shift, accumulation, then linear batch norm and
the activation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bitplane import BitPlaneTensor, QuantTensor, pack_rows, popcount, unpack_rows
from .dram import COLS, DramSubArray, PnsOrganization, bulk_and
from .errors import ShapeMismatch

ACTIVATIONS = ("sign", "quant_relu")


@dataclass
class LayerSpec:
    kind: str  # 'conv' or 'fc'
    in_channels: int
    out_channels: int
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    padding: int = 0
    weight_bits: int = 1
    input_bits: int = 1
    bn_scale: np.ndarray = None
    bn_bias: np.ndarray = None
    activation: str = "quant_relu"
    out_bits: int = None
    # bit planes of the weights: (weight_bits, out_channels, K) 0/1,
    # K = kernel_h * kernel_w * in_channels, kernel elements row-major
    weight_planes: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("conv", "fc"):
            raise ValueError("kind must be 'conv' or 'fc', got %r" % (self.kind,))
        if self.kind == "fc" and (self.kernel_h, self.kernel_w) != (1, 1):
            raise ValueError("fc layers use a 1x1 kernel")
        if self.weight_bits < 1 or self.input_bits < 1:
            raise ValueError("bit widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError("unknown activation %r" % (self.activation,))
        if self.out_bits is None:
            self.out_bits = 1 if self.activation == "sign" else self.input_bits
        if self.bn_scale is None:
            self.bn_scale = np.ones(self.out_channels, dtype=np.float32)
        if self.bn_bias is None:
            self.bn_bias = np.zeros(self.out_channels, dtype=np.float32)
        self.bn_scale = np.asarray(self.bn_scale, dtype=np.float32)
        self.bn_bias = np.asarray(self.bn_bias, dtype=np.float32)
        if self.bn_scale.shape != (self.out_channels,) or self.bn_bias.shape != (self.out_channels,):
            raise ShapeMismatch("batch-norm vectors must have one entry per output channel")
        if self.weight_planes is not None:
            self.weight_planes = np.asarray(self.weight_planes, dtype=np.uint8)
            want = (self.weight_bits, self.out_channels, self.window_elems)
            if self.weight_planes.shape != want:
                raise ShapeMismatch(
                    "weight planes shaped %r, expected %r" % (self.weight_planes.shape, want)
                )
            if self.weight_planes.size and self.weight_planes.max() > 1:
                raise ValueError("weight planes must be 0/1 bits")

    @property
    def window_elems(self) -> int:
        return self.kernel_h * self.kernel_w * self.in_channels

    def output_hw(self, h, w):
        oh = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        return oh, ow


@dataclass
class DpuState:
    """Bit-counter, barrel shifter and adder tree of the near-memory DPU."""

    acc: int = 0

    def shift_accumulate(self, count, m, n):
        self.acc = shift_accumulate(count, m, n, self.acc)
        return self.acc


def bitcount(row) -> int:
    """Population count of a row, packed (uint64 words) or unpacked bits."""
    arr = np.asarray(row)
    if arr.dtype == np.uint64:
        return popcount(arr)
    return int(np.count_nonzero(arr))


def shift_accumulate(count: int, m: int, n: int, acc: int) -> int:
    """acc += count << (m + n); the DPU's shift-and-add step."""
    return acc + (int(count) << (m + n))


def bitwise_dot(i_planes: BitPlaneTensor, w_planes: BitPlaneTensor) -> int:
    """Exact integer dot product of two unsigned tensors via their planes."""
    if i_planes.n_elements != w_planes.n_elements:
        raise ShapeMismatch(
            "window has %d elements, kernel %d" % (i_planes.n_elements, w_planes.n_elements)
        )
    acc = 0
    for m in range(i_planes.bits):
        im = i_planes.planes[m]
        for n in range(w_planes.bits):
            acc = shift_accumulate(popcount(im & w_planes.planes[n]), m, n, acc)
    return acc


# -- substrates -------------------------------------------------------------


class FunctionalSubstrate:
    """Pure integer execution; charges no hardware operations."""

    name = "functional"
    mechanism = None

    def __init__(self):
        self.tally = Counter()


class PnsSubstrate:
    """Executes every AND on the DRAM sub-array model and tallies row ops."""

    def __init__(self, mechanism: str = "dra", organization: PnsOrganization = None):
        if mechanism not in ("dra", "tra"):
            raise ValueError("mechanism must be 'dra' or 'tra'")
        self.mechanism = mechanism
        self.name = "pns-" + mechanism
        self.organization = organization or PnsOrganization()
        self.subarray = DramSubArray()
        self.tally = Counter()


def make_substrate(name: str):
    if name == "functional":
        return FunctionalSubstrate()
    if name in ("pns-dra", "dra"):
        return PnsSubstrate("dra")
    if name in ("pns-tra", "tra"):
        return PnsSubstrate("tra")
    raise ValueError("unknown substrate %r" % (name,))


# -- layer execution --------------------------------------------------------


def rows_for_windows(k: int, positions: int, cols: int = COLS) -> int:
    """DRAM rows needed to lay out `positions` windows of k elements each.

    Windows never straddle a row when k <= cols (several per row); wider
    windows span ceil(k / cols) rows each.
    """
    if k <= cols:
        per_row = cols // k
        return -(-positions // per_row)
    return positions * (-(-k // cols))


def and_ops_for_layer(layer: LayerSpec, positions: int) -> int:
    """Closed-form count of AND row-operations a PNS substrate will issue."""
    rows = rows_for_windows(layer.window_elems, positions)
    return layer.out_channels * layer.weight_bits * layer.input_bits * rows


def extract_windows(fmap: QuantTensor, layer: LayerSpec):
    """im2col: returns (positions, K) int64 windows and the output (oh, ow).

    FC layers treat the whole fmap, raveled row-major, as one window.
    """
    if fmap.bits != layer.input_bits:
        raise ShapeMismatch(
            "fmap is %d-bit but layer expects %d-bit input" % (fmap.bits, layer.input_bits)
        )
    if layer.kind == "fc":
        if fmap.n_elements != layer.in_channels:
            raise ShapeMismatch(
                "fc layer wants %d inputs, fmap has %d" % (layer.in_channels, fmap.n_elements)
            )
        return fmap.data.astype(np.int64).reshape(1, -1), (1, 1)
    if len(fmap.shape) != 3 or fmap.shape[2] != layer.in_channels:
        raise ShapeMismatch(
            "conv input must be (h, w, %d), got %r" % (layer.in_channels, fmap.shape)
        )
    h, w, c = fmap.shape
    p = layer.padding
    padded = np.zeros((h + 2 * p, w + 2 * p, c), dtype=np.int64)
    padded[p : p + h, p : p + w] = fmap.data
    oh, ow = layer.output_hw(h, w)
    if oh < 1 or ow < 1:
        raise ShapeMismatch("kernel does not fit the padded input")
    wins = np.empty((oh * ow, layer.window_elems), dtype=np.int64)
    idx = 0
    for y in range(oh):
        for x in range(ow):
            y0, x0 = y * layer.stride, x * layer.stride
            wins[idx] = padded[y0 : y0 + layer.kernel_h, x0 : x0 + layer.kernel_w].ravel()
            idx += 1
    return wins, (oh, ow)


def _dot_functional(windows, layer):
    """Per-plane integer matmuls; exact by construction."""
    out = np.zeros((windows.shape[0], layer.out_channels), dtype=np.int64)
    for m in range(layer.input_bits):
        im = ((windows >> m) & 1).astype(np.int64)
        for n in range(layer.weight_bits):
            counts = im @ layer.weight_planes[n].astype(np.int64).T
            out += counts << (m + n)
    return out


def _dot_pns(windows, layer, substrate):
    """Same sums as _dot_functional, but every AND goes through the DRAM path."""
    k = layer.window_elems
    positions = windows.shape[0]
    o = layer.out_channels
    if k <= COLS:
        per_row = COLS // k
        nrows = -(-positions // per_row)
        padded = np.zeros((nrows * per_row, k), dtype=np.uint8)
        row_layout = (nrows, per_row * k)
    else:
        span = -(-k // COLS)
        nrows = positions * span
        padded = np.zeros((positions, span * COLS), dtype=np.uint8)
        row_layout = (nrows, COLS)

    out = np.zeros((positions, o), dtype=np.int64)
    for m in range(layer.input_bits):
        im = ((windows >> m) & 1).astype(np.uint8)
        if k <= COLS:
            padded[:positions] = im
            input_rows = pack_rows(padded.reshape(row_layout))
        else:
            padded[:, :k] = im
            input_rows = pack_rows(padded.reshape(row_layout))
        for n in range(layer.weight_bits):
            wplane = layer.weight_planes[n]  # (o, k)
            if k <= COLS:
                wrows = pack_rows(np.tile(wplane, (1, per_row)))  # (o, per_row*k) packed
            else:
                wpad = np.zeros((o, span * COLS), dtype=np.uint8)
                wpad[:, :k] = wplane
                wrows = pack_rows(wpad.reshape(o * span, COLS))
            for oc in range(o):
                if k <= COLS:
                    a = input_rows
                    b = np.broadcast_to(wrows[oc], input_rows.shape)
                else:
                    a = input_rows
                    b = np.tile(wrows[oc * span : (oc + 1) * span], (positions, 1))
                anded, tally = bulk_and(substrate.subarray, a, b, substrate.mechanism)
                substrate.tally.update(tally)
                substrate.tally["dpu_bitcount_per_row"] += a.shape[0]
                bits = unpack_rows(anded, row_layout[1])
                if k <= COLS:
                    counts = bits.reshape(-1, per_row, k).sum(axis=2).reshape(-1)[:positions]
                else:
                    counts = bits.reshape(positions, span * COLS).sum(axis=1)
                out[:, oc] += counts.astype(np.int64) << (m + n)
            substrate.tally["dpu_shift_add"] += o * positions
    return out


def run_layer(fmap: QuantTensor, layer: LayerSpec, substrate) -> QuantTensor:
    """Execute one layer; substrates agree bit-for-bit, only tallies differ."""
    if layer.weight_planes is None:
        raise ShapeMismatch("layer has no weights attached")
    windows, (oh, ow) = extract_windows(fmap, layer)

    if isinstance(substrate, PnsSubstrate):
        dots = _dot_pns(windows, layer, substrate)
    else:
        dots = _dot_functional(windows, layer)

    if layer.weight_bits == 1:
        # +/-1 weights: signed value from the {0,1} plane and the window sum
        val = 2 * dots - windows.sum(axis=1, dtype=np.int64)[:, None]
    else:
        val = dots

    scale = layer.bn_scale.astype(np.float64)
    bias = layer.bn_bias.astype(np.float64)
    y = val.astype(np.float64) * scale[None, :] + bias[None, :]

    if layer.activation == "sign":
        out = (y > 0).astype(np.uint32)
        out_bits = 1
    else:
        top = (1 << layer.out_bits) - 1
        out = np.clip(np.floor(y + 0.5), 0, top).astype(np.uint32)
        out_bits = layer.out_bits

    if layer.kind == "fc":
        return QuantTensor(out.reshape(layer.out_channels), out_bits)
    return QuantTensor(out.reshape(oh, ow, layer.out_channels), out_bits)


def layer_preactivations(fmap: QuantTensor, layer: LayerSpec) -> np.ndarray:
    """Integer pre-BN values on the functional path (for oracles and export)."""
    windows, _ = extract_windows(fmap, layer)
    dots = _dot_functional(windows, layer)
    if layer.weight_bits == 1:
        return 2 * dots - windows.sum(axis=1, dtype=np.int64)[:, None]
    return dots

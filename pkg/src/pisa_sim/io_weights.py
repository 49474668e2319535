"""Binary weight-file format.

Layout, all little-endian:

    magic   7 bytes  "PISAW1\\0"
    version u8       currently 1
    count   u32      number of layers
    count * 11-byte layer headers:
        kind u8 (0 conv, 1 fc), in_ch u16, out_ch u16,
        kh u8, kw u8, stride u8, pad u8, weight_bits u8, input_bits u8
    count * payloads, in layer order:
        weight bit-planes, plane-major, one packed row per output channel
        (kernel elements row-major, LSB-first within each byte, each row
        zero-padded to a whole byte), then bn_scale then bn_bias as f32
        per output channel.

The total size is computable from the headers alone, so a parser can reject
short or oversized files before touching any payload. Every parse failure is
a FormatError carrying the byte offset of the problem.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .bitplane import MAX_BITS
from .convolve import LayerSpec
from .errors import FormatError
from .pipeline import NetworkSpec

MAGIC = b"PISAW1\x00"
VERSION = 1
_HEADER = struct.Struct("<BHHBBBBBB")

KIND_CODES = {"conv": 0, "fc": 1}
KIND_NAMES = {0: "conv", 1: "fc"}


def _row_bytes(k: int) -> int:
    return (k + 7) // 8


def _payload_size(hdr) -> int:
    kind, in_ch, out_ch, kh, kw, _, _, wb, _ = hdr
    k = kh * kw * in_ch
    return wb * out_ch * _row_bytes(k) + 8 * out_ch


def _pack_plane_rows(plane: np.ndarray) -> bytes:
    # (out_ch, K) 0/1 -> per-row LSB-first packed bytes
    return np.packbits(plane.astype(np.uint8), axis=1, bitorder="little").tobytes()


def save_weights(net, path):
    """Serialize a NetworkSpec (or iterable of LayerSpec) to `path`."""
    layers = list(net.layers) if isinstance(net, NetworkSpec) else list(net)
    if not layers:
        raise FormatError("refusing to write a network with no layers")
    blob = bytearray()
    blob += MAGIC
    blob.append(VERSION)
    blob += struct.pack("<I", len(layers))
    for layer in layers:
        if layer.weight_planes is None:
            raise FormatError("layer has no weights to serialize")
        blob += _HEADER.pack(
            KIND_CODES[layer.kind], layer.in_channels, layer.out_channels,
            layer.kernel_h, layer.kernel_w, layer.stride, layer.padding,
            layer.weight_bits, layer.input_bits,
        )
    for layer in layers:
        for n in range(layer.weight_bits):
            blob += _pack_plane_rows(layer.weight_planes[n])
        blob += layer.bn_scale.astype("<f4").tobytes()
        blob += layer.bn_bias.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                "truncated while reading %s (needed %d bytes at offset %d)"
                % (what, n, self.pos),
                offset=len(self.data),
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _parse_headers(r: _Reader):
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise FormatError("bad magic %r" % (magic,), offset=0)
    version = r.take(1, "version")[0]
    if version != VERSION:
        raise FormatError("unsupported version %d" % version, offset=len(MAGIC))
    (count,) = struct.unpack("<I", r.take(4, "layer count"))
    if count == 0:
        raise FormatError("empty network", offset=len(MAGIC) + 1)
    headers = []
    for i in range(count):
        at = r.pos
        hdr = _HEADER.unpack(r.take(_HEADER.size, "layer %d header" % i))
        kind, in_ch, out_ch, kh, kw, stride, pad, wb, ib = hdr
        if kind not in KIND_NAMES:
            raise FormatError("layer %d: unknown kind byte %d" % (i, kind), offset=at)
        if 0 in (in_ch, out_ch, kh, kw, stride):
            raise FormatError("layer %d: zero-sized field" % i, offset=at)
        if kind == KIND_CODES["fc"] and (kh, kw, stride, pad) != (1, 1, 1, 0):
            raise FormatError("layer %d: fc layers use a 1x1/s1/p0 kernel" % i, offset=at)
        if not (1 <= wb <= MAX_BITS and 1 <= ib <= MAX_BITS):
            raise FormatError("layer %d: bit widths out of range" % i, offset=at)
        headers.append(hdr)
    return headers


def load_weights(path, input_hw=None, name=None) -> NetworkSpec:
    """Parse a weight file into a NetworkSpec with planes attached.

    `input_hw` defaults to the square frame implied by an fc layer 1
    (e.g. 784 inputs -> 28x28); pass it explicitly for anything else.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    headers = _parse_headers(r)

    expected = r.pos + sum(_payload_size(h) for h in headers)
    if len(data) < expected:
        raise FormatError(
            "file is %d bytes, header describes %d" % (len(data), expected),
            offset=len(data),
        )
    if len(data) > expected:
        raise FormatError(
            "%d trailing bytes after the last payload" % (len(data) - expected),
            offset=expected,
        )

    layers = []
    for i, hdr in enumerate(headers):
        kind, in_ch, out_ch, kh, kw, stride, pad, wb, ib = hdr
        k = kh * kw * in_ch
        rb = _row_bytes(k)
        planes = np.empty((wb, out_ch, k), dtype=np.uint8)
        for n in range(wb):
            at = r.pos
            raw = np.frombuffer(r.take(out_ch * rb, "layer %d plane %d" % (i, n)), dtype=np.uint8)
            bits = np.unpackbits(raw.reshape(out_ch, rb), axis=1, bitorder="little")
            if bits[:, k:].any():
                raise FormatError(
                    "layer %d plane %d: nonzero padding bits" % (i, n), offset=at
                )
            planes[n] = bits[:, :k]
        scale = np.frombuffer(r.take(4 * out_ch, "layer %d bn_scale" % i), dtype="<f4")
        bias = np.frombuffer(r.take(4 * out_ch, "layer %d bn_bias" % i), dtype="<f4")
        layers.append(LayerSpec(
            kind=KIND_NAMES[kind], in_channels=in_ch, out_channels=out_ch,
            kernel_h=kh, kernel_w=kw, stride=stride, padding=pad,
            weight_bits=wb, input_bits=ib,
            bn_scale=scale.copy(), bn_bias=bias.copy(),
            weight_planes=planes,
        ))

    if input_hw is None:
        first = layers[0]
        if first.kind == "fc":
            side = math.isqrt(first.in_channels)
            if side * side != first.in_channels:
                raise FormatError(
                    "cannot infer frame shape from %d fc inputs; pass input_hw"
                    % first.in_channels
                )
            input_hw = (side, side)
        else:
            raise FormatError("conv layer 1 needs an explicit input_hw")
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return NetworkSpec.from_layers(layers, input_hw, name=name)

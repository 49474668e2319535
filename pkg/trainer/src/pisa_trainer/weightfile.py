"""Weight-file writer: the exact byte layout the simulator parses.

All little-endian:

    magic   7 bytes  "PISAW1\\0"
    version u8       1
    count   u32
    count * 11-byte headers <BHHBBBBBB:
        kind (0 conv, 1 fc), in_ch, out_ch, kh, kw, stride, pad,
        weight_bits, input_bits
    count * payloads:
        one packed bit-plane row per output channel, kernel elements
        row-major with channel fastest, LSB first, zero-padded to whole
        bytes; then bn_scale and bn_bias as f32 per output channel.

Binary +/-1 weights store their single plane as the +1 mask. The small
reader here exists so tests can round-trip a file without touching the
simulator; the authoritative parser lives on the other side.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import rebuild

MAGIC = b"PISAW1\x00"
VERSION = 1
HEADER = struct.Struct("<BHHBBBBBB")
KIND_CODES = {"conv": 0, "fc": 1}
KIND_NAMES = {0: "conv", 1: "fc"}
MAX_FIELD_BITS = 32


def _check_fields(fl):
    sh = fl.shape
    if not (1 <= sh.in_channels <= 0xFFFF and 1 <= sh.out_channels <= 0xFFFF):
        raise FormatError(
            "channel counts %dx%d exceed the format's 16-bit fields"
            % (sh.in_channels, sh.out_channels)
        )
    for name in ("kernel_h", "kernel_w", "stride", "padding"):
        v = getattr(sh, name)
        if not 0 <= v <= 0xFF or (v == 0 and name != "padding"):
            raise FormatError("%s=%d does not fit the format" % (name, v))
    if not 1 <= fl.input_bits <= MAX_FIELD_BITS:
        raise FormatError("input_bits=%d out of range" % fl.input_bits)


def weight_blob(folded) -> bytes:
    """Serialize folded layers; raises FormatError on anything unwritable."""
    if not folded:
        raise FormatError("refusing to export an empty network")
    blob = bytearray()
    blob += MAGIC
    blob.append(VERSION)
    blob += struct.pack("<I", len(folded))
    for fl in folded:
        _check_fields(fl)
        sh = fl.shape
        blob += HEADER.pack(
            KIND_CODES[sh.kind], sh.in_channels, sh.out_channels,
            sh.kernel_h, sh.kernel_w, sh.stride, sh.padding,
            1, fl.input_bits,
        )
    for fl in folded:
        sh = fl.shape
        signs = np.asarray(fl.signs)
        if signs.shape != (sh.out_channels, sh.window_elems):
            raise FormatError(
                "signs shaped %r, layer wants %r"
                % (signs.shape, (sh.out_channels, sh.window_elems))
            )
        plane = (signs > 0).astype(np.uint8)
        blob += np.packbits(plane, axis=1, bitorder="little").tobytes()
        blob += np.asarray(fl.bn_scale).astype("<f4").tobytes()
        blob += np.asarray(fl.bn_bias).astype("<f4").tobytes()
    return bytes(blob)


def export(checkpoint, path) -> bytes:
    """Fold a checkpoint and write its weight file; returns the bytes."""
    blob = weight_blob(rebuild(checkpoint).fold())
    Path(path).write_bytes(blob)
    return blob


def read_blob(blob: bytes) -> list:
    """Minimal parse of a weight blob back into layer dicts (for tests)."""
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic")
    if blob[len(MAGIC)] != VERSION:
        raise FormatError("unsupported version %d" % blob[len(MAGIC)])
    (count,) = struct.unpack_from("<I", blob, len(MAGIC) + 1)
    pos = len(MAGIC) + 5
    headers = []
    for _ in range(count):
        headers.append(HEADER.unpack_from(blob, pos))
        pos += HEADER.size
    layers = []
    for kind, in_ch, out_ch, kh, kw, stride, pad, wb, ib in headers:
        k = kh * kw * in_ch
        row_bytes = (k + 7) // 8
        planes = []
        for _ in range(wb):
            raw = np.frombuffer(blob, np.uint8, out_ch * row_bytes, pos)
            bits = np.unpackbits(raw.reshape(out_ch, row_bytes), axis=1,
                                 bitorder="little")
            if bits[:, k:].any():
                raise FormatError("nonzero padding bits")
            planes.append(bits[:, :k])
            pos += out_ch * row_bytes
        scale = np.frombuffer(blob, "<f4", out_ch, pos)
        pos += 4 * out_ch
        bias = np.frombuffer(blob, "<f4", out_ch, pos)
        pos += 4 * out_ch
        layers.append({
            "kind": KIND_NAMES.get(kind, kind), "in_channels": in_ch,
            "out_channels": out_ch, "kernel": (kh, kw), "stride": stride,
            "padding": pad, "weight_bits": wb, "input_bits": ib,
            "planes": np.stack(planes), "bn_scale": scale, "bn_bias": bias,
        })
    if pos != len(blob):
        raise FormatError("%d stray bytes after the last payload" % (len(blob) - pos))
    return layers

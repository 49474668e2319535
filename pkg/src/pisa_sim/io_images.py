"""Dataset ingestion: IDX (MNIST-style) tensors and binary PGM images.

Both loaders accept plain or gzip-compressed files (sniffed from the two
magic bytes, regardless of extension). Intensities come back as float64 in
[0, 1], always byte/255. Offsets in errors refer to the decompressed stream.
"""

from __future__ import annotations

import gzip

import numpy as np

from .errors import FormatError

IDX_UBYTE = 0x08


def _read_raw(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except OSError as e:
            raise FormatError("bad gzip stream: %s" % e, offset=0) from None
    return data


def _parse_idx(data: bytes, want_dims=None) -> np.ndarray:
    if len(data) < 4:
        raise FormatError("IDX header needs 4 bytes", offset=len(data))
    if data[0] != 0 or data[1] != 0:
        raise FormatError("not an IDX file (first two bytes nonzero)", offset=0)
    if data[2] != IDX_UBYTE:
        raise FormatError("unsupported IDX element type 0x%02x" % data[2], offset=2)
    ndims = data[3]
    if ndims == 0 or (want_dims is not None and ndims != want_dims):
        raise FormatError(
            "expected %s-dimensional IDX data, file says %d" % (want_dims, ndims),
            offset=3,
        )
    need = 4 + 4 * ndims
    if len(data) < need:
        raise FormatError("truncated IDX dimension list", offset=len(data))
    dims = [int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndims)]
    count = 1
    for d in dims:
        count *= d
    if len(data) != need + count:
        raise FormatError(
            "IDX payload is %d bytes, dimensions say %d" % (len(data) - need, count),
            offset=min(len(data), need + count),
        )
    return np.frombuffer(data, dtype=np.uint8, offset=need).reshape(dims)


def _parse_pgm(data: bytes) -> np.ndarray:
    # P5 <width> <height> <maxval>, single whitespace, then raw rows
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (missing P5)", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FormatError("bad PGM header token %r" % token, offset=start)
        fields.append(int(token))
    if pos >= len(data):
        raise FormatError("PGM header ends before pixel data", offset=len(data))
    pos += 1  # the single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError("only 8-bit PGM supported (maxval 255)", offset=0)
    if len(data) - pos != width * height:
        raise FormatError(
            "PGM payload is %d bytes, header says %d" % (len(data) - pos, width * height),
            offset=min(len(data), pos + width * height),
        )
    return np.frombuffer(data, dtype=np.uint8, offset=pos).reshape(height, width)


def load_images(path, format: str = None) -> np.ndarray:
    """(N, H, W) float64 frames in [0, 1]; a PGM yields N = 1."""
    data = _read_raw(path)
    if format is None:
        format = "pgm" if data[:2] == b"P5" else "idx"
    if format == "pgm":
        frames = _parse_pgm(data)[None]
    elif format == "idx":
        frames = _parse_idx(data, want_dims=3)
    else:
        raise FormatError("unknown image format %r" % (format,))
    return frames.astype(np.float64) / 255.0


def load_labels(path) -> np.ndarray:
    """(N,) uint8 labels from a 1-D IDX file."""
    return _parse_idx(_read_raw(path), want_dims=1).copy()

"""Fixed-point tensors and bit-plane decomposition.

An M-bit unsigned tensor is held either densely (QuantTensor) or as M packed
bit planes (BitPlaneTensor): plane m carries bit m of every element, so the
original tensor is the weighted sum over planes with weights 2^m.  Binary
+/-1 weight tensors are stored as single packed planes with the encoding
+1 -> 1, -1 -> 0 (BinaryWeightPlane).

Packing layout: 64-bit words, LSB-first within a word, row-major element
order, zero padding past the element count.  Padding bits are kept zero so
word-level popcounts need no masking.
"""

from __future__ import annotations

import numpy as np

MAX_BITS = 32

_WORD_BITS = 64


def pack_bits(bits) -> np.ndarray:
    """Pack a flat 0/1 array into little-endian 64-bit words."""
    bits = np.ascontiguousarray(np.asarray(bits, dtype=np.uint8).ravel())
    raw = np.packbits(bits, bitorder="little").tobytes()
    pad = (-len(raw)) % 8
    if pad:
        raw += b"\x00" * pad
    return np.frombuffer(raw, dtype="<u8").copy()


def unpack_bits(words: np.ndarray, count: int) -> np.ndarray:
    """Inverse of pack_bits; returns the first `count` bits as uint8 0/1."""
    raw = np.frombuffer(np.ascontiguousarray(words, dtype="<u8").tobytes(), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:count]


def popcount(words) -> int:
    return int(np.bitwise_count(np.asarray(words, dtype=np.uint64)).sum())


def pack_rows(bitmat) -> np.ndarray:
    """Pack each row of a (R, C) 0/1 matrix into words; returns (R, W) uint64."""
    bitmat = np.asarray(bitmat, dtype=np.uint8)
    if bitmat.ndim != 2:
        raise ValueError("pack_rows expects a 2-d bit matrix")
    r, c = bitmat.shape
    wbytes = (-(-c // 8) + 7) // 8 * 8  # bytes per row, padded to a word
    packed = np.packbits(bitmat, axis=1, bitorder="little")
    if packed.shape[1] < wbytes:
        packed = np.hstack([packed, np.zeros((r, wbytes - packed.shape[1]), dtype=np.uint8)])
    return np.frombuffer(np.ascontiguousarray(packed).tobytes(), dtype="<u8").reshape(r, wbytes // 8).copy()


def unpack_rows(words: np.ndarray, count: int) -> np.ndarray:
    """Inverse of pack_rows; returns (R, count) uint8 0/1."""
    words = np.ascontiguousarray(words, dtype="<u8")
    r = words.shape[0]
    raw = np.frombuffer(words.tobytes(), dtype=np.uint8).reshape(r, -1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :count]


def _check_bits(bits):
    if not 1 <= int(bits) <= MAX_BITS:
        raise ValueError("bit width must be in 1..%d, got %r" % (MAX_BITS, bits))
    return int(bits)


class QuantTensor:
    """Dense N-d tensor of unsigned fixed-point integers, `bits` wide each.

    Immutable after construction; `data` is a read-only uint32 array.
    """

    def __init__(self, data, bits):
        self.bits = _check_bits(bits)
        arr = np.asarray(data)
        if arr.dtype.kind not in "ui":
            if not np.all(arr == np.floor(arr)):
                raise ValueError("QuantTensor data must be integral")
        arr = arr.astype(np.int64, copy=False)
        if arr.size and (arr.min() < 0 or arr.max() >= (1 << self.bits)):
            raise ValueError("every element must lie in [0, 2^bits)")
        self.data = np.ascontiguousarray(arr.astype(np.uint32))
        self.data.flags.writeable = False
        self.shape = tuple(self.data.shape)

    @property
    def n_elements(self) -> int:
        return int(self.data.size)

    def __eq__(self, other):
        return (
            isinstance(other, QuantTensor)
            and self.bits == other.bits
            and self.shape == other.shape
            and bool(np.array_equal(self.data, other.data))
        )

    def __hash__(self):
        return hash((self.shape, self.bits, self.data.tobytes()))

    def __repr__(self):
        return "QuantTensor(shape=%r, bits=%d)" % (self.shape, self.bits)


class BitPlaneTensor:
    """M packed bit planes of a QuantTensor, LSB plane first."""

    def __init__(self, shape, planes):
        self.shape = tuple(int(s) for s in shape)
        self.planes = tuple(np.ascontiguousarray(p, dtype=np.uint64) for p in planes)
        _check_bits(len(self.planes))
        n = 1
        for s in self.shape:
            n *= s
        self.n_elements = n
        want_words = -(-n // _WORD_BITS)
        for p in self.planes:
            if p.shape != (want_words,):
                raise ValueError("plane word count %r does not match %d elements" % (p.shape, n))

    @property
    def bits(self) -> int:
        return len(self.planes)

    def plane_bits(self, m: int) -> np.ndarray:
        """Bits of plane m as a flat 0/1 array, element order."""
        return unpack_bits(self.planes[m], self.n_elements)

    def plane_popcount(self, m: int) -> int:
        return popcount(self.planes[m])


class BinaryWeightPlane:
    """Packed +/-1 weight tensor: bit 1 encodes +1, bit 0 encodes -1."""

    def __init__(self, shape, words):
        self.shape = tuple(int(s) for s in shape)
        n = 1
        for s in self.shape:
            n *= s
        self.n_elements = n
        self.words = np.ascontiguousarray(words, dtype=np.uint64)
        if self.words.shape != (-(-n // _WORD_BITS),):
            raise ValueError("word count does not match shape %r" % (self.shape,))

    @classmethod
    def from_signs(cls, signs):
        signs = np.asarray(signs)
        if signs.size and not np.all(np.abs(signs) == 1):
            raise ValueError("weights must be +1 or -1")
        return cls(signs.shape, pack_bits((signs > 0).astype(np.uint8)))

    @classmethod
    def from_bits(cls, bits, shape):
        return cls(shape, pack_bits(bits))

    def bit_array(self) -> np.ndarray:
        return unpack_bits(self.words, self.n_elements)

    def signs(self) -> np.ndarray:
        """Decode back to a +/-1 int8 array of the original shape."""
        return (self.bit_array().astype(np.int8) * 2 - 1).reshape(self.shape)


def decompose(t: QuantTensor) -> BitPlaneTensor:
    """Split a QuantTensor into its packed bit planes."""
    flat = t.data.ravel()
    planes = [pack_bits((flat >> m) & 1) for m in range(t.bits)]
    return BitPlaneTensor(t.shape, planes)


def recompose(b: BitPlaneTensor) -> QuantTensor:
    """Rebuild the dense tensor: element i = sum_m 2^m * plane_m[i]."""
    acc = np.zeros(b.n_elements, dtype=np.uint32)
    for m in range(b.bits):
        acc |= b.plane_bits(m).astype(np.uint32) << np.uint32(m)
    return QuantTensor(acc.reshape(b.shape), b.bits)

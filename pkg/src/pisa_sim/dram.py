"""Near-sensor processing-in-DRAM computational sub-array.

A 512-row x 256-column sub-array: rows [0, 500) hold data and are driven by
the regular decoder, rows [500, 512) are compute rows behind a modified
decoder that can activate two (or three) of them at once.  Simultaneous
activation charge-shares the cell capacitors onto the bitline; the sense
amplifier compares against a reference and yields bitwise logic:

  dual-row activation (DRA):  V = n * v_dd / 2, NAND = [V < 3/4 * v_dd]
  triple-row activation (TRA): majority of the three cells (AND/OR via a
  pre-initialized control row), charged as 4 sequenced steps

Cell state is a clean bit; analog deviations are injected only by the
variation module.  Single-row reads are destructive-with-write-back and
therefore restore the cell.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    AddressOutOfRange,
    CapacityExceeded,
    InvalidCount,
    RowPairInvalid,
)

ROWS = 512
DATA_ROWS = 500
COMPUTE_ROW_BASE = 500
NUM_COMPUTE_ROWS = ROWS - DATA_ROWS
COLS = 256
COPY_CYCLES = 2
TRA_STEPS = 4
DRA_THRESHOLD_FRACTION = 0.75

# compute rows consumed per in-flight pair: operands (+dest) for DRA,
# operands + control + dest for TRA
_ROWS_PER_PAIR = {"dra": 3, "tra": 4}


@dataclass(frozen=True)
class PnsOrganization:
    """Chip-level arrangement of sub-arrays (defaults mirror the platform)."""

    rows_per_subarray: int = 1024
    cols: int = 256
    mats: tuple = (8, 4)
    banks: tuple = (16, 16)

    def __post_init__(self):
        for v in (self.rows_per_subarray, self.cols, *self.mats, *self.banks):
            if int(v) <= 0:
                raise ValueError("organization counts must be positive")

    @property
    def parallel_subarrays(self) -> int:
        return self.mats[0] * self.mats[1] * self.banks[0] * self.banks[1]


@dataclass(frozen=True)
class ChargeShareState:
    n_ones: int
    c_units: int
    v_dd: float


def charge_share_voltage(st: ChargeShareState) -> float:
    """Shared bitline voltage after simultaneous activation: n * v_dd / C."""
    if st.n_ones < 0 or st.c_units <= 0 or st.n_ones > st.c_units:
        raise InvalidCount("n_ones=%r outside [0, c_units=%r]" % (st.n_ones, st.c_units))
    return st.n_ones * st.v_dd / st.c_units


class DramSubArray:
    def __init__(self, v_dd: float = 1.2):
        self.v_dd = float(v_dd)
        self.cells = np.zeros((ROWS, COLS), dtype=np.uint8)
        self.row_buffer = np.zeros(COLS, dtype=np.uint8)
        self.cycle_count = 0

    # -- addressing ---------------------------------------------------------

    def _check_row(self, r):
        if not 0 <= int(r) < ROWS:
            raise AddressOutOfRange("row %r outside [0, %d)" % (r, ROWS))
        return int(r)

    @staticmethod
    def is_compute_row(r) -> bool:
        return COMPUTE_ROW_BASE <= int(r) < ROWS

    def _check_compute_pair(self, *rows):
        seen = set()
        for r in rows:
            self._check_row(r)
            if not self.is_compute_row(r):
                raise RowPairInvalid("row %d is not a compute row" % r)
            if r in seen:
                raise RowPairInvalid("rows must be distinct, got %r" % (rows,))
            seen.add(r)

    # -- plain row traffic --------------------------------------------------

    def write_row(self, r, bits):
        """Store a bit pattern (models external data placement, 1 cycle)."""
        r = self._check_row(r)
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        if bits.size > COLS:
            raise AddressOutOfRange("pattern wider than %d columns" % COLS)
        self.cells[r, :] = 0
        self.cells[r, : bits.size] = bits & 1
        self.cycle_count += 1

    def read_row(self, r) -> np.ndarray:
        r = self._check_row(r)
        self.cycle_count += 1
        return self.cells[r].copy()

    def row_copy(self, src, dst):
        """Copy src into dst through the row buffer (activate src, activate dst)."""
        src = self._check_row(src)
        dst = self._check_row(dst)
        self.row_buffer[:] = self.cells[src]
        self.cells[dst] = self.row_buffer
        self.cycle_count += COPY_CYCLES

    # -- charge-sharing logic ----------------------------------------------

    def dra_nand(self, row_a, row_b, dest, and_dest=None) -> np.ndarray:
        """Column-wise NAND of two compute rows in one compute cycle.

        The NAND result lands in `dest`; the complementary AND tap exists
        electrically and may be written to `and_dest` in the same cycle.
        """
        self._check_compute_pair(row_a, row_b)
        dest = self._check_row(dest)
        a = self.cells[row_a].astype(np.float64)
        b = self.cells[row_b].astype(np.float64)
        v = (a + b) * (self.v_dd / 2.0)
        nand = (v < DRA_THRESHOLD_FRACTION * self.v_dd).astype(np.uint8)
        self.cells[dest] = nand
        if and_dest is not None:
            self.cells[self._check_row(and_dest)] = 1 - nand
        self.cycle_count += 1
        return nand.copy()

    def tra_majority(self, row_a, row_b, row_c, dest) -> np.ndarray:
        """Column-wise majority of three compute rows (the baseline scheme).

        Charged as 4 sequenced steps (control init, two operand moves, the
        triple activation), ~360 ns with default step timing.
        """
        self._check_compute_pair(row_a, row_b, row_c)
        dest = self._check_row(dest)
        total = (
            self.cells[row_a].astype(np.int16)
            + self.cells[row_b]
            + self.cells[row_c]
        )
        maj = (total >= 2).astype(np.uint8)
        self.cells[dest] = maj
        self.cycle_count += TRA_STEPS
        return maj.copy()


def bulk_and(sa: DramSubArray, rows_a, rows_b, mechanism: str, pairs_in_flight: int = 1):
    """Element-wise AND over packed 256-bit row pairs, with an op tally.

    `rows_a` / `rows_b` are (k, 4) uint64 arrays, one packed row per pair.
    The result is computed directly (it is bit-identical to driving the
    row-level schedule, which tests assert); the tally charges the row
    operations the schedule would issue:

      dra: 2 row copies into compute rows + 1 compute cycle per pair
      tra: 4 steps per pair (includes the operand moves)
    """
    if mechanism not in _ROWS_PER_PAIR:
        raise ValueError("mechanism must be 'dra' or 'tra', got %r" % (mechanism,))
    if pairs_in_flight < 1:
        raise ValueError("pairs_in_flight must be >= 1")
    if pairs_in_flight * _ROWS_PER_PAIR[mechanism] > NUM_COMPUTE_ROWS:
        raise CapacityExceeded(
            "%d pairs in flight need %d compute rows, only %d exist"
            % (pairs_in_flight, pairs_in_flight * _ROWS_PER_PAIR[mechanism], NUM_COMPUTE_ROWS)
        )
    a = np.ascontiguousarray(rows_a, dtype=np.uint64)
    b = np.ascontiguousarray(rows_b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError("operand lists differ in shape: %r vs %r" % (a.shape, b.shape))
    k = a.shape[0] if a.ndim == 2 else 1
    out = a & b
    tally = Counter()
    if mechanism == "dra":
        tally["row_copy"] = 2 * k
        tally["dra_compute_cycle"] = k
        sa.cycle_count += k * (2 * COPY_CYCLES + 1)
    else:
        tally["tra_step"] = TRA_STEPS * k
        sa.cycle_count += k * TRA_STEPS
    return out, tally

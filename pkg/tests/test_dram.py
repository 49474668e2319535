import numpy as np
import pytest

from pisa_sim.bitplane import pack_rows, unpack_rows
from pisa_sim.dram import (
    COLS,
    COMPUTE_ROW_BASE,
    ChargeShareState,
    DramSubArray,
    PnsOrganization,
    bulk_and,
    charge_share_voltage,
)
from pisa_sim.errors import (
    AddressOutOfRange,
    CapacityExceeded,
    InvalidCount,
    RowPairInvalid,
)

X1 = COMPUTE_ROW_BASE
X2 = COMPUTE_ROW_BASE + 1
X3 = COMPUTE_ROW_BASE + 2
X4 = COMPUTE_ROW_BASE + 3


def test_charge_share_voltages_exact():
    assert charge_share_voltage(ChargeShareState(0, 2, 1.2)) == 0.0
    assert charge_share_voltage(ChargeShareState(1, 2, 1.2)) == 1.2 / 2
    assert charge_share_voltage(ChargeShareState(2, 2, 1.2)) == 1.2


def test_charge_share_rejects_bad_counts():
    with pytest.raises(InvalidCount):
        charge_share_voltage(ChargeShareState(3, 2, 1.2))
    with pytest.raises(InvalidCount):
        charge_share_voltage(ChargeShareState(-1, 2, 1.2))


def test_dra_truth_table_constant_rows():
    for a, b in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        sa = DramSubArray()
        sa.write_row(X1, np.full(COLS, a, dtype=np.uint8))
        sa.write_row(X2, np.full(COLS, b, dtype=np.uint8))
        nand = sa.dra_nand(X1, X2, X3, and_dest=X4)
        expect = 0 if (a and b) else 1
        assert np.all(nand == expect)
        assert np.all(sa.cells[X4] == (1 - expect))


def test_dra_random_rows_match_scalar_oracle():
    rng = np.random.default_rng(0)
    sa = DramSubArray()
    a = rng.integers(0, 2, COLS, dtype=np.uint8)
    b = rng.integers(0, 2, COLS, dtype=np.uint8)
    sa.write_row(X1, a)
    sa.write_row(X2, b)
    nand = sa.dra_nand(X1, X2, X3)
    for c in range(COLS):
        assert nand[c] == (0 if (a[c] and b[c]) else 1)


def test_dra_threshold_invariant_under_vdd_rescale():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, COLS, dtype=np.uint8)
    b = rng.integers(0, 2, COLS, dtype=np.uint8)
    outs = []
    for v_dd in (0.77, 1.2, 3.3):
        sa = DramSubArray(v_dd=v_dd)
        sa.write_row(X1, a)
        sa.write_row(X2, b)
        outs.append(sa.dra_nand(X1, X2, X3))
    assert np.array_equal(outs[0], outs[1])
    assert np.array_equal(outs[1], outs[2])


def test_dra_requires_distinct_compute_rows():
    sa = DramSubArray()
    with pytest.raises(RowPairInvalid):
        sa.dra_nand(10, X1, X3)
    with pytest.raises(RowPairInvalid):
        sa.dra_nand(X1, X1, X3)


def test_row_copy_semantics_and_cycles():
    sa = DramSubArray()
    rng = np.random.default_rng(2)
    pat = rng.integers(0, 2, COLS, dtype=np.uint8)
    sa.write_row(7, pat)
    before = sa.cycle_count
    sa.row_copy(7, X1)
    assert sa.cycle_count - before == 2
    assert np.array_equal(sa.cells[X1], pat)
    assert np.array_equal(sa.cells[7], pat)  # source intact
    # chained copies preserve content
    sa.row_copy(X1, X2)
    sa.row_copy(X2, 499)
    assert np.array_equal(sa.cells[499], pat)


def test_row_addressing_errors():
    sa = DramSubArray()
    with pytest.raises(AddressOutOfRange):
        sa.row_copy(0, 512)
    with pytest.raises(AddressOutOfRange):
        sa.read_row(-1)
    with pytest.raises(AddressOutOfRange):
        sa.write_row(512, np.zeros(COLS))


def test_read_row_restores_content():
    sa = DramSubArray()
    pat = np.arange(COLS, dtype=np.uint8) & 1
    sa.write_row(3, pat)
    assert np.array_equal(sa.read_row(3), pat)
    assert np.array_equal(sa.read_row(3), pat)


def test_tra_majority_truth_table():
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                sa = DramSubArray()
                sa.write_row(X1, np.full(COLS, a, np.uint8))
                sa.write_row(X2, np.full(COLS, b, np.uint8))
                sa.write_row(X3, np.full(COLS, c, np.uint8))
                maj = sa.tra_majority(X1, X2, X3, X4)
                assert np.all(maj == (1 if a + b + c >= 2 else 0))


def test_tra_control_row_selects_and_or():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, COLS, dtype=np.uint8)
    b = rng.integers(0, 2, COLS, dtype=np.uint8)
    sa = DramSubArray()
    sa.write_row(X1, a)
    sa.write_row(X2, b)
    sa.write_row(X3, np.zeros(COLS, np.uint8))  # control 0 -> AND
    assert np.array_equal(sa.tra_majority(X1, X2, X3, X4), a & b)
    sa.write_row(X3, np.ones(COLS, np.uint8))  # control 1 -> OR
    assert np.array_equal(sa.tra_majority(X1, X2, X3, X4), a | b)


def test_tra_and_equals_dra_and():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.integers(0, 2, COLS, dtype=np.uint8)
        b = rng.integers(0, 2, COLS, dtype=np.uint8)
        sa = DramSubArray()
        sa.write_row(X1, a)
        sa.write_row(X2, b)
        sa.write_row(X3, np.zeros(COLS, np.uint8))
        tra_and = sa.tra_majority(X1, X2, X3, X4)
        sa.dra_nand(X1, X2, X3, and_dest=X4)
        assert np.array_equal(tra_and, sa.cells[X4])


def test_tra_charges_four_steps():
    sa = DramSubArray()
    sa.write_row(X1, np.zeros(COLS))
    sa.write_row(X2, np.zeros(COLS))
    sa.write_row(X3, np.zeros(COLS))
    before = sa.cycle_count
    sa.tra_majority(X1, X2, X3, X4)
    assert sa.cycle_count - before == 4


def test_compute_ops_leave_data_rows_alone():
    rng = np.random.default_rng(5)
    sa = DramSubArray()
    data = rng.integers(0, 2, (500, COLS), dtype=np.uint8)
    sa.cells[:500] = data
    sa.write_row(X1, data[0])
    sa.write_row(X2, data[1])
    sa.dra_nand(X1, X2, X3)
    sa.write_row(X3, np.zeros(COLS))
    sa.tra_majority(X1, X2, X3, X4)
    assert np.array_equal(sa.cells[:500], data)


def test_bulk_and_single_pair_tallies():
    sa = DramSubArray()
    a = pack_rows(np.ones((1, COLS), dtype=np.uint8))
    b = pack_rows(np.ones((1, COLS), dtype=np.uint8))
    _, tally = bulk_and(sa, a, b, "dra")
    assert tally["row_copy"] == 2 and tally["dra_compute_cycle"] == 1
    assert sum(tally.values()) == 3  # 2 copies + 1 DRA
    _, tally = bulk_and(sa, a, b, "tra")
    assert tally == {"tra_step": 4}


def test_bulk_and_batch_additivity_and_values():
    rng = np.random.default_rng(6)
    k = 37
    abits = rng.integers(0, 2, (k, COLS), dtype=np.uint8)
    bbits = rng.integers(0, 2, (k, COLS), dtype=np.uint8)
    sa = DramSubArray()
    out, tally = bulk_and(sa, pack_rows(abits), pack_rows(bbits), "dra")
    assert tally["row_copy"] == 2 * k and tally["dra_compute_cycle"] == k
    assert np.array_equal(unpack_rows(out, COLS), abits & bbits)


def test_bulk_and_matches_row_level_schedule():
    rng = np.random.default_rng(7)
    abits = rng.integers(0, 2, (8, COLS), dtype=np.uint8)
    bbits = rng.integers(0, 2, (8, COLS), dtype=np.uint8)
    sa = DramSubArray()
    out, _ = bulk_and(sa, pack_rows(abits), pack_rows(bbits), "dra")
    out = unpack_rows(out, COLS)
    for i in range(8):
        sa2 = DramSubArray()
        sa2.write_row(0, abits[i])
        sa2.write_row(1, bbits[i])
        sa2.row_copy(0, X1)
        sa2.row_copy(1, X2)
        sa2.dra_nand(X1, X2, X3, and_dest=X4)
        assert np.array_equal(sa2.cells[X4], out[i])


def test_bulk_and_capacity_limit():
    sa = DramSubArray()
    a = pack_rows(np.zeros((1, COLS), dtype=np.uint8))
    with pytest.raises(CapacityExceeded):
        bulk_and(sa, a, a, "dra", pairs_in_flight=5)
    with pytest.raises(CapacityExceeded):
        bulk_and(sa, a, a, "tra", pairs_in_flight=4)
    # the largest legal schedules
    bulk_and(sa, a, a, "dra", pairs_in_flight=4)
    bulk_and(sa, a, a, "tra", pairs_in_flight=3)


def test_organization_defaults():
    org = PnsOrganization()
    assert org.rows_per_subarray == 1024 and org.cols == 256
    assert org.parallel_subarrays == 8 * 4 * 16 * 16
    with pytest.raises(ValueError):
        PnsOrganization(rows_per_subarray=0)

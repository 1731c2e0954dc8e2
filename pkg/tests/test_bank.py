import numpy as np
import pytest

from src.bank import BankState, bits_to_word, word_to_bits
from src.config import FillPattern
from src.errors import UsageError


def test_word_bit_j_is_column_j():
    bank = BankState.blank(rows=8)
    bank.write_row(2, 3, 0x8000000000000005)
    assert bank.bits[2, 3, 0] and not bank.bits[2, 3, 1] and bank.bits[2, 3, 2]
    assert bank.bits[2, 3, 63]
    assert bank.read_word(2, 3) == 0x8000000000000005
    assert bits_to_word(bank.bits[2, 3]) == 0x8000000000000005
    assert bank.active_array == 2


def test_fill_patterns():
    assert BankState.filled(FillPattern.ONES, rows=4).bits.all()
    assert not BankState.filled(FillPattern.ZEROS, rows=4).bits.any()
    board = BankState.filled(FillPattern.CHECKERBOARD, rows=4)
    assert board.read_word(0, 0) == int("aa" * 8, 16)
    assert board.read_word(3, 1) == int("55" * 8, 16)


def test_random_fill_is_seeded():
    first = BankState.filled(FillPattern.RANDOM, rows=64, r01=0.25, seed=5)
    again = BankState.filled(FillPattern.RANDOM, rows=64, r01=0.25, seed=5)
    np.testing.assert_array_equal(first.bits, again.bits)
    zeros = 1.0 - first.bits.mean()
    assert zeros == pytest.approx(0.25, abs=0.03)


def test_test_mode_bank_matches_pattern():
    bank = BankState.test_mode(rows=16, r01=0.5)
    assert bank.bits.shape == (4, 16, 64)
    assert (bank.bits.sum(axis=1) == 8).all()


def test_worst_case_write():
    bank = BankState.blank(rows=8)
    bank.write_worst_case(1, 4, True)
    assert bank.bits[1, 4].all()
    assert bank.bits[1].sum() == 64
    assert not bank.bits[0].any()
    bank.write_worst_case(1, 4, False)
    assert not bank.bits[1, 4].any()
    assert bank.bits[1].sum() == 8 * 64 - 64
    assert bank.active_array == 1


def test_word_bits_round_trip_and_width():
    assert bits_to_word(word_to_bits(0x8000000000000001)) == 0x8000000000000001
    with pytest.raises(UsageError):
        word_to_bits(1 << 64)


def test_out_of_range_access():
    bank = BankState.blank(rows=8)
    with pytest.raises(UsageError):
        bank.activate(4)
    with pytest.raises(UsageError):
        bank.read_word(0, 8)
    with pytest.raises(UsageError):
        bank.write_row(0, 0, 1 << 64)

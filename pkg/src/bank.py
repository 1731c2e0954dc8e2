"""
Stored data of a bank: 4 arrays of rows x 64 columns. Writes here are a
setup-time facility; the simulator models no write transactions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.column import DataPattern
from src.config import ARRAY_COLUMNS, BANK_ARRAYS, DEFAULT_DEPTH, FillPattern
from src.errors import UsageError
from src.variation import trial_generator

FILL_STREAM = 7


@dataclass
class BankState:
    """
    bits[array, row, column], True = '1'. Word bit j maps to column j
    (bit 0 is the least significant hex digit's low bit).
    """
    bits: np.ndarray
    active_array: int = 0

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 3:
            raise UsageError("bank bits must be shaped (arrays, rows, columns)")
        self.activate(self.active_array)

    @property
    def arrays(self) -> int:
        return self.bits.shape[0]

    @property
    def rows(self) -> int:
        return self.bits.shape[1]

    @property
    def columns(self) -> int:
        return self.bits.shape[2]

    @classmethod
    def blank(cls, rows: int = DEFAULT_DEPTH, value: bool = False, arrays: int = BANK_ARRAYS,
              columns: int = ARRAY_COLUMNS) -> "BankState":
        return cls(np.full((arrays, rows, columns), bool(value)))

    @classmethod
    def test_mode(cls, rows: int = DEFAULT_DEPTH, r01: float = 1.0, arrays: int = BANK_ARRAYS,
                  columns: int = ARRAY_COLUMNS) -> "BankState":
        """Every column holds the test pattern with round(r01*rows) zeros."""
        column = np.asarray(DataPattern.test_mode(rows, r01).bits)
        return cls(np.broadcast_to(column[None, :, None], (arrays, rows, columns)).copy())

    @classmethod
    def filled(cls, fill: FillPattern, rows: int = DEFAULT_DEPTH, r01: float = 0.5, seed: int = 0,
               arrays: int = BANK_ARRAYS, columns: int = ARRAY_COLUMNS) -> "BankState":
        shape = (arrays, rows, columns)
        if fill == FillPattern.ZEROS:
            bits = np.zeros(shape, dtype=bool)
        elif fill == FillPattern.ONES:
            bits = np.ones(shape, dtype=bool)
        elif fill == FillPattern.CHECKERBOARD:
            row_index = np.arange(rows)[:, None]
            col_index = np.arange(columns)[None, :]
            bits = np.broadcast_to(((row_index + col_index) % 2 == 1)[None], shape).copy()
        else:
            # '0' with probability r01
            draws = trial_generator(seed, 0, FILL_STREAM).random(shape)
            bits = draws >= r01
        return cls(bits)

    def activate(self, array: int):
        """Select the single array an access drives."""
        if not 0 <= array < self.arrays:
            raise UsageError(f"array {array} out of range [0, {self.arrays})")
        self.active_array = array

    def _check_row(self, row: int):
        if not 0 <= row < self.rows:
            raise UsageError(f"row {row} out of range [0, {self.rows})")

    def write_row(self, array: int, row: int, word: int):
        self.activate(array)
        self._check_row(row)
        self.bits[array, row] = word_to_bits(word, self.columns)

    def read_word(self, array: int, row: int) -> int:
        self._check_row(row)
        return bits_to_word(self.bits[array, row])

    def write_worst_case(self, array: int, row: int, value: bool):
        """
        Worst case for reading ``value`` at (array, row): every idle cell of
        the array holds the opposite bit.
        """
        self.activate(array)
        self._check_row(row)
        self.bits[array] = not value
        self.bits[array, row] = bool(value)


def bits_to_word(bits: np.ndarray) -> int:
    return sum(1 << j for j, bit in enumerate(np.asarray(bits, dtype=bool)) if bit)


def word_to_bits(word: int, columns: int = ARRAY_COLUMNS) -> np.ndarray:
    if not 0 <= word < 2 ** columns:
        raise UsageError(f"word {word:#x} does not fit {columns} columns")
    return np.array([(word >> j) & 1 == 1 for j in range(columns)])

"""
Transaction-level read simulation.

A read asserts one RWL, lets every RBL of the active array discharge for
T_RBL = c_r*T_SA and samples each column's SOSA once. Timing comes from the
calibrated lookup row; the read path never measures leakage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.bank import BankState, bits_to_word, word_to_bits
from src.calibration import LookupRow
from src.column import ColumnConfig, column_coefficients, crossing_bounds, discharge
from src.config import ARRAY_COLUMNS, BANK_ARRAYS, RWL_RATIO, VariationModel
from src.errors import CalibrationError, UsageError
from src.peripherals import sosa_read, wordline_delay
from src.utils import write_csv
from src.variation import chip_vth, map_trials, sa_offsets

__all__ = [
    "BankState", "ReadDelay", "ReadResult", "SequenceReport", "TraceEntry", "WorstCaseReport",
    "check_worst_case", "default_trace", "delay_decomposition", "load_trace", "prepare_bank",
    "read_delay", "simulate_read", "simulate_sequence", "write_read_log", "write_report",
]

# Heun crossings may sit slightly off the exact ones; columns this close to the
# sampling instant are always integrated.
STEP_GUARD = 1.05


@dataclass(frozen=True)
class ReadDelay:
    t_rwl: float
    t_rbl: float
    t_sa: float

    @property
    def total(self) -> float:
        return self.t_rwl + self.t_rbl + self.t_sa


@dataclass(frozen=True)
class ReadResult:
    word: int
    expected: int
    correct: np.ndarray
    delay: ReadDelay
    array: int
    row: int
    trial: int = 0

    @property
    def bit_errors(self) -> int:
        return int(np.count_nonzero(~self.correct))


@dataclass(frozen=True)
class TraceEntry:
    array: int
    row: int
    expected: int


def check_row(calib: LookupRow, cfg: ColumnConfig):
    """Refuse to read with an invalid row or one calibrated for another supply."""
    if calib.vdd_mv != int(round(cfg.vdd * 1000)):
        raise CalibrationError(f"lookup row is for {calib.vdd_mv} mV, column runs at {cfg.vdd} V")
    if not calib.valid:
        raise CalibrationError(f"vdd = {cfg.vdd} V is below V_DDMIN: no valid c_r")


def read_delay(calib: LookupRow, rwl_ratio: float = RWL_RATIO, c_r: Optional[int] = None) -> ReadDelay:
    """D = T_RWL + c_r*T_SA + T_SA."""
    c_r = calib.c_r if c_r is None else c_r
    return ReadDelay(t_rwl=wordline_delay(rwl_ratio, calib.t_ck), t_rbl=c_r * calib.t_sa, t_sa=calib.t_sa)


def sense_columns(cfg: ColumnConfig, a: np.ndarray, b: np.ndarray, offsets: np.ndarray,
                  calib: LookupRow, c_r: int) -> np.ndarray:
    """
    SOSA outputs after c_r SA periods, on the step grid test mode used.

    A column whose crossing bounds put it clearly before or after the
    sampling instant is decided from them; only the rest are integrated.
    """
    a, b, offsets = (np.ravel(np.asarray(x, dtype=float)) for x in np.broadcast_arrays(a, b, offsets))
    t_sample = c_r * calib.t_sa
    fast, slow = crossing_bounds(cfg.params, cfg.env, cfg.c_rbl, a, b, cfg.v_ref - offsets)
    read = fast > STEP_GUARD * t_sample
    near = ~read & ~(slow * STEP_GUARD < t_sample)
    if np.any(near):
        dt = calib.t_sa / calib.substeps
        v = discharge(cfg.params, cfg.env, cfg.c_rbl, a[near], b[near], dt, c_r * calib.substeps)
        read[near] = sosa_read(v, cfg.v_ref, offsets[near])
    return read


def _chip_state(bank: BankState, cfg: ColumnConfig, model: VariationModel, trial: int):
    vth = chip_vth(model, trial, cfg.params.vth_nominal, bank.rows, bank.arrays, bank.columns)
    return vth, sa_offsets(model, trial, bank.arrays, bank.columns)


def _read(bank: BankState, array: int, row: int, calib: LookupRow, cfg: ColumnConfig, vth: np.ndarray,
          offsets: np.ndarray, delay: ReadDelay, trial: int, expected: Optional[int] = None) -> ReadResult:
    bank.activate(array)
    if not 0 <= row < bank.rows:
        raise UsageError(f"row {row} out of range [0, {bank.rows})")
    reference = bank.bits[array, row] if expected is None else word_to_bits(expected, bank.columns)
    a, b = column_coefficients(cfg.params, cfg.env, bank.bits[array], vth[array], accessed_row=row)
    word_bits = sense_columns(cfg, a, b, offsets[array], calib, calib.c_r)
    return ReadResult(word=bits_to_word(word_bits), expected=bits_to_word(reference),
                      correct=word_bits == reference, delay=delay, array=array, row=row, trial=trial)


def simulate_read(bank: BankState, row: int, calib: LookupRow, cfg: ColumnConfig, model: VariationModel,
                  rwl_ratio: float = RWL_RATIO, trial: int = 0, array: Optional[int] = None) -> ReadResult:
    """
    Read one word of the active array (or ``array``) on chip ``trial``.

    Every column integrates its own trajectory (accessed cell plus idle
    leakage, per-cell sampled V_th) and is sampled at c_r*t_sa after RWL
    assertion; the read bit is compared with the stored bit. The bank's
    active array is left as it was.
    """
    check_row(calib, cfg)
    if bank.rows != cfg.depth:
        raise UsageError(f"bank has {bank.rows} rows, column depth is {cfg.depth}")
    vth, offsets = _chip_state(bank, cfg, model, trial)
    previous = bank.active_array
    try:
        return _read(bank, previous if array is None else array, row, calib, cfg, vth, offsets,
                     read_delay(calib, rwl_ratio), trial)
    finally:
        bank.activate(previous)


@dataclass
class SequenceReport:
    results: List[ReadResult] = field(default_factory=list)

    @property
    def reads(self) -> int:
        return len(self.results)

    @property
    def bit_errors(self) -> int:
        return sum(r.bit_errors for r in self.results)

    @property
    def word_errors(self) -> int:
        return sum(1 for r in self.results if r.bit_errors)

    @property
    def mean_delay(self) -> float:
        return float(np.mean([r.delay.total for r in self.results])) if self.results else 0.0

    @property
    def max_delay(self) -> float:
        return max((r.delay.total for r in self.results), default=0.0)


def simulate_sequence(bank: BankState, trace: Sequence[TraceEntry], calib: LookupRow, cfg: ColumnConfig,
                      model: VariationModel, rwl_ratio: float = RWL_RATIO, chips: int = 1,
                      workers: int = 1, progress: bool = False) -> SequenceReport:
    """
    Replay ``trace`` on ``chips`` chip realizations (trials 0..chips-1).

    Each sensed word is checked against the trace's expected word, so an
    entry that disagrees with the stored data counts as an error. Randomness
    is keyed by (seed, chip, cell), so a read's outcome does not depend on its
    position in the trace or on the worker count.
    """
    for entry in trace:
        if not 0 <= entry.array < bank.arrays or not 0 <= entry.row < bank.rows:
            raise UsageError(f"trace access ({entry.array}, {entry.row}) out of range")
        if not 0 <= entry.expected < 2 ** bank.columns:
            raise UsageError(f"trace word {entry.expected:#x} does not fit {bank.columns} columns")
    if not trace:
        return SequenceReport()
    check_row(calib, cfg)
    delay = read_delay(calib, rwl_ratio)

    def one_chip(trial: int) -> List[ReadResult]:
        chip = BankState(bank.bits.copy())
        vth, offsets = _chip_state(chip, cfg, model, trial)
        return [_read(chip, e.array, e.row, calib, cfg, vth, offsets, delay, trial, e.expected) for e in trace]

    per_chip = map_trials(one_chip, range(chips), workers, desc="Read" if progress else None)
    return SequenceReport([result for results in per_chip for result in results])


def delay_decomposition(results: Sequence[ReadResult]) -> Dict[str, float]:
    """Fractional shares of T_RWL / T_RBL / T_SA in the summed read delay."""
    if not results:
        raise UsageError("delay_decomposition needs at least one read")
    rwl = sum(r.delay.t_rwl for r in results)
    rbl = sum(r.delay.t_rbl for r in results)
    sa = sum(r.delay.t_sa for r in results)
    total = rwl + rbl + sa
    return {"t_rwl": rwl / total, "t_rbl": rbl / total, "t_sa": sa / total}


@dataclass(frozen=True)
class WorstCaseReport:
    vdd: float
    c_r: int
    trials: int
    reads: int
    read1_errors: int
    read0_errors: int

    @property
    def bit_errors(self) -> int:
        return self.read1_errors + self.read0_errors


def check_worst_case(cfg: ColumnConfig, calib: LookupRow, model: VariationModel, c_r: Optional[int] = None,
                     arrays: int = BANK_ARRAYS, columns: int = ARRAY_COLUMNS, row: int = 0,
                     workers: int = 1) -> WorstCaseReport:
    """
    Read both worst-case patterns on every column of every array of every
    trial: '1' under all-idle-'0' and '0' under all-idle-'1'.

    ``c_r`` overrides the calibrated count (used to show that c_r >= c_l
    breaks '1' reads); the row must still be valid for cfg's supply.
    """
    check_row(calib, cfg)
    c_r = calib.c_r if c_r is None else c_r
    if c_r < 1:
        raise UsageError(f"c_r must be >= 1, got {c_r}")
    vth0 = cfg.params.vth_nominal
    errors = {}
    for value in (True, False):
        bank = BankState.blank(cfg.depth, not value, arrays, columns)
        for array in range(arrays):
            bank.write_worst_case(array, row, value)

        def sums(trial: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
            vth = chip_vth(model, trial, vth0, bank.rows, bank.arrays, bank.columns)
            a, b = column_coefficients(cfg.params, cfg.env, bank.bits, vth, accessed_row=row)
            return a, b, sa_offsets(model, trial, bank.arrays, bank.columns)

        parts = map_trials(sums, range(model.trials), workers)
        a = np.concatenate([p[0].ravel() for p in parts])
        b = np.concatenate([p[1].ravel() for p in parts])
        offsets = np.concatenate([p[2].ravel() for p in parts])
        read = sense_columns(cfg, a, b, offsets, calib, c_r)
        errors[value] = int(np.count_nonzero(read != value))
    return WorstCaseReport(vdd=cfg.vdd, c_r=c_r, trials=model.trials, reads=model.trials * arrays * columns,
                           read1_errors=errors[True], read0_errors=errors[False])


# =============================================================================
# Trace and report files
# =============================================================================

def load_trace(path: Path) -> List[TraceEntry]:
    """Parse ``R <array> <row> <expected-hex-word>`` lines; '#' starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read trace {path}: {e.strerror}") from e
    return parse_trace(text)


def parse_trace(text: str) -> List[TraceEntry]:
    entries = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4 or tokens[0].upper() != "R":
            raise UsageError(f"trace line {number}: expected 'R <array> <row> <hex-word>'")
        try:
            entries.append(TraceEntry(array=int(tokens[1], 10), row=int(tokens[2], 10),
                                      expected=int(tokens[3], 16)))
        except ValueError:
            raise UsageError(f"trace line {number}: cannot parse '{line}'") from None
        if entries[-1].array < 0 or entries[-1].row < 0:
            raise UsageError(f"trace line {number}: negative index")
    return entries


def prepare_bank(bank: BankState, trace: Sequence[TraceEntry]):
    """Write each traced word at setup time so stored data matches the expected words."""
    written: Dict[Tuple[int, int], int] = {}
    for entry in trace:
        key = (entry.array, entry.row)
        if written.get(key, entry.expected) != entry.expected:
            raise UsageError(f"trace expects two different words at array {entry.array}, row {entry.row}")
        written[key] = entry.expected
        bank.write_row(entry.array, entry.row, entry.expected)
    bank.activate(0)


def default_trace(bank: BankState) -> List[TraceEntry]:
    """One read per row, arrays taken in turn, expecting the stored words."""
    return [TraceEntry(array=row % bank.arrays, row=row, expected=bank.read_word(row % bank.arrays, row))
            for row in range(bank.rows)]


def write_report(report: SequenceReport, path: Path, header: Dict[str, str]) -> Path:
    """Tab-separated key/value summary: provenance header, counts, delays and shares."""
    values: List[Tuple[str, str]] = list(header.items())
    values += [("reads", str(report.reads)), ("bit_errors", str(report.bit_errors)),
               ("word_errors", str(report.word_errors))]
    if report.results:
        delay = report.results[0].delay
        shares = delay_decomposition(report.results)
        values += [
            ("t_rwl_s", f"{delay.t_rwl:.9e}"),
            ("t_rbl_s", f"{delay.t_rbl:.9e}"),
            ("t_sa_s", f"{delay.t_sa:.9e}"),
            ("mean_delay_s", f"{report.mean_delay:.9e}"),
            ("max_delay_s", f"{report.max_delay:.9e}"),
            ("share_rwl", f"{shares['t_rwl']:.9f}"),
            ("share_rbl", f"{shares['t_rbl']:.9f}"),
            ("share_sa", f"{shares['t_sa']:.9f}"),
        ]
    frame = pd.DataFrame(values, columns=["key", "value"])
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return Path(path)


def write_read_log(report: SequenceReport, path: Path) -> Path:
    """Per-read CSV: chip, trace index, address, expected/read words, errors, delay."""
    reads_per_chip = max(1, report.reads // max(1, len({r.trial for r in report.results})))
    frame = pd.DataFrame([{
        "chip": r.trial,
        "index": i % reads_per_chip,
        "array": r.array,
        "row": r.row,
        "expected": f"{r.expected:016x}",
        "read": f"{r.word:016x}",
        "bit_errors": r.bit_errors,
        "total_delay_s": r.delay.total,
    } for i, r in enumerate(report.results)],
        columns=["chip", "index", "array", "row", "expected", "read", "bit_errors", "total_delay_s"])
    return write_csv(frame, path)

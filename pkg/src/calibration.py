"""
Test-mode calibration.

With every RWL deasserted and RBLs precharged, the SAs are clocked every
T_SA until some column's read word flips from the precharge value. The
sample index of the first flip, c_L, digitizes min(T_leak) = c_L*T_SA.
c_R is then the smallest count whose sensing time covers the (margined)
worst '0' read while staying below c_L*T_SA. Scanning V_DD yields the
lookup table and V_DDMIN.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.bank import BankState
from src.column import (
    ColumnConfig, DataPattern, SensingWindow, column_coefficients, crossing_estimate, discharge,
    sensing_window, t_leak,
)
from src.config import COUNTER_MAX, CR_MARGIN, CalibrationSettings, VariationModel
from src.errors import CalibrationError, ConfigError, UsageError
from src.peripherals import ClockTiming, sosa_read
from src.variation import chip_vth, map_trials, sa_offsets

# Integrator steps per SA period: at least MIN_SUBSTEPS, and fine enough that
# the nominal test-mode crossing spans LEAK_STEPS steps.
MIN_SUBSTEPS = 16
LEAK_STEPS = 100

# Columns integrated exactly: all within CANDIDATE_SLACK of the earliest
# closed-form flip estimate, and never fewer than MIN_CANDIDATES.
CANDIDATE_SLACK = 1.25
MIN_CANDIDATES = 256

TABLE_COLUMNS = ["vdd_mV", "c_l", "c_r", "beta_ppm", "saturated", "t_ck_s", "t_sa_s", "t_test_s", "substeps"]


@dataclass(frozen=True)
class LeakageCount:
    c_l: int
    saturated: bool
    counter_max: int = COUNTER_MAX

    def __post_init__(self):
        if not 1 <= self.c_l <= self.counter_max:
            raise UsageError(f"c_l {self.c_l} outside [1, {self.counter_max}]")
        if self.saturated != (self.c_l == self.counter_max):
            raise UsageError("saturated must hold exactly when c_l == counter_max")


@dataclass(frozen=True)
class LookupRow:
    vdd: float
    c_l: int
    c_r: Optional[int]
    beta: float
    saturated: bool
    t_ck: float
    t_sa: float
    substeps: int
    window: Optional[SensingWindow] = field(default=None, compare=False)

    @property
    def valid(self) -> bool:
        return self.c_r is not None

    @property
    def vdd_mv(self) -> int:
        return int(round(self.vdd * 1000))

    @property
    def t_test(self) -> float:
        """Test-mode duration c_l * t_sa."""
        return self.c_l * self.t_sa

    @property
    def beta_counts(self) -> Optional[float]:
        return None if self.c_r is None else self.c_r / self.c_l


@dataclass
class LookupTable:
    rows: List[LookupRow]
    config_hash: str = ""
    seed: int = 0
    counter_max: int = COUNTER_MAX

    @property
    def vdd_min(self) -> Optional[float]:
        """V_DDMIN: lowest supply with a valid (c_l, c_r) pair."""
        valid = [row.vdd for row in self.rows if row.valid]
        return min(valid) if valid else None

    def valid_rows(self) -> List[LookupRow]:
        return [row for row in self.rows if row.valid]

    def row_for(self, vdd: float) -> LookupRow:
        target = int(round(vdd * 1000))
        for row in self.rows:
            if row.vdd_mv == target:
                return row
        raise CalibrationError(f"no calibrated row for vdd = {vdd} V")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "vdd_mV": row.vdd_mv,
            "c_l": row.c_l,
            "c_r": -1 if row.c_r is None else row.c_r,
            "beta_ppm": int(round(row.beta * 1e6)),
            "saturated": int(row.saturated),
            "t_ck_s": row.t_ck,
            "t_sa_s": row.t_sa,
            "t_test_s": row.t_test,
            "substeps": row.substeps,
        } for row in self.rows], columns=TABLE_COLUMNS)

    def write(self, path: Path) -> Path:
        """
        Tab-separated table preceded by '#' header lines. The config hash is
        the lowercase hex SHA-256 digest in big-endian byte order. Times are
        written with full round-trip precision.
        """
        header = (
            "# sram read-window lookup table\n"
            f"# config_hash\t{self.config_hash}\tsha256-hex-big-endian\n"
            f"# seed\t{self.seed}\n"
            f"# counter_max\t{self.counter_max}\n"
        )
        body = self.to_frame().to_csv(sep="\t", index=False, lineterminator="\n")
        Path(path).write_text(header + body, encoding="utf-8")
        return Path(path)

    @classmethod
    def read(cls, path: Path) -> "LookupTable":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise CalibrationError(f"cannot read lookup table {path}: {e.strerror}") from e
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                parts = line[1:].strip().split("\t")
                if len(parts) >= 2:
                    meta[parts[0]] = parts[1]
            elif line.strip():
                body.append(line)
        if not body:
            raise CalibrationError(f"lookup table {path} has no rows")
        frame = pd.read_csv(io.StringIO("\n".join(body)), sep="\t", float_precision="round_trip")
        missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
        if missing:
            raise CalibrationError(f"lookup table {path} lacks columns {missing}")
        rows = [LookupRow(
            vdd=int(r.vdd_mV) / 1000,
            c_l=int(r.c_l),
            c_r=None if int(r.c_r) < 0 else int(r.c_r),
            beta=int(r.beta_ppm) / 1e6,
            saturated=bool(int(r.saturated)),
            t_ck=float(r.t_ck_s),
            t_sa=float(r.t_sa_s),
            substeps=int(r.substeps),
        ) for r in frame.itertuples(index=False)]
        return cls(rows=rows, config_hash=meta.get("config_hash", ""), seed=int(meta.get("seed", 0)),
                   counter_max=int(meta.get("counter_max", COUNTER_MAX)))


def sample_substeps(cfg: ColumnConfig, t_sa: float, test_r01: float = 1.0) -> int:
    """Integrator steps per T_SA shared by test mode and read mode at cfg's supply."""
    t_leak_nominal = t_leak(cfg, DataPattern.test_mode(cfg.depth, test_r01))
    if not math.isfinite(t_leak_nominal):
        return MIN_SUBSTEPS
    return max(MIN_SUBSTEPS, int(math.ceil(LEAK_STEPS * t_sa / t_leak_nominal)))


def first_flip(cfg: ColumnConfig, a: np.ndarray, b: np.ndarray, offsets: np.ndarray, t_sa: float,
               substeps: int, counter_max: int = COUNTER_MAX) -> LeakageCount:
    """
    Earliest SA sample k (1-based, on the k*t_sa grid) at which any column
    reads '0'; saturated at counter_max.
    """
    a, b, offsets = (np.ravel(x) for x in (a, b, offsets))
    estimate = crossing_estimate(cfg.params, cfg.env, cfg.c_rbl, a, b, cfg.v_ref - offsets)
    if not np.any(np.isfinite(estimate)):
        return LeakageCount(counter_max, True, counter_max)

    keep = estimate <= CANDIDATE_SLACK * float(np.min(estimate))
    keep[np.argsort(estimate, kind="stable")[:MIN_CANDIDATES]] = True
    a, b, offsets = a[keep], b[keep], offsets[keep]

    dt = t_sa / substeps
    v = None
    for k in range(1, counter_max + 1):
        v = discharge(cfg.params, cfg.env, cfg.c_rbl, a, b, dt, substeps, v0=v)
        if not np.all(sosa_read(v, cfg.v_ref, offsets)):
            return LeakageCount(k, k == counter_max, counter_max)
    return LeakageCount(counter_max, True, counter_max)


def measure_cl(bank: BankState, cfg: ColumnConfig, t_sa: float, model: VariationModel,
               counter_max: int = COUNTER_MAX, substeps: Optional[int] = None,
               workers: int = 1) -> LeakageCount:
    """
    Run test mode on ``bank`` for every chip of the population.

    Every column of every array of every trial discharges through leakage
    only; c_l is the first sample at which any SA (with its sampled offset)
    reads '0'.
    """
    if bank.rows != cfg.depth:
        raise ConfigError(f"bank has {bank.rows} rows, column depth is {cfg.depth}", "column.depth")
    if not t_sa > 0:
        raise UsageError(f"t_sa must be > 0, got {t_sa}")
    substeps = substeps or sample_substeps(cfg, t_sa)
    vth0 = cfg.params.vth_nominal

    def sums(trial: int):
        vth = chip_vth(model, trial, vth0, bank.rows, bank.arrays, bank.columns)
        a, b = column_coefficients(cfg.params, cfg.env, bank.bits, vth, accessed_row=None)
        return a, b, sa_offsets(model, trial, bank.arrays, bank.columns)

    parts = map_trials(sums, range(model.trials), workers)
    a = np.concatenate([p[0].ravel() for p in parts])
    b = np.concatenate([p[1].ravel() for p in parts])
    offsets = np.concatenate([p[2].ravel() for p in parts])
    return first_flip(cfg, a, b, offsets, t_sa, substeps, counter_max)


def select_cr(window: SensingWindow, t_sa: float, margin: float = CR_MARGIN) -> Optional[int]:
    """
    Smallest c_r with c_r*t_sa >= margin*t_r0_max and c_r*t_sa < t_leak_min;
    None when no such count exists.
    """
    if margin < 1:
        raise UsageError(f"margin must be >= 1, got {margin}")
    if not t_sa > 0:
        raise UsageError(f"t_sa must be > 0, got {t_sa}")
    if not window.valid:
        return None
    target = margin * window.t_r0_max
    c_r = max(1, int(math.ceil(target / t_sa)))
    while c_r > 1 and (c_r - 1) * t_sa >= target:
        c_r -= 1
    while c_r * t_sa < target:
        c_r += 1
    return c_r if c_r * t_sa < window.t_leak_min else None


def measured_window(window: SensingWindow, count: LeakageCount, t_sa: float) -> SensingWindow:
    """
    ``window`` with its leakage bound moved into the bracket test mode
    measured, ((c_l - 1)*t_sa, c_l*t_sa]. The closed-form t_leak_min is kept
    when it already lies inside and clipped to the nearer edge otherwise.
    """
    if not t_sa > 0:
        raise UsageError(f"t_sa must be > 0, got {t_sa}")
    t_leak_min = min(max(window.t_leak_min, (count.c_l - 1) * t_sa), count.c_l * t_sa)
    return SensingWindow(
        t_r0_max=window.t_r0_max,
        t_leak_min=t_leak_min,
        valid=t_leak_min > window.t_r0_max,
        beta_lower=window.t_r0_max / t_leak_min,
    )


def calibrate_row(cfg: ColumnConfig, timing: ClockTiming, model: VariationModel,
                  settings: CalibrationSettings, workers: int = 1) -> LookupRow:
    """
    One table row: test mode at cfg's supply, then c_r from the PVT-reduced
    read bound and the measured leakage bound. c_r*t_sa < t_leak_min <= c_l*t_sa
    keeps c_r below c_l and beta within 1/c_l of c_r/c_l.
    """
    nominal = sensing_window(cfg, settings.delta_vth(model.sigma_vth))
    substeps = sample_substeps(cfg, timing.t_sa, settings.test_r01)
    bank = BankState.test_mode(cfg.depth, settings.test_r01)
    count = measure_cl(bank, cfg, timing.t_sa, model, settings.counter_max, substeps, workers)
    window = measured_window(nominal, count, timing.t_sa)
    c_r = select_cr(window, timing.t_sa, settings.margin)
    if c_r is None:
        beta = settings.margin * window.beta_lower
    else:
        beta = c_r * timing.t_sa / window.t_leak_min
    return LookupRow(vdd=cfg.vdd, c_l=count.c_l, c_r=c_r, beta=beta, saturated=count.saturated,
                     t_ck=timing.t_ck, t_sa=timing.t_sa, substeps=substeps, window=window)


def build_lookup(vdd_list: Sequence[float], template: ColumnConfig, model: VariationModel,
                 timing_source: Callable[[float], ClockTiming], settings: CalibrationSettings,
                 workers: int = 1, progress: bool = False,
                 on_row: Optional[Callable[[LookupRow], None]] = None) -> LookupTable:
    """
    Traverse V_DD and record (c_l, c_r) per supply.

    Args:
        vdd_list: Ascending supplies
        template: Column whose v_ref/vdd ratio is kept at every supply
        model: Chip population (trials) and variation
        timing_source: vdd -> ClockTiming (digitized clock)
        settings: Counter size, margin, dvth, test pattern
        on_row: Called with each finished row

    Returns:
        LookupTable; rows below V_DDMIN are invalid
    """
    vdd_list = list(vdd_list)
    if not vdd_list:
        raise UsageError("vdd_list is empty")
    if any(a >= b for a, b in zip(vdd_list, vdd_list[1:])):
        raise UsageError("vdd_list must be strictly ascending")

    rows = []
    for vdd in tqdm(vdd_list, desc="Calibrate", leave=False, disable=not progress):
        row = calibrate_row(template.scaled_to(vdd), timing_source(vdd), model, settings, workers)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return LookupTable(rows=rows, seed=model.seed, counter_max=settings.counter_max)

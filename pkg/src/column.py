"""
Column model: aggregates per-cell currents into RBL leakage, closed-form
discharge delays, the safety sensing window, and a trapezoidal RBL
discharge integrator used as the oracle for the closed forms and as the
trajectory engine of calibration and read simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from src.config import MAX_DEPTH, DeviceParams, Environment
from src.device import (
    alpha_ratio, cell_weight, leak_one_cell, leak_zero_cell, read_boost, read_current,
    slope_voltage, thermal_voltage, voltage_factor,
)
from src.errors import AccuracyError, ConfigError, DomainError, UsageError

INFINITE_TIME = math.inf

# Default integrator resolution relative to the closed-form crossing time,
# and the coarsest step integrate_discharge accepts.
STEPS_PER_CROSSING = 400
MIN_STEPS_PER_CROSSING = 100
MAX_CROSSING_OVERRUN = 100.0


@dataclass(frozen=True)
class ColumnConfig:
    depth: int
    c_rbl: float
    v_ref: float
    env: Environment
    params: DeviceParams = field(default_factory=DeviceParams)

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"must be in [1, {MAX_DEPTH}]", "column.depth")
        if not self.c_rbl > 0:
            raise ConfigError("must be > 0", "column.c_rbl")
        if not 0 < self.v_ref < self.env.vdd:
            raise ConfigError(f"must be in (0, vdd={self.env.vdd})", "column.v_ref")

    @property
    def vdd(self) -> float:
        return self.env.vdd

    @property
    def temperature(self) -> float:
        return self.env.temperature

    @property
    def swing(self) -> float:
        return self.env.vdd - self.v_ref

    @property
    def v_eval(self) -> float:
        """Fixed RBL voltage at which the closed forms evaluate currents."""
        return 0.5 * (self.env.vdd + self.v_ref)

    def scaled_to(self, vdd: float) -> "ColumnConfig":
        """Same column at another supply; v_ref keeps its ratio to vdd."""
        return replace(self, env=self.env.with_vdd(vdd), v_ref=self.v_ref * vdd / self.env.vdd)

    def with_depth(self, depth: int) -> "ColumnConfig":
        return replace(self, depth=depth)


@dataclass(frozen=True)
class DataPattern:
    """
    Stored bits of one column (True = '1').

    With an accessed row, K + M = N - 1. ``accessed_row=None`` describes a
    test-mode column where every cell is idle (K + M = N).
    """
    bits: Tuple[bool, ...]
    accessed_row: Optional[int] = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))
        if not self.bits:
            raise UsageError("pattern must hold at least one cell")
        if self.accessed_row is not None and not 0 <= self.accessed_row < len(self.bits):
            raise UsageError(f"accessed_row {self.accessed_row} out of range for depth {len(self.bits)}")

    @property
    def depth(self) -> int:
        return len(self.bits)

    @property
    def accessed_value(self) -> Optional[bool]:
        return None if self.accessed_row is None else self.bits[self.accessed_row]

    def idle_bits(self) -> Tuple[bool, ...]:
        if self.accessed_row is None:
            return self.bits
        return self.bits[:self.accessed_row] + self.bits[self.accessed_row + 1:]

    @property
    def idle_zeros(self) -> int:
        """K"""
        return sum(1 for b in self.idle_bits() if not b)

    @property
    def idle_ones(self) -> int:
        """M"""
        return sum(1 for b in self.idle_bits() if b)

    @property
    def r01(self) -> float:
        return sum(1 for b in self.bits if not b) / self.depth

    def idle_mask(self) -> np.ndarray:
        mask = np.ones(self.depth, dtype=bool)
        if self.accessed_row is not None:
            mask[self.accessed_row] = False
        return mask

    def with_accessed_value(self, value: bool) -> "DataPattern":
        if self.accessed_row is None:
            raise UsageError("pattern has no accessed cell")
        bits = list(self.bits)
        bits[self.accessed_row] = bool(value)
        return DataPattern(tuple(bits), self.accessed_row)

    @classmethod
    def from_ratio(cls, depth: int, r01: float, accessed_row: Optional[int] = None,
                   accessed_value: bool = False) -> "DataPattern":
        """round(r01 * idle_count) idle zeros, placed in the lowest idle rows."""
        if not 0 <= r01 <= 1:
            raise UsageError(f"r01 must be in [0, 1], got {r01}")
        idle_count = depth - (0 if accessed_row is None else 1)
        zeros = int(math.floor(r01 * idle_count + 0.5))
        bits = []
        placed = 0
        for row in range(depth):
            if row == accessed_row:
                bits.append(bool(accessed_value))
            elif placed < zeros:
                bits.append(False)
                placed += 1
            else:
                bits.append(True)
        return cls(tuple(bits), accessed_row)

    @classmethod
    def test_mode(cls, depth: int, r01: float = 1.0) -> "DataPattern":
        return cls.from_ratio(depth, r01, accessed_row=None)

    @classmethod
    def worst_read0(cls, depth: int, accessed_row: int = 0) -> "DataPattern":
        """Slowest '0' read: every idle cell holds '1' (K = 0)."""
        return cls.from_ratio(depth, 0.0, accessed_row, accessed_value=False)

    @classmethod
    def worst_read1(cls, depth: int, accessed_row: int = 0) -> "DataPattern":
        """Fastest leakage under a '1' read: every idle cell holds '0'."""
        return cls.from_ratio(depth, 1.0, accessed_row, accessed_value=True)


@dataclass(frozen=True)
class SensingWindow:
    t_r0_max: float
    t_leak_min: float
    valid: bool
    beta_lower: float
    beta_upper: float = 1.0

    @property
    def ratio(self) -> float:
        """t_leak_min / t_r0_max"""
        return self.t_leak_min / self.t_r0_max


def _check_pattern(cfg: ColumnConfig, pattern: DataPattern):
    if pattern.depth != cfg.depth:
        raise ConfigError(f"pattern length {pattern.depth} != column depth {cfg.depth}", "column.depth")


def _vth_array(cfg: ColumnConfig, vth_map: Optional[Sequence[float]]) -> np.ndarray:
    if vth_map is None:
        return np.full(cfg.depth, cfg.params.vth_nominal)
    vth = np.asarray(vth_map, dtype=float)
    if vth.shape != (cfg.depth,):
        raise ConfigError(f"vth_map must hold {cfg.depth} values", "column.depth")
    return vth


def column_leakage(cfg: ColumnConfig, pattern: DataPattern, v_rbl: Optional[float] = None,
                   vth_map: Optional[Sequence[float]] = None) -> float:
    """
    Total idle-cell leakage i_l on the RBL.

    Without a vth_map this is (K + alpha*M)*i_l0; with one, the explicit sum
    over idle cells with their sampled thresholds.
    """
    _check_pattern(cfg, pattern)
    v = cfg.v_eval if v_rbl is None else v_rbl
    if vth_map is None:
        i_l0 = leak_zero_cell(cfg.params, cfg.env, v)
        return float((pattern.idle_zeros + alpha_ratio(cfg.params, cfg.env, v) * pattern.idle_ones) * i_l0)
    vth = _vth_array(cfg, vth_map)
    bits = np.asarray(pattern.bits)
    idle = pattern.idle_mask()
    zeros = leak_zero_cell(cfg.params, cfg.env, v, vth[idle & ~bits])
    ones = leak_one_cell(cfg.params, cfg.env, v, vth[idle & bits])
    return float(np.sum(zeros) + np.sum(ones))


def t_read0(cfg: ColumnConfig, pattern: DataPattern, vth_access: Optional[float] = None,
            vth_map: Optional[Sequence[float]] = None) -> float:
    """C_RBL*(vdd - v_ref)/(i_l + i_r0), currents at v_eval."""
    _check_pattern(cfg, pattern)
    if pattern.accessed_value is not False:
        raise UsageError("t_read0 needs an accessed cell storing '0'")
    if vth_access is None:
        vth_access = cfg.params.vth_nominal if vth_map is None else float(vth_map[pattern.accessed_row])
    i_l = column_leakage(cfg, pattern, vth_map=vth_map)
    i_r0 = float(read_current(cfg.params, cfg.env, cfg.v_eval, vth_access))
    return cfg.c_rbl * cfg.swing / (i_l + i_r0)


def t_leak(cfg: ColumnConfig, pattern: DataPattern, vth_map: Optional[Sequence[float]] = None) -> float:
    """C_RBL*(vdd - v_ref)/i_l; INFINITE_TIME when nothing leaks."""
    i_l = column_leakage(cfg, pattern, vth_map=vth_map)
    if i_l <= 0:
        return INFINITE_TIME
    return cfg.c_rbl * cfg.swing / i_l


def window_ratio(cfg: ColumnConfig, dvth: float = 0.0) -> float:
    """exp((vdd - dvth)/(n*vt))/N + alpha(v_eval); dvth = 0 is the variation-free ratio."""
    if dvth < 0:
        raise DomainError(f"dvth must be >= 0, got {dvth}")
    nvt = slope_voltage(cfg.params, cfg.temperature)
    return float(math.exp((cfg.vdd - dvth) / nvt) / cfg.depth + alpha_ratio(cfg.params, cfg.env, cfg.v_eval))


def sensing_window(cfg: ColumnConfig, dvth: float = 0.0) -> SensingWindow:
    """
    Safety sensing window (max T_r0, min T_leak).

    max T_r0: K = 0 with the accessed threshold raised by dvth.
    min T_leak: test-mode column, all N cells idle '0'.
    """
    if dvth < 0:
        raise DomainError(f"dvth must be >= 0, got {dvth}")
    t_r0_max = t_read0(cfg, DataPattern.worst_read0(cfg.depth), vth_access=cfg.params.vth_nominal + dvth)
    t_leak_min = t_leak(cfg, DataPattern.test_mode(cfg.depth))
    beta_lower = t_r0_max / t_leak_min
    return SensingWindow(
        t_r0_max=t_r0_max,
        t_leak_min=t_leak_min,
        valid=t_leak_min > t_r0_max,
        beta_lower=beta_lower,
    )


# =============================================================================
# Batched trapezoidal integrator
# =============================================================================

def column_coefficients(params: DeviceParams, env: Environment, bits: np.ndarray,
                        vth: np.ndarray, accessed_row: Optional[int] = None,
                        r1_leak: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reduce cells to per-column coefficients (a, b) so that the RBL current is
    voltage_factor(V)*(a + alpha(V)*b).

    ``bits`` and ``vth`` are shaped (..., rows, columns). Idle '0' cells and an
    accessed '1' cell contribute their weight to a, an accessed '0' cell its
    weight times exp(vdd/(n*vt)), idle '1' cells their weight to b.
    With r1_leak=False an accessed '1' cell carries no current (i_r1 = 0).
    """
    bits = np.asarray(bits, dtype=bool)
    weight = cell_weight(params, np.asarray(vth, dtype=float), env.temperature)
    coef_a = (~bits).astype(float)
    coef_b = bits.astype(float)
    if accessed_row is not None:
        accessed = bits[..., accessed_row, :]
        coef_a[..., accessed_row, :] = np.where(accessed, 1.0 if r1_leak else 0.0, read_boost(params, env))
        coef_b[..., accessed_row, :] = 0.0
    return np.sum(weight * coef_a, axis=-2), np.sum(weight * coef_b, axis=-2)


def column_current(params: DeviceParams, env: Environment, a: np.ndarray, b: np.ndarray,
                   v: np.ndarray) -> np.ndarray:
    return voltage_factor(params, env.temperature, v) * (a + alpha_ratio(params, env, v) * b)


def heun_step(params: DeviceParams, env: Environment, c_rbl: float, a: np.ndarray, b: np.ndarray,
              v: np.ndarray, dt: float) -> np.ndarray:
    """One explicit trapezoidal step of C*dV/dt = -I(V), clamped at 0 V."""
    k1 = column_current(params, env, a, b, v)
    v_pred = np.maximum(v - dt * k1 / c_rbl, 0.0)
    k2 = column_current(params, env, a, b, v_pred)
    return np.maximum(v - 0.5 * dt * (k1 + k2) / c_rbl, 0.0)


def discharge(params: DeviceParams, env: Environment, c_rbl: float, a: np.ndarray, b: np.ndarray,
              dt: float, steps: int, v0: Optional[np.ndarray] = None) -> np.ndarray:
    """RBL voltages after ``steps`` steps from v0 (default: precharged to vdd)."""
    v = np.full(np.shape(a), env.vdd) if v0 is None else np.array(v0, dtype=float)
    for _ in range(steps):
        v = heun_step(params, env, c_rbl, a, b, v, dt)
    return v


def crossing_estimate(params: DeviceParams, env: Environment, c_rbl: float, a, b, threshold) -> np.ndarray:
    """Constant-current crossing time from vdd to ``threshold``, currents at the midpoint."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    threshold = np.broadcast_to(np.asarray(threshold, dtype=float), a.shape)
    v_mid = np.clip(0.5 * (env.vdd + threshold), 0.0, env.vdd)
    current = column_current(params, env, a, b, v_mid)
    swing = env.vdd - threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(current > 0, c_rbl * swing / current, INFINITE_TIME)
    t = np.where(swing <= 0, 0.0, t)
    return np.where(threshold <= 0, INFINITE_TIME, t)


def monotone_floor(params: DeviceParams, temperature: float) -> float:
    """Lowest RBL voltage above which g(V) rises and alpha(V)*g(V) falls with V."""
    vt = thermal_voltage(temperature)
    return vt * math.log1p(2 * params.n / (1 - params.lam))


def crossing_bounds(params: DeviceParams, env: Environment, c_rbl: float, a, b,
                    threshold) -> Tuple[np.ndarray, np.ndarray]:
    """
    Earliest and latest possible crossing times from vdd to ``threshold``.

    Above monotone_floor the a-term current rises with V and the b-term
    current falls, so pairing their endpoint values brackets the current over
    the whole swing. A threshold below the floor (but above 0 V) is left
    undecided as (0, inf).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    threshold = np.broadcast_to(np.asarray(threshold, dtype=float), a.shape)
    floor = monotone_floor(params, env.temperature)
    top = np.full(a.shape, env.vdd)
    low = np.clip(threshold, floor, env.vdd)
    zero = np.zeros(a.shape)
    a_top, a_low = column_current(params, env, a, zero, top), column_current(params, env, a, zero, low)
    b_top, b_low = column_current(params, env, zero, b, top), column_current(params, env, zero, b, low)
    swing = env.vdd - threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        fast = np.where(a_top + b_low > 0, c_rbl * swing / (a_top + b_low), INFINITE_TIME)
        slow = np.where(a_low + b_top > 0, c_rbl * swing / (a_low + b_top), INFINITE_TIME)
    fast = np.where(threshold < floor, 0.0, fast)
    slow = np.where(threshold < floor, INFINITE_TIME, slow)
    fast = np.where(threshold <= 0, INFINITE_TIME, fast)
    crossed = swing <= 0
    return np.where(crossed, 0.0, fast), np.where(crossed, 0.0, slow)


@dataclass
class Trajectory:
    times: np.ndarray
    voltages: np.ndarray
    crossing_time: float
    threshold: float


def integrate_discharge(cfg: ColumnConfig, pattern: DataPattern, accessed_value: Optional[bool] = None,
                        vth_map: Optional[Sequence[float]] = None, dt: Optional[float] = None,
                        t_stop: Optional[float] = None, threshold: Optional[float] = None,
                        r1_leak: bool = False) -> Trajectory:
    """
    Integrate C_RBL*dV/dt = -(sum of cell currents at V) from vdd.

    Currents are re-evaluated every step. Integration ends at the first
    crossing of ``threshold`` (default v_ref) or, when given, at t_stop.

    Args:
        cfg: Column configuration
        pattern: Stored data; accessed_row=None integrates pure leakage
        accessed_value: Overrides the value stored in the accessed cell
        vth_map: Per-cell sampled thresholds (nominal when omitted)
        dt: Step; defaults to 1/400 of the closed-form crossing estimate
        t_stop: Integrate up to this time instead of stopping at the crossing
        threshold: Crossing level (default cfg.v_ref)
        r1_leak: Model an accessed '1' cell as an i_l0-like leaker, as the read path
            does (default False: i_r1 = 0, matching the closed forms)

    Returns:
        Trajectory with sampled times/voltages and the interpolated crossing time
    """
    _check_pattern(cfg, pattern)
    if accessed_value is not None:
        pattern = pattern.with_accessed_value(accessed_value)
    level = cfg.v_ref if threshold is None else threshold
    vth = _vth_array(cfg, vth_map)
    a, b = column_coefficients(cfg.params, cfg.env, np.asarray(pattern.bits)[:, None], vth[:, None],
                               pattern.accessed_row, r1_leak)
    estimate = float(crossing_estimate(cfg.params, cfg.env, cfg.c_rbl, a, b, level)[0])

    if dt is None:
        if math.isfinite(estimate) and estimate > 0:
            dt = estimate / STEPS_PER_CROSSING
        elif t_stop is not None:
            dt = t_stop / STEPS_PER_CROSSING
    if dt is None:
        return Trajectory(np.array([0.0]), np.array([cfg.vdd]), INFINITE_TIME, level)
    if not dt > 0:
        raise UsageError(f"dt must be > 0, got {dt}")
    if math.isfinite(estimate) and dt > estimate / MIN_STEPS_PER_CROSSING:
        raise AccuracyError(f"dt={dt:.3e} s exceeds 1/{MIN_STEPS_PER_CROSSING} of the "
                            f"crossing estimate {estimate:.3e} s")

    if t_stop is not None:
        max_steps = int(math.ceil(t_stop / dt))
    elif math.isfinite(estimate):
        max_steps = int(math.ceil(MAX_CROSSING_OVERRUN * estimate / dt))
    else:
        return Trajectory(np.array([0.0]), np.array([cfg.vdd]), INFINITE_TIME, level)

    times = [0.0]
    voltages = [cfg.vdd]
    crossing = INFINITE_TIME if cfg.vdd > level else 0.0
    v = np.array([cfg.vdd])
    for step in range(1, max_steps + 1):
        v_next = heun_step(cfg.params, cfg.env, cfg.c_rbl, a, b, v, dt)
        v_prev, v_now = float(v[0]), float(v_next[0])
        times.append(step * dt)
        voltages.append(v_now)
        if crossing == INFINITE_TIME and v_now < level <= v_prev:
            crossing = (step - 1) * dt + dt * (v_prev - level) / (v_prev - v_now)
            if t_stop is None:
                break
        v = v_next
    return Trajectory(np.array(times), np.array(voltages), crossing, level)

"""
Behavioral peripheral models: the digitized-timing clock generator (two
replica columns and a switch) and the single-ended offset-canceling sense
amplifier (SOSA).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.column import MAX_CROSSING_OVERRUN, STEPS_PER_CROSSING, crossing_estimate, heun_step
from src.config import DEFAULT_C_RBL, DeviceParams, Environment, ReplicaConfig, SosaModel, VariationModel
from src.device import cell_weight, read_boost
from src.errors import AccuracyError, DomainError, UsageError
from src.variation import map_trials, replica_vth

REPLICA_COLUMNS = 2


@dataclass(frozen=True)
class ClockTiming:
    """Internal timing at one supply: clock period, SA period and wordline delay."""
    vdd: float
    t_ck: float
    t_sa: float
    t_rwl: float


def trip_voltage(replica: ReplicaConfig, vdd: float, vth0: float) -> float:
    """Switch trip point: explicit v_trip, else max(vdd - vth0, v_trip_floor)."""
    v_trip = replica.v_trip if replica.v_trip is not None else max(vdd - vth0, replica.v_trip_floor)
    if not 0 < v_trip < vdd:
        raise DomainError(f"v_trip {v_trip:.3f} V must lie in (0, vdd={vdd})")
    return v_trip


def crossing_times(params: DeviceParams, env: Environment, c_rbl: float, a: np.ndarray, b: np.ndarray,
                   level: float) -> np.ndarray:
    """First time each column falls below ``level``, linearly interpolated between steps."""
    estimate = crossing_estimate(params, env, c_rbl, a, b, level)
    if not np.all(np.isfinite(estimate)):
        raise AccuracyError("a replica column carries no current")
    dt = float(np.min(estimate)) / STEPS_PER_CROSSING
    max_steps = int(math.ceil(MAX_CROSSING_OVERRUN * float(np.max(estimate)) / dt))

    v = np.full(a.shape, env.vdd)
    crossed = np.full(a.shape, np.inf)
    for step in range(1, max_steps + 1):
        v_next = heun_step(params, env, c_rbl, a, b, v, dt)
        newly = (v_next < level) & (v >= level)
        if np.any(newly):
            fraction = (v[newly] - level) / (v[newly] - v_next[newly])
            crossed[newly] = (step - 1) * dt + dt * fraction
            if np.all(np.isfinite(crossed)):
                return crossed
        v = v_next
    raise AccuracyError(f"replica discharge did not reach {level:.3f} V within {max_steps} steps")


def clock_period_samples(replica: ReplicaConfig, params: DeviceParams, env: Environment,
                         model: VariationModel, c_rbl: float = DEFAULT_C_RBL, workers: int = 1) -> np.ndarray:
    """
    T_CK per trial: (1 + overhead) * (t_RBL + t_RBLB), each replica column
    discharging from vdd to v_trip through rc_count parallel '0' reads while
    dc_count dummy cells leak as idle '1'.
    """
    v_trip = trip_voltage(replica, env.vdd, params.vth_nominal)
    trials = model.trials if model.sigma_vth > 0 else 1
    boost = read_boost(params, env)

    def sums(trial: int):
        vth = replica_vth(model, trial, params.vth_nominal, replica.depth, REPLICA_COLUMNS)
        weight = cell_weight(params, vth, env.temperature)
        a = boost * weight[:, :replica.rc_count].sum(axis=1)
        b = weight[:, replica.rc_count:].sum(axis=1)
        return a, b

    pairs = map_trials(sums, range(trials), workers)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    times = crossing_times(params, env, c_rbl, a, b, v_trip)
    return (1.0 + replica.overhead) * times.sum(axis=1)


def clock_period(replica: ReplicaConfig, params: DeviceParams, env: Environment, model: VariationModel,
                 c_rbl: float = DEFAULT_C_RBL, workers: int = 1) -> float:
    """Mean T_CK over the trial population."""
    return float(np.mean(clock_period_samples(replica, params, env, model, c_rbl, workers)))


def sa_latency(sosa: SosaModel, t_ck: float) -> float:
    """T_SA = (precharge + sample + amplify) * t_ck."""
    if not t_ck > 0:
        raise UsageError(f"t_ck must be > 0, got {t_ck}")
    return sosa.cycles * t_ck


def wordline_delay(rwl_ratio: float, t_ck: float) -> float:
    return rwl_ratio * t_ck


def sosa_sample(v_rbl: float, v_ref: float, offset: float) -> int:
    """Read bit of one SOSA: 0 iff v_rbl + offset < v_ref (a tie reads '1')."""
    if v_rbl < 0 or v_ref < 0:
        raise DomainError("voltages must be >= 0")
    return 0 if v_rbl + offset < v_ref else 1


def sosa_read(v_rbl: np.ndarray, v_ref: float, offsets: np.ndarray) -> np.ndarray:
    """Vectorized sosa_sample; True reads '1'."""
    return ~(v_rbl + offsets < v_ref)


def clock_timing(vdd: float, replica: ReplicaConfig, sosa: SosaModel, params: DeviceParams,
                 temperature: float, model: VariationModel, c_rbl: float = DEFAULT_C_RBL,
                 rwl_ratio: float = 0.5, workers: int = 1) -> ClockTiming:
    env = Environment(vdd=vdd, temperature=temperature)
    t_ck = clock_period(replica, params, env, model, c_rbl, workers)
    return ClockTiming(vdd=vdd, t_ck=t_ck, t_sa=sa_latency(sosa, t_ck), t_rwl=wordline_delay(rwl_ratio, t_ck))

"""
Subthreshold drain-current model and the per-cell read-port currents of an
8T bitcell (idle '0' leakage, idle '1' leakage, accessed '0' read current).

All functions accept floats or numpy arrays for voltages/thresholds.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np
from scipy.constants import e as ELEMENTARY_CHARGE
from scipy.constants import k as BOLTZMANN

from src.config import REFERENCE_TEMPERATURE, DeviceParams, Environment
from src.errors import DomainError

ArrayLike = Union[float, np.ndarray]


def thermal_voltage(temperature: float) -> float:
    """v_t = k_B*T/q in volts."""
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0 K, got {temperature}")
    return BOLTZMANN * temperature / ELEMENTARY_CHARGE


def slope_voltage(params: DeviceParams, temperature: float) -> float:
    """n*v_t, the denominator of every subthreshold exponent."""
    return params.n * thermal_voltage(temperature)


def effective_vth(params: DeviceParams, vth: ArrayLike, temperature: float) -> ArrayLike:
    return vth + params.vth_tempco * (temperature - REFERENCE_TEMPERATURE)


def ids(params: DeviceParams, vgs: ArrayLike, vds: ArrayLike, vth: ArrayLike, temperature: float) -> ArrayLike:
    """
    Subthreshold drain current
    I0*exp((vgs-vth)/(n*vt))*exp(lambda*vds/(n*vt))*(1-exp(-vds/vt)).

    ``vth`` is the (possibly sampled) threshold before the temperature drift.
    """
    if np.any(np.asarray(vds) < 0):
        raise DomainError("vds must be >= 0")
    vt = thermal_voltage(temperature)
    nvt = params.n * vt
    vth_eff = effective_vth(params, vth, temperature)
    return (params.i0 * np.exp((vgs - vth_eff) / nvt)
            * np.exp(params.lam * vds / nvt)
            * -np.expm1(-np.asarray(vds, dtype=float) / vt))


def _check_rbl(env: Environment, v_rbl: ArrayLike):
    v = np.asarray(v_rbl)
    if np.any(v < 0) or np.any(v > env.vdd):
        raise DomainError(f"v_rbl must lie in [0, {env.vdd}] V")


def leak_zero_cell(params: DeviceParams, env: Environment, v_rbl: ArrayLike,
                   vth: Optional[ArrayLike] = None) -> ArrayLike:
    """i_l0: idle cell storing '0', M7 gate at 0 V, source grounded."""
    _check_rbl(env, v_rbl)
    vth = params.vth_nominal if vth is None else vth
    return ids(params, 0.0, v_rbl, vth, env.temperature)


def alpha_ratio(params: DeviceParams, env: Environment, v_rbl: ArrayLike) -> ArrayLike:
    """i_l1/i_l0 = exp(-(1+lambda)*v_rbl/(2*n*vt)); 1 at v_rbl = 0."""
    if np.any(np.asarray(v_rbl) < 0):
        raise DomainError("v_rbl must be >= 0")
    nvt = slope_voltage(params, env.temperature)
    return np.exp(-(1.0 + params.lam) * v_rbl / (2.0 * nvt))


def leak_one_cell(params: DeviceParams, env: Environment, v_rbl: ArrayLike,
                  vth: Optional[ArrayLike] = None) -> ArrayLike:
    """
    i_l1: idle cell storing '1'. The stacked source floats near v_rbl/2;
    with the transregional term dropped this is exactly alpha * i_l0.
    """
    return alpha_ratio(params, env, v_rbl) * leak_zero_cell(params, env, v_rbl, vth)


def read_current(params: DeviceParams, env: Environment, v_rbl: ArrayLike,
                 vth_sample: Optional[ArrayLike] = None) -> ArrayLike:
    """i_r0: accessed cell storing '0', read port gate driven to vdd."""
    _check_rbl(env, v_rbl)
    vth = params.vth_nominal if vth_sample is None else vth_sample
    return ids(params, env.vdd, v_rbl, vth, env.temperature)


# =============================================================================
# Factored form used by the column integrators
# =============================================================================
#
# Every read-port current above factors as  w(vth) * boost * g(V)  where
#   w(vth) = I0*exp(-vth_eff/(n*vt))      per-cell weight
#   boost  = exp(vgs/(n*vt))              1 for idle cells, exp(vdd/(n*vt)) for a read
#   g(V)   = exp(lambda*V/(n*vt))*(1-exp(-V/vt))
# and idle '1' cells carry an extra alpha(V).

def cell_weight(params: DeviceParams, vth: ArrayLike, temperature: float) -> ArrayLike:
    nvt = slope_voltage(params, temperature)
    return params.i0 * np.exp(-effective_vth(params, vth, temperature) / nvt)


def read_boost(params: DeviceParams, env: Environment) -> float:
    """i_r0/i_l0 at equal vth: exp(vdd/(n*vt))."""
    return float(np.exp(env.vdd / slope_voltage(params, env.temperature)))


def voltage_factor(params: DeviceParams, temperature: float, v: ArrayLike) -> ArrayLike:
    vt = thermal_voltage(temperature)
    nvt = params.n * vt
    return np.exp(params.lam * v / nvt) * -np.expm1(-np.asarray(v, dtype=float) / vt)

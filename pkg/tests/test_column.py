import math

import numpy as np
import pytest

from src.column import (
    INFINITE_TIME, ColumnConfig, DataPattern, column_coefficients, column_current, column_leakage,
    crossing_bounds, integrate_discharge, monotone_floor, sensing_window, t_leak, t_read0, window_ratio,
)
from src.config import DeviceParams, Environment, RunConfig
from src.device import alpha_ratio, leak_zero_cell, read_current
from src.errors import AccuracyError, ConfigError, DomainError, UsageError

GRID_VDD = (0.25, 0.30, 0.35, 0.40, 0.45)
GRID_T = (250.0, 300.0, 350.0)
GRID_N = (64, 256)


def column(vdd=0.25, temperature=300.0, depth=256):
    return RunConfig().column_config(vdd=vdd, temperature=temperature, depth=depth)


def test_from_ratio_counts():
    pattern = DataPattern.from_ratio(256, 0.5, accessed_row=0)
    assert pattern.idle_zeros == 128
    assert pattern.idle_ones == 127
    assert pattern.accessed_value is False
    test = DataPattern.test_mode(256, 0.25)
    assert test.idle_zeros + test.idle_ones == 256
    assert test.idle_zeros == 64


def test_pattern_rejects_out_of_range_access():
    with pytest.raises(UsageError):
        DataPattern((False, True), accessed_row=2)


def test_column_config_rejects_reference_above_supply():
    with pytest.raises(ConfigError) as exc:
        ColumnConfig(depth=16, c_rbl=10e-15, v_ref=0.3, env=Environment(vdd=0.25))
    assert exc.value.key_path == "column.v_ref"


def test_pattern_length_mismatch():
    with pytest.raises(ConfigError):
        column_leakage(column(depth=64), DataPattern.test_mode(32))


def test_column_leakage_closed_form():
    cfg = column()
    pattern = DataPattern.from_ratio(256, 0.25, accessed_row=3)
    v = cfg.v_eval
    expected = (pattern.idle_zeros + alpha_ratio(cfg.params, cfg.env, v) * pattern.idle_ones) \
        * leak_zero_cell(cfg.params, cfg.env, v)
    assert column_leakage(cfg, pattern) == pytest.approx(expected, rel=1e-12)
    nominal = np.full(256, cfg.params.vth_nominal)
    assert column_leakage(cfg, pattern, vth_map=nominal) == pytest.approx(expected, rel=1e-12)


def test_leakage_linear_in_depth():
    small = column_leakage(column(depth=64), DataPattern.test_mode(64))
    large = column_leakage(column(depth=256), DataPattern.test_mode(256))
    assert large / small == pytest.approx(4.0, rel=1e-12)


def test_t_read0_needs_accessed_zero():
    cfg = column()
    with pytest.raises(UsageError):
        t_read0(cfg, DataPattern.worst_read1(256))
    with pytest.raises(UsageError):
        t_read0(cfg, DataPattern.test_mode(256))


def test_t_leak_infinite_without_idle_cells():
    cfg = column(depth=1)
    assert t_leak(cfg, DataPattern((True,), accessed_row=0)) == INFINITE_TIME


def test_window_ratio_values():
    assert window_ratio(column()) == pytest.approx(3.963, rel=1e-3)
    assert window_ratio(column(vdd=0.20), dvth=0.06) == pytest.approx(0.289, rel=2e-3)


def test_window_ratio_rejects_negative_dvth():
    with pytest.raises(DomainError):
        window_ratio(column(), dvth=-0.01)
    with pytest.raises(DomainError):
        sensing_window(column(), dvth=-0.01)


def test_window_ratio_increases_with_vdd_and_falls_with_temperature():
    ratios = [window_ratio(column(vdd=v)) for v in GRID_VDD]
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    by_temperature = [window_ratio(column(temperature=t)) for t in GRID_T]
    assert all(a > b for a, b in zip(by_temperature, by_temperature[1:]))


@pytest.mark.parametrize("vdd", GRID_VDD)
@pytest.mark.parametrize("temperature", GRID_T)
@pytest.mark.parametrize("depth", GRID_N)
def test_sensing_window_matches_window_ratio(vdd, temperature, depth):
    cfg = column(vdd, temperature, depth)
    window = sensing_window(cfg)
    assert window.ratio == pytest.approx(window_ratio(cfg), rel=1e-2)
    assert window.valid == (window.t_leak_min > window.t_r0_max)
    assert window.beta_lower == pytest.approx(1.0 / window.ratio, rel=1e-12)


@pytest.mark.parametrize("vdd", GRID_VDD)
@pytest.mark.parametrize("r01", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_window_bounds_every_data_ratio(vdd, r01):
    cfg = column(vdd=vdd, depth=256)
    window = sensing_window(cfg)
    read0 = DataPattern.from_ratio(256, r01, accessed_row=0, accessed_value=False)
    read1 = DataPattern.from_ratio(256, r01, accessed_row=0, accessed_value=True)
    assert t_read0(cfg, read0) <= window.t_r0_max * (1 + 1e-12)
    assert t_leak(cfg, read1) >= window.t_leak_min


def test_sensing_window_invalid_at_low_supply_with_mismatch():
    window = sensing_window(column(vdd=0.20), dvth=0.06)
    assert not window.valid
    assert window.beta_lower > 1


def test_column_current_is_sum_of_cell_currents():
    cfg = column(depth=8)
    pattern = DataPattern((False, True, False, True, True, False, False, True), accessed_row=2)
    vth = np.full(8, cfg.params.vth_nominal)
    a, b = column_coefficients(cfg.params, cfg.env, np.asarray(pattern.bits)[:, None], vth[:, None],
                               pattern.accessed_row)
    v = 0.18
    expected = read_current(cfg.params, cfg.env, v) + column_leakage(cfg, pattern, v_rbl=v)
    assert float(column_current(cfg.params, cfg.env, a, b, v)[0]) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("vdd", GRID_VDD)
@pytest.mark.parametrize("temperature", GRID_T)
@pytest.mark.parametrize("depth", GRID_N)
def test_closed_forms_agree_with_integrator(vdd, temperature, depth):
    cfg = column(vdd, temperature, depth)
    read = DataPattern.worst_read0(depth)
    test = DataPattern.test_mode(depth)
    assert integrate_discharge(cfg, read).crossing_time == pytest.approx(t_read0(cfg, read), rel=0.10)
    assert integrate_discharge(cfg, test).crossing_time == pytest.approx(t_leak(cfg, test), rel=0.10)


def test_halving_dt_barely_moves_crossing():
    cfg = column(vdd=0.30, depth=64)
    pattern = DataPattern.worst_read0(64)
    coarse = integrate_discharge(cfg, pattern)
    dt = coarse.times[1]
    fine = integrate_discharge(cfg, pattern, dt=dt / 2)
    assert fine.crossing_time == pytest.approx(coarse.crossing_time, rel=5e-3)


def test_coarse_step_rejected():
    cfg = column()
    pattern = DataPattern.worst_read0(256)
    with pytest.raises(AccuracyError):
        integrate_discharge(cfg, pattern, dt=t_read0(cfg, pattern) / 50)


def test_read_one_without_leakage_stays_at_vdd():
    cfg = column(depth=1)
    trajectory = integrate_discharge(cfg, DataPattern((True,), accessed_row=0))
    assert trajectory.crossing_time == INFINITE_TIME
    assert np.all(trajectory.voltages == cfg.vdd)


def test_read_one_of_all_zero_column_draws_test_mode_current():
    cfg = column(depth=64)
    read = integrate_discharge(cfg, DataPattern.worst_read1(64), r1_leak=True)
    test = integrate_discharge(cfg, DataPattern.test_mode(64))
    assert read.crossing_time == pytest.approx(test.crossing_time, rel=1e-12)


def test_t_stop_runs_past_crossing():
    cfg = column(depth=64)
    pattern = DataPattern.worst_read0(64)
    t_cross = t_read0(cfg, pattern)
    trajectory = integrate_discharge(cfg, pattern, t_stop=2 * t_cross)
    assert trajectory.times[-1] >= 2 * t_cross * (1 - 1e-9)
    assert trajectory.voltages[-1] < cfg.v_ref
    assert math.isfinite(trajectory.crossing_time)


def test_sampled_vth_map_slows_read():
    cfg = column(depth=16)
    pattern = DataPattern.worst_read0(16)
    slow = np.full(16, cfg.params.vth_nominal)
    slow[0] += 0.05
    assert t_read0(cfg, pattern, vth_map=slow) > t_read0(cfg, pattern)
    with pytest.raises(ConfigError):
        t_read0(cfg, pattern, vth_map=np.zeros(3))


def test_custom_device_params_flow_through():
    params = DeviceParams(vth0=0.30)
    cfg = ColumnConfig(depth=64, c_rbl=10e-15, v_ref=0.125, env=Environment(vdd=0.25), params=params)
    assert t_leak(cfg, DataPattern.test_mode(64)) < t_leak(column(depth=64), DataPattern.test_mode(64))


@pytest.mark.parametrize("r01", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("accessed", [False, True])
def test_crossing_bounds_bracket_integrated_crossing(r01, accessed):
    cfg = column(vdd=0.40, depth=64)
    pattern = DataPattern.from_ratio(64, r01, accessed_row=0, accessed_value=accessed)
    vth = np.full((64, 1), cfg.params.vth_nominal)
    a, b = column_coefficients(cfg.params, cfg.env, np.asarray(pattern.bits)[:, None], vth, 0, r1_leak=False)
    fast, slow = crossing_bounds(cfg.params, cfg.env, cfg.c_rbl, a, b, cfg.v_ref)
    crossing = integrate_discharge(cfg, pattern).crossing_time
    assert fast[0] <= crossing <= slow[0]


def test_crossing_bounds_edges():
    cfg = column(vdd=0.30, depth=64)
    floor = monotone_floor(cfg.params, cfg.temperature)
    assert 0 < floor < cfg.v_ref
    a = np.full(3, 1e-12)
    thresholds = np.array([0.0, 0.30, floor / 2])
    fast, slow = crossing_bounds(cfg.params, cfg.env, cfg.c_rbl, a, np.zeros(3), thresholds)
    assert fast[0] == slow[0] == INFINITE_TIME
    assert fast[1] == slow[1] == 0.0
    assert fast[2] == 0.0 and slow[2] == INFINITE_TIME

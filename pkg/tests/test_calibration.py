import math
import time

import numpy as np
import pytest

from src.bank import BankState
from src.calibration import (
    LeakageCount, LookupRow, LookupTable, build_lookup, first_flip, measure_cl, measured_window,
    sample_substeps, select_cr,
)
from src.column import DataPattern, SensingWindow, column_coefficients, integrate_discharge, sensing_window
from src.config import CalibrationSettings, RunConfig, VariationModel
from src.errors import CalibrationError, ConfigError, UsageError
from src.peripherals import ClockTiming, clock_timing
from src.read_sim import check_worst_case, read_delay

NO_VARIATION = VariationModel(sigma_vth=0.0, sigma_os=0.0, trials=2)


def window(t_r0_max, t_leak_min):
    return SensingWindow(t_r0_max=t_r0_max, t_leak_min=t_leak_min, valid=t_leak_min > t_r0_max,
                         beta_lower=t_r0_max / t_leak_min)


def test_select_cr_example():
    assert select_cr(window(97.8e-9, 389e-9), 60e-9, 1.2) == 2


def test_select_cr_is_smallest_covering_count():
    w = window(97.8e-9, 10e-6)
    c_r = select_cr(w, 7e-9, 1.2)
    assert c_r * 7e-9 >= 1.2 * 97.8e-9
    assert (c_r - 1) * 7e-9 < 1.2 * 97.8e-9


def test_select_cr_invalid_cases():
    assert select_cr(window(400e-9, 389e-9), 60e-9, 1.2) is None
    assert select_cr(window(97.8e-9, 100e-9), 60e-9, 1.2) is None
    with pytest.raises(UsageError):
        select_cr(window(97.8e-9, 389e-9), 60e-9, 0.9)


@pytest.mark.parametrize("t_leak_min, expected", [
    (5.4e-7, 2.36e-7),          # closed form above the measured flip: capped at c_l*t_sa
    (2.30e-7, 2.30e-7),         # inside the bracket: kept
    (1.0e-7, 235e-9),           # below the bracket: raised to (c_l - 1)*t_sa
])
def test_measured_window_clips_leak_bound_into_bracket(t_leak_min, expected):
    t_sa = 1e-9
    count = LeakageCount(236, False)
    measured = measured_window(window(50e-9, t_leak_min), count, t_sa)
    assert measured.t_leak_min == pytest.approx(expected, rel=1e-12)
    assert measured.t_r0_max == 50e-9
    assert measured.beta_lower == pytest.approx(50e-9 / measured.t_leak_min)


@pytest.mark.parametrize("t_r0_max", [20e-9, 60e-9, 150e-9, 230e-9])
def test_beta_stays_within_one_count_of_count_ratio(t_r0_max):
    t_sa = 1e-9
    count = LeakageCount(236, False)
    measured = measured_window(window(t_r0_max, 5.4e-7), count, t_sa)
    c_r = select_cr(measured, t_sa, 1.2)
    if t_r0_max * 1.2 >= 236e-9:
        assert c_r is None
        return
    assert c_r < count.c_l
    beta = c_r * t_sa / measured.t_leak_min
    assert abs(c_r / count.c_l - beta) <= 1 / count.c_l


def test_leakage_count_invariants():
    assert LeakageCount(512, True).saturated
    with pytest.raises(UsageError):
        LeakageCount(0, False)
    with pytest.raises(UsageError):
        LeakageCount(512, False)
    with pytest.raises(UsageError):
        LeakageCount(20, True)


@pytest.mark.parametrize("c_l, c_r, beta", [
    (13, 6, 0.45), (38, 6, 0.14), (109, 5, 0.044), (270, 5, 0.016), (512, 4, 0.0073),
])
def test_published_counts_reproduce_beta(c_l, c_r, beta):
    row = LookupRow(vdd=0.3, c_l=c_l, c_r=c_r, beta=beta, saturated=c_l == 512, t_ck=1e-9, t_sa=8e-9,
                    substeps=16)
    assert beta == pytest.approx(row.beta_counts, rel=0.15)


def _leakage_only(cfg):
    pattern = DataPattern.test_mode(cfg.depth)
    vth = np.full((cfg.depth, 1), cfg.params.vth_nominal)
    a, b = column_coefficients(cfg.params, cfg.env, np.asarray(pattern.bits)[:, None], vth)
    return pattern, a, b


def test_first_flip_counts_the_flip_sample():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    pattern, a, b = _leakage_only(cfg)
    t_flip = integrate_discharge(cfg, pattern).crossing_time
    count = first_flip(cfg, a, b, np.zeros(1), t_sa=t_flip / 12.5, substeps=64)
    assert count.c_l == 13
    assert not count.saturated


def test_first_flip_saturates():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    _, a, b = _leakage_only(cfg)
    t_flip = integrate_discharge(cfg, DataPattern.test_mode(64)).crossing_time
    count = first_flip(cfg, a, b, np.zeros(1), t_sa=t_flip / 50, substeps=16, counter_max=5)
    assert count == LeakageCount(5, True, 5)


def test_negative_offset_flips_earlier():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    _, a, b = _leakage_only(cfg)
    t_flip = integrate_discharge(cfg, DataPattern.test_mode(64)).crossing_time
    plain = first_flip(cfg, a, b, np.zeros(1), t_sa=t_flip / 40, substeps=16)
    shifted = first_flip(cfg, a, b, np.full(1, -0.02), t_sa=t_flip / 40, substeps=16)
    assert shifted.c_l < plain.c_l


def test_measure_cl_on_uniform_bank():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    t_flip = integrate_discharge(cfg, DataPattern.test_mode(64)).crossing_time
    t_sa = t_flip / 12.5
    count = measure_cl(BankState.test_mode(64), cfg, t_sa, NO_VARIATION)
    assert count.c_l == 13
    assert sample_substeps(cfg, t_sa) == 16


def test_measure_cl_checks_bank_depth():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    with pytest.raises(ConfigError):
        measure_cl(BankState.test_mode(32), cfg, 1e-8, NO_VARIATION)


def test_measure_cl_takes_worst_column_of_population():
    cfg = RunConfig().column_config(vdd=0.30, depth=64)
    t_flip = integrate_discharge(cfg, DataPattern.test_mode(64)).crossing_time
    varied = VariationModel(trials=3, seed=12)
    count = measure_cl(BankState.test_mode(64), cfg, t_flip / 20, varied)
    assert count.c_l < 20


def test_lookup_table_file(tmp_path):
    table = LookupTable(rows=[
        LookupRow(vdd=0.2, c_l=7, c_r=None, beta=1.1, saturated=False, t_ck=3.3e-7, t_sa=2.64e-6, substeps=16),
        LookupRow(vdd=0.4, c_l=295, c_r=167, beta=0.3172, saturated=False, t_ck=1.0 / 3e7, t_sa=8.0 / 3e7,
                  substeps=16),
    ], config_hash="ab" * 32, seed=7, counter_max=512)
    path = table.write(tmp_path / "lookup_table.tsv")
    text = path.read_text(encoding="utf-8")
    assert "# config_hash\t" + "ab" * 32 in text
    assert "\t-1\t" in text

    loaded = LookupTable.read(path)
    assert loaded.config_hash == "ab" * 32
    assert loaded.seed == 7
    assert loaded.rows[0].c_r is None
    assert loaded.rows[1].c_r == 167
    assert loaded.rows[1].t_sa == table.rows[1].t_sa
    assert loaded.rows[1].t_test == table.rows[1].t_test
    assert loaded.vdd_min == 0.4


def test_lookup_table_lookup_errors(tmp_path):
    table = LookupTable(rows=[LookupRow(vdd=0.4, c_l=9, c_r=3, beta=0.3, saturated=False, t_ck=1e-8, t_sa=8e-8,
                                        substeps=16)])
    assert table.row_for(0.40).c_r == 3
    with pytest.raises(CalibrationError):
        table.row_for(0.35)
    with pytest.raises(CalibrationError):
        LookupTable.read(tmp_path / "missing.tsv")


def test_build_lookup_rejects_bad_grids():
    template = RunConfig().column_config()
    timing = lambda vdd: ClockTiming(vdd, 1e-8, 8e-8, 5e-9)  # noqa: E731
    with pytest.raises(UsageError):
        build_lookup([], template, NO_VARIATION, timing, CalibrationSettings())
    with pytest.raises(UsageError):
        build_lookup([0.3, 0.25], template, NO_VARIATION, timing, CalibrationSettings())


def _default_table(trials, vdd_list):
    config = RunConfig()
    model = VariationModel(trials=trials, seed=config.seed)
    template = config.column_config()

    def timing(vdd):
        return clock_timing(vdd, config.replica, config.sosa, config.device, config.env.temperature, model,
                            config.column.c_rbl, config.read.rwl_ratio)

    table = build_lookup(vdd_list, template, model, timing, config.calibration)
    return config, model, template, table


@pytest.fixture(scope="module")
def calibrated():
    """Default configuration calibrated over its own voltage grid at 1K trials."""
    start = time.perf_counter()
    config, model, template, table = _default_table(1000, RunConfig().calibration.vdd_grid)
    return config, model, template, table, time.perf_counter() - start


@pytest.mark.slow
def test_default_table_shape(calibrated):
    config, _, _, table, elapsed = calibrated
    assert elapsed < 120
    rows = table.rows
    assert not rows[0].valid
    assert table.vdd_min is not None

    seen_valid = False
    for row in rows:
        seen_valid = seen_valid or row.valid
        assert row.valid == seen_valid
    unsaturated = [row.c_l for row in rows if not row.saturated]
    assert all(a < b for a, b in zip(unsaturated, unsaturated[1:]))
    valid = table.valid_rows()
    assert all(a.c_r >= b.c_r for a, b in zip(valid, valid[1:]))

    dvth = config.dvth
    for row in valid:
        assert row.c_r < row.c_l
        assert row.window.beta_lower < row.beta < 1
        assert 1.2 * row.window.t_r0_max <= row.c_r * row.t_sa < row.c_l * row.t_sa
        assert abs(row.beta_counts - row.beta) <= 1 / row.c_l
        nominal = sensing_window(config.column_config().scaled_to(row.vdd), dvth)
        assert row.window.t_r0_max == pytest.approx(nominal.t_r0_max, rel=1e-12)
        assert (row.c_l - 1) * row.t_sa <= row.window.t_leak_min <= row.c_l * row.t_sa


@pytest.mark.slow
def test_calibrated_window_is_error_free_and_violation_is_not(calibrated):
    _, model, template, table, _ = calibrated
    start = time.perf_counter()
    for row in table.valid_rows():
        clean = check_worst_case(template.scaled_to(row.vdd), row, model)
        assert clean.reads == 1000 * 4 * 64
        assert clean.bit_errors == 0, row.vdd

    lowest = table.row_for(table.vdd_min)
    forced = check_worst_case(template.scaled_to(lowest.vdd), lowest, model, c_r=lowest.c_l)
    assert forced.read1_errors > 0
    assert time.perf_counter() - start < 300


@pytest.mark.slow
def test_read_delay_falls_and_sensing_share_grows_as_supply_drops(calibrated):
    config, _, _, table, _ = calibrated
    delays = [read_delay(row, config.read.rwl_ratio) for row in table.valid_rows()]
    totals = [d.total for d in delays]
    shares = [d.t_rbl / d.total for d in delays]
    assert all(a > b for a, b in zip(totals, totals[1:]))
    assert all(a >= b for a, b in zip(shares, shares[1:]))


@pytest.mark.slow
def test_build_lookup_is_reproducible():
    first = _default_table(4, (0.40,))[3]
    second = _default_table(4, (0.40,))[3]
    assert first.rows == second.rows
    assert math.isfinite(first.rows[0].t_test)

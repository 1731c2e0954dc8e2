import numpy as np
import pytest

from src.column import crossing_estimate
from src.config import DeviceParams, Environment, ReplicaConfig, SosaModel, VariationModel
from src.device import cell_weight, read_boost
from src.errors import DomainError, UsageError
from src.peripherals import (
    clock_period, clock_period_samples, clock_timing, sa_latency, sosa_read, sosa_sample, trip_voltage,
    wordline_delay,
)
from src.utils import log_linear_r2
from src.variation import OFFSET_STREAM, standard_normals

PARAMS = DeviceParams()
REPLICA = ReplicaConfig()
NO_VARIATION = VariationModel(sigma_vth=0.0, sigma_os=0.0, trials=1)


def test_trip_voltage_floor_and_explicit_value():
    assert trip_voltage(REPLICA, 0.25, 0.35) == pytest.approx(0.1)
    assert trip_voltage(REPLICA, 0.60, 0.35) == pytest.approx(0.25)
    assert trip_voltage(ReplicaConfig(v_trip=0.12), 0.25, 0.35) == 0.12
    with pytest.raises(DomainError):
        trip_voltage(ReplicaConfig(v_trip=0.3), 0.25, 0.35)


def test_sa_latency_is_eight_clock_periods():
    assert sa_latency(SosaModel(), 5e-9) == pytest.approx(40e-9)
    assert wordline_delay(0.5, 5e-9) == pytest.approx(2.5e-9)
    with pytest.raises(UsageError):
        sa_latency(SosaModel(), 0.0)


def test_sosa_threshold_and_tie():
    assert sosa_sample(0.11, 0.125, 0.0) == 0
    assert sosa_sample(0.125, 0.125, 0.0) == 1
    assert sosa_sample(0.11, 0.125, 0.02) == 1
    assert sosa_sample(0.13, 0.125, -0.01) == 0
    with pytest.raises(DomainError):
        sosa_sample(-0.01, 0.125, 0.0)


def test_sosa_read_matches_scalar_sampler():
    v = np.array([0.10, 0.125, 0.13, 0.20])
    offsets = np.array([0.03, 0.0, -0.01, 0.0])
    expected = [sosa_sample(x, 0.125, o) == 1 for x, o in zip(v, offsets)]
    assert sosa_read(v, 0.125, offsets).tolist() == expected


def test_three_sigma_margin_misreads_at_gaussian_tail_rate():
    sigma = SosaModel().sigma_os_cap
    offsets = sigma * standard_normals(4, 0, OFFSET_STREAM, 10_000)
    v_ref = 0.15
    reads = sosa_read(np.full(10_000, v_ref + 3 * sigma), v_ref, offsets)
    rate = np.count_nonzero(~reads) / 10_000
    assert 0.0003 <= rate <= 0.003


def test_clock_period_matches_constant_current_estimate():
    env = Environment(vdd=0.30)
    v_trip = trip_voltage(REPLICA, env.vdd, PARAMS.vth_nominal)
    weight = cell_weight(PARAMS, PARAMS.vth_nominal, env.temperature)
    a = REPLICA.rc_count * weight * read_boost(PARAMS, env)
    b = REPLICA.dc_count * weight
    estimate = float(crossing_estimate(PARAMS, env, 10e-15, np.array([a]), np.array([b]), v_trip)[0])
    t_ck = clock_period(REPLICA, PARAMS, env, NO_VARIATION)
    assert t_ck == pytest.approx(2 * 1.05 * estimate, rel=0.10)


def test_clock_period_falls_with_vdd():
    grid = [0.25, 0.30, 0.35, 0.40, 0.45]
    periods = [clock_period(REPLICA, PARAMS, Environment(vdd=v), NO_VARIATION) for v in grid]
    assert all(a > b for a, b in zip(periods, periods[1:]))
    assert log_linear_r2(grid, periods) >= 0.98


def test_clock_timing_fields():
    timing = clock_timing(0.35, REPLICA, SosaModel(), PARAMS, 300.0, NO_VARIATION)
    assert timing.t_sa == pytest.approx(8 * timing.t_ck, rel=1e-12)
    assert timing.t_rwl == pytest.approx(0.5 * timing.t_ck, rel=1e-12)


def test_clock_samples_are_deterministic():
    model = VariationModel(trials=50, seed=4)
    env = Environment(vdd=0.30)
    first = clock_period_samples(REPLICA, PARAMS, env, model, workers=1)
    again = clock_period_samples(REPLICA, PARAMS, env, model, workers=3)
    np.testing.assert_array_equal(first, again)
    assert first.shape == (50,)


@pytest.mark.slow
def test_parallel_replica_cells_average_out_variation():
    model = VariationModel(trials=1000, seed=6)
    env = Environment(vdd=0.30)
    single = clock_period_samples(ReplicaConfig(rc_count=1, dc_count=255), PARAMS, env, model)
    wide = clock_period_samples(REPLICA, PARAMS, env, model)
    cv_single = np.std(single, ddof=1) / np.mean(single)
    cv_wide = np.std(wide, ddof=1) / np.mean(wide)
    assert cv_single / cv_wide == pytest.approx(8.0, rel=0.3)

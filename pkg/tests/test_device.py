import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from r3puf.device import (
    DeviceParams,
    DeviceState,
    EnduranceExceeded,
    Target,
    integrate_step,
    lognormal_factor,
    program,
    resistance,
    resistance_of,
    switching_rate,
)

omegas = st.floats(0.0, 1.0)
r_ons = st.floats(1e3, 1e7)
ratios = st.floats(1.5, 1e4)
volts = st.floats(-5.0, 5.0)


@given(omegas, omegas, r_ons, ratios)
def test_resistance_monotone_and_bounded(w1, w2, r_on, ratio):
    r_off = r_on * ratio
    a, b = resistance_of(w1, r_on, r_off), resistance_of(w2, r_on, r_off)
    assert r_on * (1 - 1e-12) <= a <= r_off * (1 + 1e-12)
    if w1 < w2:
        assert a >= b


def test_resistance_endpoints():
    assert resistance_of(1.0, 5e5, 5e8) == pytest.approx(5e5, rel=1e-12)
    assert resistance_of(0.0, 5e5, 5e8) == pytest.approx(5e8, rel=1e-12)
    # geometric midpoint
    assert resistance_of(0.5, 5e5, 5e8) == pytest.approx(np.sqrt(5e5 * 5e8), rel=1e-12)


def test_switching_rate_branches():
    assert switching_rate(1.5, 1.0, -1.0, 1e5) == pytest.approx(5e4)
    assert switching_rate(-1.2, 1.0, -1.0, 1e5) == pytest.approx(-2e4)
    assert switching_rate(0.3, 1.0, -1.0, 1e5) == 0.0
    assert switching_rate(0.3, 1.0, -1.0, 1e5, beta=2.0) == pytest.approx(0.6)


@given(st.floats(0.2, 2.0), st.floats(-2.0, -0.2))
def test_switching_rate_continuous_at_thresholds(v_set, v_reset):
    eps = 1e-9
    for v in (v_set, v_reset):
        lo = switching_rate(v - eps, v_set, v_reset, 1e5)
        hi = switching_rate(v + eps, v_set, v_reset, 1e5)
        assert abs(hi - lo) < 1e-3


@given(volts, volts)
def test_switching_rate_monotone_in_voltage(a, b):
    lo, hi = sorted((a, b))
    assert switching_rate(lo, 1.0, -1.0, 1e5) <= switching_rate(hi, 1.0, -1.0, 1e5)


@given(omegas, volts, st.floats(1e-9, 1e-3))
def test_integrate_step_keeps_omega_in_range(w, v, dt):
    params = DeviceParams(5e5, 5e8)
    state = DeviceState(w, 5e5, 5e8)
    out = integrate_step(state, params, v, dt)
    assert 0.0 <= out.omega <= 1.0


def test_integrate_step_matches_closed_form():
    params = DeviceParams(5e5, 5e8)
    state = DeviceState(1.0, 5e5, 5e8)
    out = integrate_step(state, params, -1.5, 1e-6)
    assert out.omega == pytest.approx(1.0 - 1e5 * 0.5 * 1e-6)


@pytest.mark.parametrize("dt", [0.0, -1e-7, np.inf, np.nan])
def test_integrate_step_rejects_bad_dt(dt):
    params = DeviceParams(5e5, 5e8)
    with pytest.raises(ValueError):
        integrate_step(DeviceState.fresh(params), params, 0.0, dt)


def test_integrate_step_rejects_nonfinite_voltage():
    params = DeviceParams(5e5, 5e8)
    with pytest.raises(ValueError):
        integrate_step(DeviceState.fresh(params), params, np.nan)


def test_params_validation():
    with pytest.raises(ValueError):
        DeviceParams(-1.0, 5e8)
    with pytest.raises(ValueError):
        DeviceParams(5e8, 5e5)
    with pytest.raises(ValueError):
        DeviceParams(5e5, 5e8, v_set=-0.5)


def test_lognormal_factor_moments():
    rng = np.random.default_rng(0)
    x = lognormal_factor(0.05, rng, 200_000)
    assert x.mean() == pytest.approx(1.0, abs=5e-4)
    assert x.std() / x.mean() == pytest.approx(0.05, rel=0.01)


def test_lognormal_factor_zero_spread_is_exact():
    rng = np.random.default_rng(0)
    before = rng.bit_generator.state
    assert lognormal_factor(0.0, rng) == 1.0
    assert rng.bit_generator.state == before


def test_lognormal_factor_per_element_generators_match_single_draws():
    gens = [np.random.default_rng(s) for s in range(4)]
    many = lognormal_factor(0.1, gens)
    one = [lognormal_factor(0.1, np.random.default_rng(s)) for s in range(4)]
    np.testing.assert_array_equal(many, one)


def test_program_set_and_reset():
    params = DeviceParams(5e5, 5e8, c2c_rel_std=0.05)
    rng = np.random.default_rng(3)
    s = program(DeviceState.fresh(params), params, Target.SET, rng)
    assert s.omega == 1.0
    assert s.program_cycle_count == 1
    assert s.r_on_cycle != 5e5
    assert resistance(s) == pytest.approx(s.r_on_cycle)
    s = program(s, params, "reset", rng)
    assert s.omega == 0.0
    assert resistance(s) == pytest.approx(s.r_off_cycle)
    assert s.program_cycle_count == 2


def test_program_without_spread_is_deterministic():
    params = DeviceParams(5e5, 5e8, c2c_rel_std=0.0)
    s = program(DeviceState.fresh(params), params, Target.SET, np.random.default_rng(1))
    assert s.r_on_cycle == 5e5


def test_endurance_limit():
    params = DeviceParams(5e5, 5e8)
    rng = np.random.default_rng(0)
    s = DeviceState(0.0, 5e5, 5e8, program_cycle_count=9)
    s = program(s, params, Target.SET, rng, endurance=10)
    with pytest.raises(EnduranceExceeded):
        program(s, params, Target.RESET, rng, endurance=10)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_c2c_draws_centre_on_device_mean(seed):
    params = DeviceParams(np.full(64, 4e5), np.full(64, 5e8), c2c_rel_std=0.05)
    s = program(DeviceState.fresh(params), params, Target.SET, np.random.default_rng(seed))
    assert np.all(np.abs(np.log(s.r_on_cycle / 4e5)) < 0.05 * 8)


@settings(max_examples=50)
@given(st.lists(st.floats(-4.0, 4.0), min_size=1, max_size=200), omegas)
def test_omega_stays_in_range_for_any_drive(voltages, w0):
    params = DeviceParams(5e5, 5e8, v_set=0.9, v_reset=-1.1)
    state = DeviceState(w0, 5e5, 5e8)
    for v in voltages:
        state = integrate_step(state, params, v, 1e-6)
        assert 0.0 <= state.omega <= 1.0


@given(st.floats(-0.999, 0.999), st.floats(0.1, 2.0), st.floats(-2.0, -0.1))
def test_rate_is_zero_between_thresholds(x, v_set, v_reset):
    v = v_reset + (x + 1) / 2 * (v_set - v_reset)
    assert switching_rate(v, v_set, v_reset, 1e5, beta=0.0) == 0.0


@pytest.mark.parametrize("amp", [1.1, 1.3, 2.0])
def test_halving_dt_converges(amp):
    # a smooth bounded pulse that only partly switches the device
    params = DeviceParams(5e5, 5e8)

    def final_omega(dt):
        t = np.arange(0.0, 2e-5, dt)
        state = DeviceState(1.0, 5e5, 5e8)
        for v in -amp * np.sin(np.pi * t / 2e-5):
            state = integrate_step(state, params, v, dt)
        return state.omega

    assert abs(final_omega(1e-7) - final_omega(5e-8)) < 1e-3


def test_program_without_spread_is_idempotent():
    params = DeviceParams(5e5, 5e8, c2c_rel_std=0.0)
    rng = np.random.default_rng(0)
    once = program(DeviceState.fresh(params), params, Target.SET, rng)
    twice = program(once, params, Target.SET, rng)
    assert (twice.omega, twice.r_on_cycle, twice.r_off_cycle) == (once.omega, once.r_on_cycle, once.r_off_cycle)

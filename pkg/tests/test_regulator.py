import math

import numpy as np
import pytest

from asaes.regulator import (RegulatorParams, SimulationDiverged, af_transfer, bode_sweep,
                             noise_only_overhead, overhead_report, simulate, simulate_traces)

P = RegulatorParams()


def sine_gain(params, f, amp=50e-6, cycles=6):
    dt = params.default_dt
    n = int(round(cycles / f / dt))
    t = np.arange(1, n + 1) * dt
    res = simulate(params, params.i_load_avg + amp * np.sin(2 * np.pi * f * t), dt)
    # fit the last half, after the start-up transient
    half = slice(n // 2, None)
    basis = np.column_stack([np.ones(n), np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])[half]
    coef, *_ = np.linalg.lstsq(basis, (res.i_supply - params.i_opamp)[half], rcond=None)
    return math.hypot(coef[1], coef[2]) / amp


def test_equilibrium_is_held_at_constant_average_load():
    res = simulate(P, np.full(5000, P.i_load_avg))
    assert np.max(np.abs(res.v_reg - P.v_target)) < 1e-12
    assert np.allclose(res.i_bleed, P.i_bleed_bias, rtol=0, atol=1e-15)
    assert np.allclose(res.i_supply, P.i_cs + P.i_opamp, rtol=0, atol=1e-15)
    assert res.smc_events == []


@pytest.mark.parametrize("f", [2e6, 10e6, 50e6])
def test_sine_gain_matches_attenuation_factor(f):
    cycles = 6 if f < 5e6 else 20
    assert sine_gain(P, f, cycles=cycles) == pytest.approx(abs(af_transfer(P, f)), rel=0.05)


def test_af_limits():
    assert af_transfer(P, 0.0) == pytest.approx(P.g_ds / (P.g_ds + P.G_m), rel=1e-12)
    assert abs(af_transfer(P, 1e13)) < 1e-7
    # DC-blocking at very high frequency: the capacitor takes it all
    mags = np.abs(af_transfer(P, np.array([1e9, 1e10, 1e11])))
    assert np.all(np.diff(mags) < 0)


def test_af_closed_form_by_hand():
    f = 20e6
    s = 2j * math.pi * f
    expect = P.g_ds / (P.g_ds + s * P.c_load + P.a * P.G_m / (s + P.a))
    assert af_transfer(P, f) == pytest.approx(expect, rel=1e-12)


def test_nominal_attenuation_at_least_400x_everywhere():
    table = bode_sweep(P, np.logspace(0, 11, 2001))
    assert table["magnitude"].max() <= 1 / 400
    assert np.allclose(table["attenuation"], 1 / table["magnitude"])
    assert np.allclose(table["magnitude_db"], 20 * np.log10(table["magnitude"]))


def test_af_rejects_negative_frequency():
    with pytest.raises(ValueError):
        af_transfer(P, -1.0)


def test_doubling_transconductance_halves_dc_af():
    lo = abs(af_transfer(P, 0.0))
    hi = abs(af_transfer(P.with_values(g_m=2 * P.g_m), 0.0))
    assert hi == pytest.approx(lo / 2, rel=1e-4)


def test_larger_amplifier_bandwidth_widens_rejection():
    f = np.logspace(3, 11, 4001)

    def corner(params):
        # first frequency where |AF| has risen 5 % above its DC value
        mag = np.abs(af_transfer(params, f))
        return f[np.argmax(mag > 1.05 * mag[0])] if mag.max() > 1.05 * mag[0] else np.inf

    corners = [corner(P.with_values(a=k * P.a)) for k in (0.25, 0.5, 1.0, 2.0)]
    assert all(lo < hi for lo, hi in zip(corners, corners[1:]))


def test_larger_capacitor_improves_high_frequency_attenuation():
    f = 1e9
    assert abs(af_transfer(P.with_values(c_load=2 * P.c_load), f)) < abs(af_transfer(P, f))


def test_second_pole_degrades_attenuation():
    with_pole = P.with_values(second_pole=2 * math.pi * 200e6)
    f = np.logspace(6, 9, 200)
    assert np.max(np.abs(af_transfer(with_pole, f))) > np.max(np.abs(af_transfer(P, f)))
    assert with_pole.default_dt <= P.default_dt


def test_overhead_report_default_point():
    r = overhead_report(P.with_values(), 1e-3, 18.89e-3)
    assert r.i_bleed == pytest.approx(1.11e-3)
    assert r.i_ov == pytest.approx(2.51e-3)
    assert r.p_ov == pytest.approx(6.79e-3, abs=5e-6)
    assert r.efficiency_pct == pytest.approx(73.56, abs=0.01)
    # P_ov + P_load is everything drawn from V_dd
    assert r.p_ov + 18.89e-3 * P.v_reg_nominal == pytest.approx(r.i_supply_total * P.v_dd)


def test_overhead_rejects_source_below_average_load():
    with pytest.raises(ValueError):
        overhead_report(P.with_values(i_cs=18e-3), 1e-3, 18.89e-3)
    with pytest.raises(ValueError):
        overhead_report(P, -1e-3, 18.89e-3)


def test_noise_only_overhead():
    assert noise_only_overhead(70e-3, 1.0) == (70e-3, 70e-3)


def test_dt_bound_enforced():
    with pytest.raises(ValueError, match="stability"):
        simulate(P, np.full(10, P.i_load_avg), dt=2 * P.max_dt)
    with pytest.raises(ValueError):
        simulate(P, np.full(10, P.i_load_avg), dt=0.0)
    simulate(P, np.full(10, P.i_load_avg), dt=P.max_dt)


def test_parameter_validation():
    with pytest.raises(ValueError):
        simulate(P.with_values(c_load=0.0), np.ones(4))
    with pytest.raises(ValueError):
        simulate(P.with_values(g_ds=float("inf")), np.ones(4))
    with pytest.raises(ValueError):
        simulate(P, np.array([P.i_load_avg, np.nan]))
    with pytest.warns(RuntimeWarning):
        P.with_values(g_ds=2e-2).validate()


def test_divergence_reports_time():
    load = np.full(20000, P.i_load_avg)
    load[100:] += 50e-3
    with pytest.raises(SimulationDiverged) as e:
        simulate(P, load)
    assert e.value.time > 100 * P.default_dt
    assert not 0 <= e.value.v <= P.v_dd


def test_spike_droop_and_charge_conservation():
    dt = P.default_dt
    n = int(round(200e-9 / dt))
    spike = int(round(10e-9 / dt))
    load = np.full(n, P.i_load_avg)
    load[100:100 + spike] += 1e-3
    res = simulate(P, load, dt)
    assert 5e-3 <= res.droop_max <= 15e-3
    assert res.charge_residual() <= 1e-3
    # the source barely moves: that is the attenuated signature
    i_cs = res.i_supply - P.i_opamp
    assert np.ptp(i_cs) < 1e-3 / 400


def test_bleed_clamped_and_smc_engages_on_sustained_step():
    load = np.full(30000, P.i_load_avg)
    load[1000:] += 1.5e-3  # more than the bleed bias can absorb
    res = simulate(P, load)
    assert res.i_bleed.min() >= P.bleed_min and res.i_bleed.max() <= P.bleed_max
    assert res.i_bleed.min() == P.bleed_min
    assert len(res.smc_events) > 0
    for t, old, new in res.smc_events:
        k = int(round(t / res.dt)) - 1
        err = res.v_reg[k] - P.v_target
        assert abs(err) > P.delta
        assert new - old == pytest.approx(-P.i_cs_step if err > 0 else P.i_cs_step)
        assert (k + 1) % P.smc_period == 0
    # the array was stepped up until the loop could regulate again
    assert res.i_cs_setting[-1] > P.i_cs


def test_no_smc_events_inside_guard_band():
    rng = np.random.default_rng(0)
    load = P.i_load_avg + 0.5e-3 * rng.standard_normal(20000)
    res = simulate(P, load)
    assert np.max(np.abs(res.v_reg - P.v_target)) < P.delta
    assert res.smc_events == []


def test_batch_matches_single_simulation():
    rng = np.random.default_rng(3)
    T = 10e-9
    loads = P.i_load_avg + 1e-3 * rng.standard_normal((3, 8))
    out, summary = simulate_traces(P, loads, T)
    substeps = math.ceil(T / P.default_dt)
    dt = T / substeps
    for i in range(3):
        res = simulate(P, np.repeat(loads[i], substeps), dt)
        expect = res.i_supply.reshape(8, substeps).mean(axis=1)
        assert np.allclose(out[i], expect, rtol=0, atol=1e-15)
        assert summary.droop_max[i] == pytest.approx(max(0.0, res.droop_max), abs=1e-15)
    assert np.all(summary.charge_residual <= 1e-3)
    assert np.all(summary.smc_events == 0)


def test_supply_variation_falls_with_r_ds():
    rng = np.random.default_rng(5)
    loads = P.i_load_avg + 1e-3 * rng.standard_normal((16, 16))
    spread = []
    for r in (1e4, 1e5, 1e6, 1e7):
        out, _ = simulate_traces(P.with_values(g_ds=1 / r), loads, 10e-9)
        spread.append(np.std(out - out.mean(axis=0)))
    assert all(a > b for a, b in zip(spread, spread[1:]))

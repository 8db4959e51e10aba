"""Peak-shaving co-simulation: balance, curtailment, thermal, gain metrics.

Covers:
 1. SimConfig validation and JSON round trip
 2. thermal_step fixed point, steady state, monotonicity; derate_factor
 3. simulate_shaving hand examples (ideal grid identity, bare-grid
    curtailment, restart hold-down timing)
 4. Grid cap and ramp-violation reporting
 5. Dummy-load scheduling under a tight ramp and its thermal effect
 6. computational_gain identity, constructed +100%, preset ordering
 7. gpus_saved hand checks and monotonicity
 8. Whole-run conservation on every run via the run_sim helper
 9. Result CSV / summary JSON export layout

Every simulation here goes through conftest.run_sim, which asserts the
per-step power balance, the grid cap, and exact device bookkeeping.
"""

import io
import json
import math

import numpy as np
import pytest

import powershave as ps
from powershave import SimConfig, ThresholdSpec
from powershave.devices import builtin_device_spec

from conftest import loose_config, make_trace, run_sim


# ---------------------------------------------------------------------------
# 1. SimConfig
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(p_infra_w=-1.0)
    with pytest.raises(ValueError):
        SimConfig(grid_ramp_limit_w_per_s=0.0)
    with pytest.raises(ValueError):
        SimConfig(restart_penalty_s=-0.5)
    with pytest.raises(ValueError):
        SimConfig(gpu_unit_w=0.0)
    with pytest.raises(ValueError):
        SimConfig(thermal_tau_s=0.0)


def test_config_json_round_trip():
    cfg = SimConfig(threshold=ThresholdSpec(absolute_w=9000.0), p_infra_w=500.0,
                    restart_penalty_s=30.0)
    buf = io.StringIO()
    ps.write_sim_config(cfg, buf)
    back = ps.load_sim_config(io.StringIO(buf.getvalue()))
    assert back == cfg


def test_config_defaults_sane():
    cfg = SimConfig()
    assert cfg.threshold.fraction_of_max == pytest.approx(0.7)
    assert cfg.gpu_unit_w == 700.0
    assert cfg.heat_factor == pytest.approx(1.3)
    assert cfg.restart_penalty_s == 60.0


# ---------------------------------------------------------------------------
# 2. Thermal proxy
# ---------------------------------------------------------------------------

def test_thermal_fixed_point():
    cfg = SimConfig()
    t = ps.thermal_step(cfg.t_ambient_c, 0.0, cfg, 0.5)
    assert t == pytest.approx(cfg.t_ambient_c)


def test_thermal_steady_state():
    # Constant heat for many time constants settles within 1% of the
    # analytic steady state t_ambient + heat * k_scale.
    cfg = SimConfig()
    heat = 90000.0
    target = cfg.t_ambient_c + heat * cfg.k_scale_c_per_w
    t = cfg.t_ambient_c
    dt = 0.5
    for _ in range(int(12 * cfg.thermal_tau_s / dt)):
        t = ps.thermal_step(t, heat, cfg, dt)
    assert abs(t - target) <= 0.01 * abs(target - cfg.t_ambient_c)
    print(f"thermal steady state {t:.3f} C vs analytic {target:.3f} C")


def test_thermal_monotone_in_heat():
    cfg = SimConfig()
    t1 = ps.thermal_step(40.0, 50000.0, cfg, 0.1)
    t2 = ps.thermal_step(40.0, 90000.0, cfg, 0.1)
    assert t2 > t1


def test_thermal_full_power_hits_design_max():
    # At nameplate-scale heat input the node settles at t_max_c.
    cfg = SimConfig()
    target = cfg.t_ambient_c + cfg.thermal_ref_power_w * cfg.k_scale_c_per_w
    assert target == pytest.approx(cfg.t_max_c)


def test_derate_factor():
    cfg = SimConfig()
    assert ps.derate_factor(cfg.t_derate_c - 5.0, cfg) == 1.0
    assert ps.derate_factor(cfg.t_derate_c, cfg) == 1.0
    over = ps.derate_factor(cfg.t_derate_c + 10.0, cfg)
    assert over == pytest.approx(1.0 - 10.0 * cfg.derate_slope_per_c)
    # Far past the knee the factor floors at zero.
    assert ps.derate_factor(cfg.t_derate_c + 1e4, cfg) == 0.0


# ---------------------------------------------------------------------------
# 3. Hand examples
# ---------------------------------------------------------------------------

def test_ideal_grid_identity():
    tr = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=600.0), p_infra_w=0.0,
                       restart_penalty_s=0.0)
    r = run_sim(tr, "ideal", cfg)
    np.testing.assert_allclose(r.p_grid, np.minimum(tr.samples, 600.0), atol=1e-9)
    np.testing.assert_allclose(r.curtailed_w, 0.0, atol=1e-12)
    assert r.total_unserved_energy_j == 0.0
    assert np.all(r.stored_j == 0.0)


def test_bare_grid_hand_example():
    # No device, threshold 600 W, restart 0: the 900 W step sheds 300 W,
    # one GPU unit at the peak.
    tr = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=600.0), p_infra_w=0.0,
                       restart_penalty_s=0.0)
    r = run_sim(tr, "none", cfg)
    np.testing.assert_allclose(r.curtailed_w, [0.0, 300.0, 0.0], atol=1e-12)
    assert math.ceil(float(r.curtailed_w.max()) / cfg.gpu_unit_w) == 1
    assert r.curtailed_gpu_seconds == pytest.approx(0.01)
    assert r.unserved_spike_count == 1
    assert r.total_unserved_energy_j == pytest.approx(3.0)


def test_restart_holds_shed_units_down():
    # 1400 W for one step sheds two 700 W units; with a 0.05 s restart
    # penalty they stay down for exactly five 0.01 s steps afterwards.
    samples = [1400.0] + [300.0] * 9
    tr = make_trace(samples, dt=0.01, rack_max=2000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=700.0), p_infra_w=0.0,
                       restart_penalty_s=0.05)
    r = run_sim(tr, "none", cfg)
    np.testing.assert_allclose(r.curtailed_w,
                               [700.0] + [300.0] * 5 + [0.0] * 4, atol=1e-12)
    assert r.unserved_spike_count == 1


def test_restart_zero_recovers_next_step():
    samples = [1400.0] + [300.0] * 3
    tr = make_trace(samples, dt=0.01, rack_max=2000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=700.0), p_infra_w=0.0,
                       restart_penalty_s=0.0)
    r = run_sim(tr, "none", cfg)
    np.testing.assert_allclose(r.curtailed_w, [700.0, 0.0, 0.0, 0.0], atol=1e-12)


def test_infra_power_rides_on_top():
    tr = make_trace([300.0, 300.0], dt=0.01, rack_max=1000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=600.0), p_infra_w=250.0,
                       restart_penalty_s=0.0)
    r = run_sim(tr, "none", cfg)
    np.testing.assert_allclose(r.p_grid, 550.0, atol=1e-9)


def test_device_covers_deficit():
    # A capacitor with plenty of charge serves a short super-threshold
    # burst entirely.
    tr = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    spec = ps.DeviceSpec(kind="capacitor", energy_capacity_j=50.0,
                         max_discharge_w=1000.0, max_charge_w=1000.0,
                         response_tau_s=0.0, switch_latency_s=0.0,
                         round_trip_efficiency=1.0, soc_min_frac=0.0,
                         soc_max_frac=1.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=600.0), p_infra_w=0.0,
                       restart_penalty_s=0.0)
    r = run_sim(tr, spec, cfg)
    np.testing.assert_allclose(r.curtailed_w, 0.0, atol=1e-12)
    assert r.p_ext_discharge[1] == pytest.approx(300.0)
    assert r.final_stored_j == pytest.approx(50.0 - 3.0)


# ---------------------------------------------------------------------------
# 4. Grid cap and ramp reporting
# ---------------------------------------------------------------------------

def test_grid_cap_all_strategies(default_trace, preset_results):
    cap = (preset_results["none"].threshold_w
           + preset_results["none"].config.p_infra_w)
    for name, r in preset_results.items():
        assert float(r.p_grid.max()) <= cap + 1e-6, name


def test_ramp_violations_recomputed(default_trace, preset_results):
    # The report lists exactly the steps whose grid move exceeds the limit.
    for name, r in preset_results.items():
        step = r.config.grid_ramp_limit_w_per_s * r.dt_s
        bad = np.flatnonzero(np.abs(np.diff(r.p_grid)) > step * (1 + 1e-9) + 1e-9) + 1
        np.testing.assert_array_equal(bad, r.ramp_violation_steps, err_msg=name)


def test_loose_ramp_has_no_violations():
    tr = make_trace([300.0, 900.0, 300.0, 800.0], dt=0.01, rack_max=1000.0)
    r = run_sim(tr, "none", loose_config(threshold=ThresholdSpec(absolute_w=950.0),
                                         restart_penalty_s=0.0))
    assert r.ramp_violation_count == 0


def test_tracked_feed_respects_ramp():
    # With no device and a tight ramp, the feed chases demand at the
    # allowed slope; the balance comes out as dummy load on the way down.
    samples = [500.0] * 50 + [100.0] * 50
    tr = make_trace(samples, dt=0.01, rack_max=1000.0)
    cfg = SimConfig(threshold=ThresholdSpec(absolute_w=800.0), p_infra_w=0.0,
                    grid_ramp_limit_w_per_s=1000.0, restart_penalty_s=0.0)
    r = run_sim(tr, "none", cfg)
    assert r.ramp_violation_count == 0
    # 400 W drop at 10 W per step takes 40 steps of dummy burn.
    assert r.p_dummy[50] == pytest.approx(390.0)
    assert r.total_dummy_energy_j == pytest.approx(sum(390.0 - 10.0 * k for k in range(39)) * 0.01)


# ---------------------------------------------------------------------------
# 5. Dummy load thermal effect
# ---------------------------------------------------------------------------

def test_dummy_keeps_rack_warm():
    # Same trace, same strategy; the tight-ramp run burns dummy power in
    # the valley, so its temperature can never fall below the loose-ramp
    # run's on any step.
    rng = np.random.default_rng(99)
    base = np.concatenate([np.full(80, 500.0), np.full(200, 60.0),
                           np.full(80, 500.0)])
    tr = make_trace(base + rng.uniform(0.0, 5.0, base.size), dt=0.01,
                    rack_max=1000.0)
    cfg_tight = SimConfig(threshold=ThresholdSpec(absolute_w=800.0), p_infra_w=0.0,
                          grid_ramp_limit_w_per_s=500.0, restart_penalty_s=0.0)
    cfg_loose = loose_config(threshold=ThresholdSpec(absolute_w=800.0), p_infra_w=0.0,
                             restart_penalty_s=0.0)
    r_dummy = run_sim(tr, "none", cfg_tight)
    r_free = run_sim(tr, "none", cfg_loose)
    assert r_dummy.total_dummy_energy_j > 0.0
    assert r_free.total_dummy_energy_j == 0.0
    assert np.all(r_dummy.temperature_c >= r_free.temperature_c - 1e-9)
    valley = slice(90, 270)
    assert (r_dummy.temperature_c[valley].min()
            >= r_free.temperature_c[valley].min())


# ---------------------------------------------------------------------------
# 6. computational_gain
# ---------------------------------------------------------------------------

def test_gain_identity(default_trace, preset_results):
    assert ps.computational_gain(preset_results["none"], preset_results["none"]) == 0.0


def test_gain_constructed_plus_100():
    # Flat demand at double the threshold: the bare grid serves exactly
    # half, the ideal device serves all, so the gain is +100%.
    tr = make_trace(np.full(2000, 1400.0), dt=0.01, rack_max=2000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=700.0), p_infra_w=0.0,
                       restart_penalty_s=0.0)
    r_none = run_sim(tr, "none", cfg)
    r_ideal = run_sim(tr, "ideal", cfg)
    assert ps.computational_gain(r_ideal, r_none) == pytest.approx(100.0, abs=1e-9)


def test_gain_orderings(preset_results):
    base = preset_results["none"]
    g = {k: ps.computational_gain(r, base) for k, r in preset_results.items()}
    assert g["battery"] > g["supercap"]
    assert g["supercap"] > g["capacitor"]
    assert g["ideal"] >= g["battery"]
    print("gains vs none:",
          {k: f"{v:+.3f}%" for k, v in g.items() if k != "none"})


def test_gain_rejects_mismatched_lengths():
    tr_a = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    tr_b = make_trace([300.0, 900.0], dt=0.01, rack_max=1000.0)
    cfg = loose_config(threshold=ThresholdSpec(absolute_w=600.0),
                       restart_penalty_s=0.0)
    with pytest.raises(ValueError):
        ps.computational_gain(run_sim(tr_a, "none", cfg), run_sim(tr_b, "none", cfg))


# ---------------------------------------------------------------------------
# 7. gpus_saved
# ---------------------------------------------------------------------------

def test_gpus_saved_hand_value():
    # One qualifying spike with peak excess 2950 W: ceil(2950/700) = 5.
    samples = [1000.0] * 10 + [5000.0 + 2950.0] * 4 + [1000.0] * 10
    tr = make_trace(samples, dt=0.01, rack_max=10000.0)
    assert ps.gpus_saved(tr, threshold_frac=0.5, min_burst_s=0.02,
                         gpu_unit_w=700.0) == 5


def test_gpus_saved_zero_cases():
    quiet = make_trace([1000.0] * 20, dt=0.01, rack_max=10000.0)
    assert ps.gpus_saved(quiet, 0.5, 0.0, 700.0) == 0
    spiky = make_trace([1000.0] * 10 + [8000.0] * 2 + [1000.0] * 10,
                       dt=0.01, rack_max=10000.0)
    # Spike lasts 0.02 s; demanding 0.5 s empties the qualifying set.
    assert ps.gpus_saved(spiky, 0.5, 0.5, 700.0) == 0


def test_gpus_saved_validation():
    tr = make_trace([1000.0] * 20, dt=0.01, rack_max=10000.0)
    with pytest.raises(ValueError):
        ps.gpus_saved(tr, 0.0, 0.0, 700.0)
    with pytest.raises(ValueError):
        ps.gpus_saved(tr, 1.5, 0.0, 700.0)
    with pytest.raises(ValueError):
        ps.gpus_saved(tr, 0.5, -0.1, 700.0)
    with pytest.raises(ValueError):
        ps.gpus_saved(tr, 0.5, 0.0, 0.0)


def test_gpus_saved_monotone_random():
    rng = np.random.default_rng(1234)
    for _ in range(10):
        samples = rng.uniform(100.0, 9000.0, size=800)
        tr = make_trace(samples, dt=0.005, rack_max=10000.0)
        fracs = [0.3, 0.5, 0.7, 0.9]
        bursts = [0.0, 0.01, 0.05]
        grid = [[ps.gpus_saved(tr, f, b, 700.0) for b in bursts] for f in fracs]
        for row in grid:
            assert all(row[j] >= row[j + 1] for j in range(len(row) - 1))
        for j in range(len(bursts)):
            col = [grid[i][j] for i in range(len(fracs))]
            assert all(col[i] >= col[i + 1] for i in range(len(col) - 1))


# ---------------------------------------------------------------------------
# 8. Strategy comparisons on the calibrated trace
# ---------------------------------------------------------------------------

def test_battery_beats_capacitor_on_events(preset_results):
    assert (preset_results["battery"].unserved_spike_count
            < preset_results["capacitor"].unserved_spike_count)


def test_dummy_energy_pattern(preset_results):
    cap = preset_results["capacitor"].total_dummy_energy_j
    sup = preset_results["supercap"].total_dummy_energy_j
    bat = preset_results["battery"].total_dummy_energy_j
    assert cap > 0.0
    assert sup <= 0.01 * cap
    assert bat == 0.0
    print(f"dummy energy: capacitor {cap:.0f} J, supercap {sup:.1f} J, battery {bat:.0f} J")


def test_ideal_beats_presets(preset_results):
    base = preset_results["none"]
    g_ideal = ps.computational_gain(preset_results["ideal"], base)
    for name in ("capacitor", "supercap", "battery"):
        assert g_ideal >= ps.computational_gain(preset_results[name], base)
    assert preset_results["ideal"].total_unserved_energy_j == 0.0


def test_none_strategy_uses_no_device(preset_results):
    r = preset_results["none"]
    assert np.all(r.p_ext_discharge == 0.0)
    assert np.all(r.p_ext_charge == 0.0)
    assert np.all(r.stored_j == 0.0)


# ---------------------------------------------------------------------------
# 9. Export formats
# ---------------------------------------------------------------------------

def test_result_csv_layout():
    tr = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    r = run_sim(tr, "none", loose_config(threshold=ThresholdSpec(absolute_w=600.0),
                                         restart_penalty_s=0.0))
    buf = io.StringIO()
    ps.write_result_csv(r, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == ("p_comp_demand,p_comp_served,p_grid,p_ext_discharge,"
                        "p_ext_charge,p_dummy,curtailed_w,stored_j,temperature_c")
    assert len(lines) == 1 + r.n_steps
    first = [float(x) for x in lines[1].split(",")]
    assert first[0] == 300.0


def test_result_summary_json_fields():
    tr = make_trace([300.0, 900.0, 300.0], dt=0.01, rack_max=1000.0)
    r = run_sim(tr, "ideal", loose_config(threshold=ThresholdSpec(absolute_w=600.0),
                                          restart_penalty_s=0.0))
    buf = io.StringIO()
    ps.write_result_summary_json(r, buf)
    doc = json.loads(buf.getvalue())
    for key in ("strategy", "threshold_w", "total_dummy_energy_j",
                "total_unserved_energy_j", "curtailed_gpu_seconds",
                "unserved_spike_count", "device_energy_throughput_j",
                "final_stored_j", "peak_grid_w", "ramp_violation_count",
                "useful_compute_j"):
        assert key in doc
    assert doc["strategy"] == "ideal"
    assert doc["total_unserved_energy_j"] == 0.0


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))

"""Shared fixtures and invariant helpers for the test suite.

Every simulation a test runs should go through run_sim(), which re-checks
the per-step power balance, the grid cap, and the whole-run device energy
bookkeeping before handing the result back.  That way the conservation
invariants are exercised by every suite run, not just by one dedicated
test.
"""

import numpy as np
import pytest

import powershave as ps
from powershave.devices import DeviceSpec

# Per-step balance residual allowance, as a fraction of rack_max_w.
BALANCE_TOL_FRAC = 1e-6
# Whole-run stored-energy closure, relative to the device capacity.
BOOKKEEPING_REL = 1e-9


def check_result_invariants(result, spec=None):
    """Assert the conservation and sanity invariants on one ShavingResult."""
    cfg = result.config
    n = result.n_steps

    series = (result.p_comp_demand, result.p_comp_served, result.p_grid,
              result.p_ext_discharge, result.p_ext_charge, result.p_dummy,
              result.curtailed_w, result.stored_j, result.temperature_c)
    for arr in series:
        assert arr.shape == (n,)
    for arr in series[:-1]:        # temperature may sit below zero only if ambient does
        assert float(arr.min()) >= 0.0

    # Power balance: grid + discharge == infra + served + dummy + charge.
    residual = np.abs((result.p_grid + result.p_ext_discharge)
                      - (cfg.p_infra_w + result.p_comp_served
                         + result.p_dummy + result.p_ext_charge))
    worst = float(residual.max()) if n else 0.0
    assert worst <= BALANCE_TOL_FRAC * result.rack_max_w, (
        f"balance residual {worst} exceeds {BALANCE_TOL_FRAC * result.rack_max_w}")

    # Grid cap: compute-serving draw never exceeds threshold + infra.
    cap = result.threshold_w + cfg.p_infra_w
    assert float(result.p_grid.max()) <= cap + 1e-9 * max(1.0, cap)

    # Served never exceeds demand; curtailment is the exact gap.
    assert np.all(result.p_comp_served <= result.p_comp_demand + 1e-9)
    gap = result.p_comp_demand - result.p_comp_served
    assert np.allclose(result.curtailed_w, gap, rtol=0.0, atol=1e-9)

    # Whole-run device bookkeeping, exact up to float accumulation.
    if isinstance(spec, DeviceSpec):
        start = spec.soc_max_frac * spec.energy_capacity_j
        flow = float(np.sum(result.p_ext_charge * spec.round_trip_efficiency
                            - result.p_ext_discharge) * result.dt_s)
        closure = abs((result.final_stored_j - start) - flow)
        assert closure <= BOOKKEEPING_REL * max(1.0, spec.energy_capacity_j), (
            f"stored-energy closure off by {closure} J")
        lo = spec.soc_min_frac * spec.energy_capacity_j
        hi = spec.soc_max_frac * spec.energy_capacity_j
        slack = 1e-9 * max(1.0, spec.energy_capacity_j)
        assert float(result.stored_j.min()) >= lo - slack
        assert float(result.stored_j.max()) <= hi + slack

    return worst


def run_sim(trace, spec, config):
    """simulate_shaving plus the invariant checks; use this in tests."""
    result = ps.simulate_shaving(trace, spec, config)
    check_result_invariants(result, spec if isinstance(spec, DeviceSpec) else None)
    return result


def loose_config(**overrides):
    """SimConfig with the ramp constraint effectively off, for hand examples."""
    base = dict(grid_ramp_limit_w_per_s=1e12)
    base.update(overrides)
    return ps.SimConfig(**base)


def make_trace(samples, dt=0.01, rack_max=None, label="test"):
    samples = np.asarray(samples, dtype=float)
    if rack_max is None:
        rack_max = max(1.0, float(samples.max()) * 1.25)
    return ps.PowerTrace(dt_s=dt, samples=samples, rack_max_w=rack_max,
                         source_label=label)


@pytest.fixture(scope="session")
def default_trace():
    """The shipped calibrated synthetic trace (600 s at 5 ms, 200 accelerators)."""
    return ps.synthesize_trace(ps.DEFAULT_SYNTH_CONFIG)


@pytest.fixture(scope="session")
def default_config():
    return ps.SimConfig()


@pytest.fixture(scope="session")
def preset_results(default_trace, default_config):
    """Default-config runs of all five strategies on the calibrated trace."""
    out = {}
    for name in ("none", "ideal"):
        out[name] = run_sim(default_trace, name, default_config)
    for name in ("capacitor", "supercap", "battery"):
        spec = ps.builtin_device_spec(name)
        out[name] = run_sim(default_trace, spec, default_config)
    return out

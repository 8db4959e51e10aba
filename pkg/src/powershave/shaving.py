"""Grid draw simulation for a rack trace with a peak-shaving device.

Power balance per step, all quantities in watts:

    p_grid + p_ext_discharge = p_infra + p_comp_served + p_dummy + p_ext_charge

The grid feed is capped at threshold + p_infra_w and is rate-limited by
grid_ramp_limit_w_per_s.  How the feed is driven depends on the shaving
strategy:

* "none" and passive devices (capacitor, supercapacitor) sit behind a
  ramp-following feed: the feed chases the compute demand no faster than
  the ramp limit, the storage element buffers the difference in both
  directions, and surplus the element cannot absorb burns off as dummy
  load so the feed never has to fall faster than allowed.
* battery ("active") and the ideal device modulate the feed directly:
  the feed follows demand up to the cap and the device injects whatever
  exceeds the cap.  No dummy load is ever scheduled; fast feed movements
  are charged against the ramp limit in the violation report.

Whenever the device cannot cover a deficit, the feed escalates above its
rate-limited path, up to the cap; each step whose feed moves faster than
the ramp limit allows is recorded in ramp_violation_steps.  Demand above
the cap that the device cannot serve is curtailed: whole accelerators
are shed (gpu_unit_w each) and, when restart_penalty_s is positive, stay
down through the rest of the shortfall and for restart_penalty_s beyond
its end before they may serve again.

A lumped first-order thermal node integrates the heat of served compute
plus dummy load; temperatures past t_derate_c de-rate the value of
served energy in the computational-gain metric (the simulation itself
never throttles).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace, asdict

import numpy as np

from .trace import PowerTrace
from .spikes import ThresholdSpec
from .devices import DeviceSpec, PASSIVE_KINDS, device_step, init_state

__all__ = [
    "SimConfig",
    "ShavingResult",
    "simulate_shaving",
    "thermal_step",
    "derate_factor",
    "useful_compute_j",
    "computational_gain",
    "gpus_saved",
    "load_sim_config",
    "write_sim_config",
    "result_series_dict",
    "result_summary_dict",
    "write_result_csv",
    "write_result_summary_json",
]

# Series column order for CSV export.
_SERIES_NAMES = (
    "p_comp_demand", "p_comp_served", "p_grid", "p_ext_discharge",
    "p_ext_charge", "p_dummy", "curtailed_w", "stored_j", "temperature_c",
)

_W_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    threshold: ThresholdSpec = ThresholdSpec(fraction_of_max=0.7)
    p_infra_w: float = 20000.0
    # One tenth of the default rack scale per second: the feed follows
    # second-scale load swings but not millisecond burst edges.
    grid_ramp_limit_w_per_s: float = 14000.0
    restart_penalty_s: float = 60.0
    gpu_unit_w: float = 700.0
    heat_factor: float = 1.3
    thermal_tau_s: float = 120.0
    t_ambient_c: float = 25.0
    t_max_c: float = 75.0
    t_derate_c: float = 70.0
    derate_slope_per_c: float = 0.01
    thermal_ref_power_w: float = 140000.0

    def __post_init__(self):
        if not isinstance(self.threshold, ThresholdSpec):
            raise ValueError("threshold must be a ThresholdSpec")
        if self.p_infra_w < 0.0:
            raise ValueError("p_infra_w must be non-negative")
        if not (self.grid_ramp_limit_w_per_s > 0.0):
            raise ValueError("grid_ramp_limit_w_per_s must be positive")
        if self.restart_penalty_s < 0.0:
            raise ValueError("restart_penalty_s must be non-negative")
        if not (self.gpu_unit_w > 0.0):
            raise ValueError("gpu_unit_w must be positive")
        if not (self.heat_factor > 0.0):
            raise ValueError("heat_factor must be positive")
        if not (self.thermal_tau_s > 0.0):
            raise ValueError("thermal_tau_s must be positive")
        if not (self.t_max_c > self.t_ambient_c):
            raise ValueError("t_max_c must exceed t_ambient_c")
        if self.t_derate_c < self.t_ambient_c:
            raise ValueError("t_derate_c must be at least t_ambient_c")
        if self.derate_slope_per_c < 0.0:
            raise ValueError("derate_slope_per_c must be non-negative")
        if not (self.thermal_ref_power_w > 0.0):
            raise ValueError("thermal_ref_power_w must be positive")

    @property
    def k_scale_c_per_w(self) -> float:
        """Steady-state heating coefficient: holding thermal_ref_power_w of
        heat input settles the node at t_max_c."""
        return (self.t_max_c - self.t_ambient_c) / self.thermal_ref_power_w


def _config_to_dict(config: SimConfig) -> dict:
    d = asdict(config)
    thr = d.pop("threshold")
    d["threshold"] = {k: v for k, v in thr.items() if v is not None}
    return d


def write_sim_config(config: SimConfig, dest) -> None:
    text = json.dumps(_config_to_dict(config), indent=2, sort_keys=True) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_sim_config(source) -> SimConfig:
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad sim config JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError("sim config must be a JSON object")
    expected = set(SimConfig.__dataclass_fields__)
    unknown = set(data) - expected
    if unknown:
        raise ValueError(f"unknown sim config fields: {sorted(unknown)}")
    data = dict(data)
    if "threshold" in data:
        thr = data["threshold"]
        if not isinstance(thr, dict):
            raise ValueError("threshold must be an object")
        data["threshold"] = ThresholdSpec(**thr)
    return SimConfig(**data)


def thermal_step(temp_c: float, heat_input_w: float, config: SimConfig,
                 dt_s: float) -> float:
    """One explicit Euler step of the lumped rack thermal node."""
    if dt_s <= 0.0:
        raise ValueError("dt_s must be positive")
    drive = heat_input_w * config.k_scale_c_per_w - (temp_c - config.t_ambient_c)
    return temp_c + dt_s * drive / config.thermal_tau_s


def derate_factor(temp_c: float, config: SimConfig) -> float:
    """Capacity factor of served compute at the given rack temperature."""
    over = max(0.0, temp_c - config.t_derate_c)
    return max(0.0, 1.0 - config.derate_slope_per_c * over)


@dataclass(frozen=True)
class ShavingResult:
    """Per-step series plus run totals.  All series share the trace
    length; stored_j is identically zero for the "none" and "ideal"
    strategies (nothing finite to track)."""

    strategy: str
    threshold_w: float
    dt_s: float
    rack_max_w: float
    config: SimConfig
    p_comp_demand: np.ndarray
    p_comp_served: np.ndarray
    p_grid: np.ndarray
    p_ext_discharge: np.ndarray
    p_ext_charge: np.ndarray
    p_dummy: np.ndarray
    curtailed_w: np.ndarray
    stored_j: np.ndarray
    temperature_c: np.ndarray
    total_dummy_energy_j: float
    total_unserved_energy_j: float
    curtailed_gpu_seconds: float
    unserved_spike_count: int
    device_energy_throughput_j: float
    ramp_violation_steps: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.p_comp_demand.shape[0]

    @property
    def ramp_violation_count(self) -> int:
        return int(self.ramp_violation_steps.shape[0])

    @property
    def peak_grid_w(self) -> float:
        return float(self.p_grid.max()) if self.n_steps else 0.0

    @property
    def final_stored_j(self) -> float:
        return float(self.stored_j[-1]) if self.n_steps else 0.0


def _strategy_label(spec) -> str:
    if spec == "none" or spec is None:
        return "none"
    if spec == "ideal":
        return "ideal"
    if isinstance(spec, DeviceSpec):
        return spec.kind
    raise ValueError(f"device must be a DeviceSpec, 'none' or 'ideal'; got {spec!r}")


def simulate_shaving(trace: PowerTrace, spec, config: SimConfig) -> ShavingResult:
    """Run the step-by-step co-simulation; see the module docstring for
    the feed policies.  spec is a DeviceSpec, "none", or "ideal"."""
    if not isinstance(trace, PowerTrace):
        raise ValueError("trace must be a PowerTrace")
    if not isinstance(config, SimConfig):
        raise ValueError("config must be a SimConfig")
    strategy = _strategy_label(spec)

    theta = config.threshold.resolve(trace.rack_max_w)
    p_infra = config.p_infra_w
    cap = p_infra + theta
    dt = trace.dt_s
    r_step = config.grid_ramp_limit_w_per_s * dt
    gpu_w = config.gpu_unit_w
    n = trace.n_samples
    samples = trace.samples

    ideal = strategy == "ideal"
    device = spec if isinstance(spec, DeviceSpec) else None
    # Passive elements ride behind the ramp-following feed; a battery's
    # electronics steer the feed directly, as does the ideal device.
    if ideal:
        tracked_feed = False
    elif device is None:
        tracked_feed = True
    else:
        tracked_feed = device.kind in PASSIVE_KINDS

    dstate = None
    if device is not None:
        dstate = init_state(device)
        if device.kind == "battery":
            # The controller arms the inverter before the run starts, so
            # the first discharge needs no turnaround.
            dstate = replace(dstate, mode="discharging")

    served_a = np.zeros(n)
    grid_a = np.zeros(n)
    discharge_a = np.zeros(n)
    charge_a = np.zeros(n)
    dummy_a = np.zeros(n)
    curtailed_a = np.zeros(n)
    stored_a = np.zeros(n)
    temp_a = np.zeros(n)
    violations = []

    # Restart penalties: (expiry time, accelerators held down); the
    # effective count at any step is the max over active entries.  While a
    # shortfall event is open, the accelerators it has shed so far stay
    # down too, so a shed unit is blocked without gaps from the step it
    # drops until its restart hold expires.
    penalties = []
    in_event = False
    event_max_gpus = 0
    unserved_events = 0

    temp = config.t_ambient_c
    k_heat = config.heat_factor
    c_prev = 0.0
    g_prev = 0.0
    restart = config.restart_penalty_s

    for i in range(n):
        t_now = i * dt
        blocked = 0
        if restart > 0.0:
            if in_event:
                blocked = event_max_gpus
            if penalties:
                penalties = [p for p in penalties if p[0] > t_now + 1e-12]
                for _, g_cnt in penalties:
                    if g_cnt > blocked:
                        blocked = g_cnt

        demand = float(samples[i])
        d_eff = demand if not blocked else max(0.0, demand - blocked * gpu_w)
        if ideal:
            d_eff = demand

        need = p_infra + min(d_eff, theta)
        if tracked_feed and i > 0:
            c = min(max(need, c_prev - r_step), c_prev + r_step)
            if c > cap:
                c = cap
        else:
            c = need

        deficit = p_infra + d_eff - c
        if deficit < 0.0:
            deficit = 0.0
        surplus = c - need
        if surplus < 0.0:
            surplus = 0.0

        if ideal:
            delivered, absorbed = deficit, 0.0
        elif device is not None:
            request = deficit if deficit > 0.0 else 0.0
            offer = surplus if deficit <= 0.0 else 0.0
            delivered, absorbed, dstate = device_step(device, dstate, request, offer, dt)
        else:
            delivered, absorbed = 0.0, 0.0

        shortfall = deficit - delivered
        if shortfall < 0.0:
            shortfall = 0.0
        escal = min(shortfall, cap - c)
        live_short = shortfall - escal
        if live_short < _W_EPS:
            live_short = 0.0

        served = d_eff - live_short
        dummy = surplus - absorbed
        if dummy < 0.0:
            dummy = 0.0
        grid = p_infra + served + dummy + absorbed - delivered

        if i > 0 and abs(grid - g_prev) > r_step * (1.0 + 1e-9) + _W_EPS:
            violations.append(i)

        if live_short > 0.0:
            if not in_event:
                in_event = True
                event_max_gpus = 0
                unserved_events += 1
            shed = math.ceil(live_short / gpu_w - 1e-9)
            if restart > 0.0:
                # Residual shortfall past the units already held down
                # sheds that many more.
                event_max_gpus += shed
            elif shed > event_max_gpus:
                event_max_gpus = shed
        elif in_event:
            # Shedding has ended the shortfall; the downed units hold for
            # the restart penalty from this step on.
            in_event = False
            if restart > 0.0 and event_max_gpus > 0:
                penalties.append((t_now + restart, event_max_gpus))

        temp = thermal_step(temp, k_heat * (served + dummy), config, dt)

        served_a[i] = served
        grid_a[i] = grid
        discharge_a[i] = delivered
        charge_a[i] = absorbed
        dummy_a[i] = dummy
        curtailed_a[i] = demand - served
        stored_a[i] = dstate.stored_j if dstate is not None else 0.0
        temp_a[i] = temp
        c_prev = c
        g_prev = grid

    demand_a = samples.astype(float, copy=True)
    gpu_steps = np.ceil(np.maximum(curtailed_a, 0.0) / gpu_w - 1e-9)
    return ShavingResult(
        strategy=strategy,
        threshold_w=theta,
        dt_s=dt,
        rack_max_w=trace.rack_max_w,
        config=config,
        p_comp_demand=demand_a,
        p_comp_served=served_a,
        p_grid=grid_a,
        p_ext_discharge=discharge_a,
        p_ext_charge=charge_a,
        p_dummy=dummy_a,
        curtailed_w=curtailed_a,
        stored_j=stored_a,
        temperature_c=temp_a,
        total_dummy_energy_j=float(dummy_a.sum() * dt),
        total_unserved_energy_j=float(curtailed_a.sum() * dt),
        curtailed_gpu_seconds=float(gpu_steps.sum() * dt),
        unserved_spike_count=unserved_events,
        device_energy_throughput_j=float((discharge_a.sum() + charge_a.sum()) * dt),
        ramp_violation_steps=np.asarray(violations, dtype=np.int64),
    )


def useful_compute_j(result: ShavingResult) -> float:
    """Served energy weighted by the thermal de-rating capacity factor."""
    cfg = result.config
    over = np.maximum(0.0, result.temperature_c - cfg.t_derate_c)
    factor = np.maximum(0.0, 1.0 - cfg.derate_slope_per_c * over)
    return float(np.sum(result.p_comp_served * factor) * result.dt_s)


def computational_gain(result: ShavingResult, baseline: ShavingResult) -> float:
    """Percent change in de-rating-weighted served energy vs a baseline
    run of the same trace and config."""
    if result.n_steps != baseline.n_steps or result.dt_s != baseline.dt_s:
        raise ValueError("results come from different traces")
    if result.threshold_w != baseline.threshold_w or result.config != baseline.config:
        raise ValueError("results come from different configs")
    useful_base = useful_compute_j(baseline)
    if useful_base <= 0.0:
        raise ValueError("baseline served no useful energy; gain undefined")
    return 100.0 * (useful_compute_j(result) - useful_base) / useful_base


def gpus_saved(trace: PowerTrace, threshold_frac: float, min_burst_s: float,
               gpu_unit_w: float = 700.0) -> int:
    """Accelerators spared from shutdown if spikes longer than min_burst_s
    above the threshold could be absorbed: ceil of the worst qualifying
    peak excess over the per-unit draw."""
    from .spikes import detect_spikes

    if not (0.0 < threshold_frac <= 1.0):
        raise ValueError(f"threshold_frac must be in (0, 1], got {threshold_frac}")
    if min_burst_s < 0.0:
        raise ValueError("min_burst_s must be non-negative")
    if not (gpu_unit_w > 0.0):
        raise ValueError("gpu_unit_w must be positive")
    theta = threshold_frac * trace.rack_max_w
    worst = 0.0
    for spike in detect_spikes(trace, ThresholdSpec(absolute_w=theta)):
        if spike.duration_s + 1e-12 >= min_burst_s and spike.peak_excess_w > worst:
            worst = spike.peak_excess_w
    if worst <= 0.0:
        return 0
    return math.ceil(worst / gpu_unit_w - 1e-9)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def result_series_dict(result: ShavingResult) -> dict:
    return {name: getattr(result, name) for name in _SERIES_NAMES}


def result_summary_dict(result: ShavingResult) -> dict:
    return {
        "strategy": result.strategy,
        "threshold_w": result.threshold_w,
        "dt_s": result.dt_s,
        "rack_max_w": result.rack_max_w,
        "n_steps": result.n_steps,
        "total_dummy_energy_j": result.total_dummy_energy_j,
        "total_unserved_energy_j": result.total_unserved_energy_j,
        "curtailed_gpu_seconds": result.curtailed_gpu_seconds,
        "unserved_spike_count": result.unserved_spike_count,
        "device_energy_throughput_j": result.device_energy_throughput_j,
        "final_stored_j": result.final_stored_j,
        "peak_grid_w": result.peak_grid_w,
        "ramp_violation_count": result.ramp_violation_count,
        "useful_compute_j": useful_compute_j(result),
    }


def write_result_csv(result: ShavingResult, dest) -> None:
    """One row per step, columns exactly the series names."""
    lines = [",".join(_SERIES_NAMES)]
    cols = [getattr(result, name) for name in _SERIES_NAMES]
    for i in range(result.n_steps):
        lines.append(",".join(repr(float(col[i])) for col in cols))
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_result_summary_json(result: ShavingResult, dest) -> None:
    text = json.dumps(result_summary_dict(result), indent=2, sort_keys=True) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)

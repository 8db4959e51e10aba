"""Peak-shaving storage device models.

Two families share one step contract:

* passive (capacitor, supercapacitor): deliver through a first-order lag
  with time constant response_tau_s.  Output rises toward the feasible
  target as 1 - exp(-t / tau) and is cut instantly when the target falls,
  so a device never delivers more than asked.  Recharge is not lagged:
  absorption is limited only by max_charge_w and the headroom below
  soc_max_frac.  No mode machinery.
* battery: responds instantly once in the right mode, but reversing
  between charging and discharging (or leaving idle) costs
  switch_latency_s during which it neither delivers nor absorbs.  The
  round-trip efficiency is applied entirely on the charge side.

Energy bookkeeping is exact: stored_j decreases by delivered * dt and
increases by absorbed * dt * round_trip_efficiency, and stays inside the
[soc_min_frac, soc_max_frac] window of the capacity.  Devices start full
at soc_max_frac.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

__all__ = [
    "PASSIVE_KINDS",
    "DEVICE_KINDS",
    "BUILTIN_DEVICE_NAMES",
    "DeviceSpec",
    "DeviceState",
    "capacitor_energy",
    "init_state",
    "device_step",
    "load_device_spec",
    "write_device_spec",
    "builtin_device_spec",
]

PASSIVE_KINDS = ("capacitor", "supercapacitor")
DEVICE_KINDS = PASSIVE_KINDS + ("battery",)

# Names accepted anywhere a device spec file is accepted.
BUILTIN_DEVICE_NAMES = ("capacitor", "supercap", "battery")

_TIME_EPS = 1e-12


def capacitor_energy(capacitance_f: float, v_max: float, v_min: float = 0.0) -> float:
    """Usable energy of a capacitor bank swung between two voltages (J)."""
    if not (capacitance_f > 0.0):
        raise ValueError(f"capacitance_f must be positive, got {capacitance_f}")
    if v_min < 0.0:
        raise ValueError(f"v_min must be non-negative, got {v_min}")
    if not (v_max >= v_min):
        # Equal voltages are a legal empty window (0 J usable).
        raise ValueError(f"v_max must not be below v_min, got v_max={v_max} v_min={v_min}")
    return 0.5 * capacitance_f * (v_max ** 2 - v_min ** 2)


@dataclass(frozen=True)
class DeviceSpec:
    kind: str
    energy_capacity_j: float
    max_discharge_w: float
    max_charge_w: float
    response_tau_s: float = 0.0
    switch_latency_s: float = 0.0
    round_trip_efficiency: float = 1.0
    soc_min_frac: float = 0.0
    soc_max_frac: float = 1.0

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValueError(f"kind must be one of {DEVICE_KINDS}, got {self.kind!r}")
        if not (self.energy_capacity_j > 0.0):
            raise ValueError("energy_capacity_j must be positive")
        if not (self.max_discharge_w > 0.0):
            raise ValueError("max_discharge_w must be positive")
        if self.max_charge_w < 0.0:
            raise ValueError("max_charge_w must be non-negative")
        if self.response_tau_s < 0.0:
            raise ValueError("response_tau_s must be non-negative")
        if self.switch_latency_s < 0.0:
            raise ValueError("switch_latency_s must be non-negative")
        if not (0.0 < self.round_trip_efficiency <= 1.0):
            raise ValueError("round_trip_efficiency must be in (0, 1]")
        if not (0.0 <= self.soc_min_frac < self.soc_max_frac <= 1.0):
            raise ValueError("need 0 <= soc_min_frac < soc_max_frac <= 1")
        if self.kind in PASSIVE_KINDS:
            if self.round_trip_efficiency != 1.0:
                raise ValueError("passive kinds have round_trip_efficiency fixed at 1.0")
            if self.switch_latency_s != 0.0:
                raise ValueError("passive kinds have no mode switching")
        else:
            if self.response_tau_s != 0.0:
                raise ValueError("battery kind responds through switching, not lag")


@dataclass(frozen=True)
class DeviceState:
    """stored_j plus the dynamic state: the current mode, the previous
    step's output (the lag state), and the pending switch if any."""

    stored_j: float
    mode: str = "idle"   # idle | charging | discharging | switching
    last_output_w: float = 0.0
    switch_target: str | None = None
    switch_remaining_s: float = 0.0


def init_state(spec: DeviceSpec) -> DeviceState:
    """Fresh device: full at the top of its state-of-charge window, idle."""
    return DeviceState(stored_j=spec.soc_max_frac * spec.energy_capacity_j)


def _lag_step(last: float, target: float, dt: float, tau: float) -> float:
    if tau <= 0.0:
        return target
    step = last + (target - last) * (1.0 - math.exp(-dt / tau))
    # The lag shapes the rise only; a falling target is honoured at once
    # (output above the target would exceed what was asked for).
    return min(step, target)


def device_step(spec: DeviceSpec, state: DeviceState,
                requested_discharge_w: float, available_charge_w: float,
                dt_s: float) -> tuple[float, float, DeviceState]:
    """Advance one step; returns (delivered_w, absorbed_w, new_state).

    The caller resolves direction: at most one of requested_discharge_w /
    available_charge_w may be positive.  delivered_w never exceeds the
    request, the discharge limit, or the energy above soc_min; absorbed_w
    never exceeds the offer, the charge limit, or the headroom below
    soc_max (after efficiency).
    """
    if dt_s <= 0.0:
        raise ValueError(f"dt_s must be positive, got {dt_s}")
    if requested_discharge_w < 0.0 or available_charge_w < 0.0:
        raise ValueError("power arguments must be non-negative")
    if requested_discharge_w > 0.0 and available_charge_w > 0.0:
        raise ValueError("cannot request discharge and offer charge in the same step")

    if spec.kind in PASSIVE_KINDS:
        return _passive_step(spec, state, requested_discharge_w, available_charge_w, dt_s)
    return _battery_step(spec, state, requested_discharge_w, available_charge_w, dt_s)


def _usable_w(spec: DeviceSpec, stored: float, dt: float) -> float:
    return max(0.0, stored - spec.soc_min_frac * spec.energy_capacity_j) / dt


def _headroom_w(spec: DeviceSpec, stored: float, dt: float) -> float:
    room = max(0.0, spec.soc_max_frac * spec.energy_capacity_j - stored)
    return room / (dt * spec.round_trip_efficiency)


def _soc_floor(spec: DeviceSpec, stored: float) -> float:
    # delivered <= usable/dt by construction, so stored - delivered*dt can
    # undershoot the window edge only by rounding; snap it back.
    return max(stored, spec.soc_min_frac * spec.energy_capacity_j)


def _soc_ceil(spec: DeviceSpec, stored: float) -> float:
    return min(stored, spec.soc_max_frac * spec.energy_capacity_j)


def _passive_step(spec, state, request, available, dt):
    if request > 0.0:
        base = state.last_output_w if state.mode == "discharging" else 0.0
        target = min(request, spec.max_discharge_w, _usable_w(spec, state.stored_j, dt))
        delivered = _lag_step(base, target, dt, spec.response_tau_s)
        new = replace(state, stored_j=_soc_floor(spec, state.stored_j - delivered * dt),
                      mode="discharging", last_output_w=delivered)
        return delivered, 0.0, new
    if available > 0.0:
        # Recharge is a trickle into the element, limited by the charge
        # rating and the headroom; the response lag constrains delivery
        # transients, not the refill.
        absorbed = min(available, spec.max_charge_w, _headroom_w(spec, state.stored_j, dt))
        gained = absorbed * dt * spec.round_trip_efficiency
        new = replace(state, stored_j=_soc_ceil(spec, state.stored_j + gained),
                      mode="charging", last_output_w=absorbed)
        return 0.0, absorbed, new
    return 0.0, 0.0, replace(state, mode="idle", last_output_w=0.0)


def _battery_step(spec, state, request, available, dt):
    want = "discharging" if request > 0.0 else ("charging" if available > 0.0 else None)

    if state.mode == "switching":
        if want is not None and want != state.switch_target:
            # Direction changed mid-switch: the turnaround starts over.
            return 0.0, 0.0, replace(state, switch_target=want,
                                     switch_remaining_s=spec.switch_latency_s - dt,
                                     last_output_w=0.0)
        remaining = state.switch_remaining_s - dt
        if remaining > _TIME_EPS:
            return 0.0, 0.0, replace(state, switch_remaining_s=remaining, last_output_w=0.0)
        # Switch completes at the end of this step; the new mode acts from
        # the next step on.
        return 0.0, 0.0, replace(state, mode=state.switch_target, switch_target=None,
                                 switch_remaining_s=0.0, last_output_w=0.0)

    if want is None:
        return 0.0, 0.0, state

    if state.mode != want:
        if spec.switch_latency_s > 0.0:
            remaining = spec.switch_latency_s - dt
            if remaining > _TIME_EPS:
                return 0.0, 0.0, replace(state, mode="switching", switch_target=want,
                                         switch_remaining_s=remaining, last_output_w=0.0)
            return 0.0, 0.0, replace(state, mode=want, switch_target=None,
                                     switch_remaining_s=0.0, last_output_w=0.0)
        state = replace(state, mode=want)

    if want == "discharging":
        delivered = min(request, spec.max_discharge_w, _usable_w(spec, state.stored_j, dt))
        new = replace(state, stored_j=_soc_floor(spec, state.stored_j - delivered * dt),
                      last_output_w=delivered)
        return delivered, 0.0, new
    absorbed = min(available, spec.max_charge_w, _headroom_w(spec, state.stored_j, dt))
    gained = absorbed * dt * spec.round_trip_efficiency
    new = replace(state, stored_j=_soc_ceil(spec, state.stored_j + gained),
                  last_output_w=absorbed)
    return 0.0, absorbed, new


# ---------------------------------------------------------------------------
# Spec files
# ---------------------------------------------------------------------------

def _spec_to_dict(spec: DeviceSpec) -> dict:
    return {
        "kind": spec.kind,
        "energy_capacity_j": spec.energy_capacity_j,
        "max_discharge_w": spec.max_discharge_w,
        "max_charge_w": spec.max_charge_w,
        "response_tau_s": spec.response_tau_s,
        "switch_latency_s": spec.switch_latency_s,
        "round_trip_efficiency": spec.round_trip_efficiency,
        "soc_min_frac": spec.soc_min_frac,
        "soc_max_frac": spec.soc_max_frac,
    }


def write_device_spec(spec: DeviceSpec, dest) -> None:
    text = json.dumps(_spec_to_dict(spec), indent=2) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_device_spec(source) -> DeviceSpec:
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad device spec JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError("device spec must be a JSON object")
    expected = set(DeviceSpec.__dataclass_fields__)
    unknown = set(data) - expected
    if unknown:
        raise ValueError(f"unknown device spec fields: {sorted(unknown)}")
    if "kind" not in data:
        raise ValueError("device spec missing 'kind'")
    return DeviceSpec(**data)


def builtin_device_spec(name: str) -> DeviceSpec:
    """Load one of the shipped presets by short name."""
    if name not in BUILTIN_DEVICE_NAMES:
        raise ValueError(f"unknown builtin device {name!r}; choices: {', '.join(BUILTIN_DEVICE_NAMES)}")
    ref = resources.files("powershave").joinpath(f"data/{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return load_device_spec(fh)

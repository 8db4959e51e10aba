"""Generate the shipped synthetic rack workload and look at its basic shape.

The default config models 200 accelerators running a phased training loop
with jittered burst timing plus a background inference stream.  Power is
sampled on a 5 ms grid.
"""

import numpy as np

from powershave import DEFAULT_SYNTH_CONFIG, resample, synthesize_trace

trace = synthesize_trace(DEFAULT_SYNTH_CONFIG)

print("synthetic rack trace")
print(f"  samples        {trace.n_samples} at dt = {trace.dt_s * 1e3:.1f} ms")
print(f"  duration       {trace.duration_s:.0f} s")
print(f"  rack max       {trace.rack_max_w / 1e3:.1f} kW (nameplate)")
print(f"  observed max   {trace.samples.max() / 1e3:.1f} kW")
print(f"  observed mean  {trace.samples.mean() / 1e3:.1f} kW")
print(f"  total energy   {trace.energy_j() / 3.6e6:.2f} kWh")

# Losing time resolution hides the spikes: compare the max power seen at
# native 5 ms sampling against 1 s averaging (what a building meter sees).
coarse = resample(trace, 1.0)
print()
print("peak power vs. sampling interval")
for tr, label in ((trace, f"{trace.dt_s * 1e3:.0f} ms"), (coarse, "1 s")):
    print(f"  dt = {label:>6}: max {tr.samples.max() / 1e3:7.1f} kW, "
          f"energy {tr.energy_j() / 3.6e6:.2f} kWh")
hidden = trace.samples.max() - coarse.samples.max()
print(f"  -> {hidden / 1e3:.1f} kW of transient peak is invisible at 1 s averaging")

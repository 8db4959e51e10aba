"""Detect power spikes on the synthetic workload and summarize them.

A spike is a maximal run of samples strictly above a threshold.  The
interesting operational questions are how long spikes last, how much
energy sits above the threshold (what a shaving device must supply),
and how far peaks overshoot.
"""

from powershave import (DEFAULT_SYNTH_CONFIG, ThresholdSpec, detect_spikes,
                        spike_statistics, synthesize_trace, threshold_sweep)

trace = synthesize_trace(DEFAULT_SYNTH_CONFIG)

threshold = ThresholdSpec(fraction_of_max=0.7)
spikes = detect_spikes(trace, threshold)
stats = spike_statistics(spikes)

print(f"spikes above 70% of rack max ({threshold.resolve(trace.rack_max_w) / 1e3:.1f} kW)")
print(f"  count               {stats.count}")
pct = stats.duration_percentiles
print(f"  duration p50        {pct['p50'] * 1e3:.0f} ms")
print(f"  duration p95        {pct['p95'] * 1e3:.0f} ms")
print(f"  fraction <= 100 ms  {stats.frac_leq_100ms:.1%}")
print(f"  mean energy above   {stats.energy_mean_j:.1f} J")
print(f"  peak overshoot      {max(s.peak_excess_w for s in spikes) / 1e3:.2f} kW (worst)")

print()
print("threshold sweep: how spike load grows as the cap tightens")
print(f"  {'threshold':>10} {'count':>6} {'total J above':>14} {'p95 ms':>7}")
fracs = [0.9, 0.8, 0.7, 0.6, 0.5]
pairs = threshold_sweep(trace, [ThresholdSpec(fraction_of_max=f) for f in fracs])
for frac, (th, st) in zip(fracs, pairs):
    total_j = st.energy_mean_j * st.count
    print(f"  {frac:>9.0%} {st.count:>6} {total_j:>14.0f} "
          f"{st.duration_percentiles['p95'] * 1e3:>7.0f}")
print("  -> lower caps turn rare brief spikes into a sustained supply problem")

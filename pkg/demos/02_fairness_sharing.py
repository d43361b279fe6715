"""Per-flow bandwidth sharing under packet-based round-robin arbitration.

Four READ streams join a shared 200G link one after another, each bound to
its own compute unit.  The arbiter re-divides the link evenly at every
step; this is the mechanism, not a congestion-control effect (the window
algorithm never throttles below the link here).

A quarter-scale version of the bundled fairness scenario keeps this demo
fast; run the full one with: scenic-sim run fairness
"""

import dataclasses
import statistics

from scenicsim import World, parse_scenario
from scenicsim.cli import builtin_text

DURATION = 40_000_000  # quarter scale
sc = parse_scenario(builtin_text("fairness"))
sc = dataclasses.replace(sc, duration_ns=DURATION)
for k, flow in enumerate(sc.flows):
    flow.start_ns = k * DURATION // 4
world = World(sc)
series = world.run()

quarter = sc.duration_ns // 4
print(f"{'phase':>5} {'flows':>5} {'aggregate':>10}  per-flow share of equal split")
for phase in range(4):
    lo = phase * quarter + quarter // 5
    hi = (phase + 1) * quarter - quarter // 5
    means = {}
    for f in series.flow_ids():
        vals = [g for (t, _, g) in series.flow_series(f) if lo < t <= hi]
        if vals and statistics.mean(vals) > 0.01:
            means[f] = statistics.mean(vals)
    agg = sum(means.values())
    fair = agg / len(means)
    shares = " ".join(f"{means[f] / fair:.3f}" for f in sorted(means))
    print(f"{phase:>5} {len(means):>5} {agg:>8.1f}G  {shares}")

print(f"\nread-path ceiling: {200 * 4096 / 4178:.1f}G of payload on a 200G wire")

"""How much processing time does one packet allow?

At high line rates the per-packet budget is what makes or breaks inline
processing: every feature on the datapath has to fit inside the time one
packet occupies the wire.
"""

from scenicsim import cycles_within_budget, per_packet_budget_ns

print(f"{'rate':>8} {'wire bytes':>11} {'budget':>10} {'cycles @391MHz':>15}")
for gbps in (10, 25, 100, 200, 400):
    for wire in (64, 1538, 4178):
        budget = per_packet_budget_ns(wire, gbps)
        cycles = cycles_within_budget(budget, 391)
        print(f"{gbps:>6}G {wire:>11} {budget:>8.2f}ns {cycles:>15}")

print()
print("An MTU-sized 4178-byte segment at 200G leaves "
      f"{per_packet_budget_ns(4178, 200):.2f} ns, i.e. "
      f"{cycles_within_budget(per_packet_budget_ns(4178, 200), 391)} cycles "
      "of a 391 MHz pipeline, for the whole decision.")

"""Shared scaffolding for the demo scripts: quick topology builders."""

from scenicsim import World, parse_scenario


def star_world(n: int, gbps: int = 100) -> World:
    nodes = "\n".join(f"node = n{i} subnet={i}" for i in range(n))
    links = "\n".join(f"link = n{i} gbps={gbps} prop_delay_ns=500"
                      for i in range(n))
    return World(parse_scenario(f"""
[general]
name = demo
duration_ns = 0
seed = 1
sample_period_ns = 1000000

[topology]
{nodes}
{links}
"""))

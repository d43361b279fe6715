import textwrap

import pytest

from scenicsim.scenario import parse_scenario
from scenicsim.sim import World


def scenario_text(body: str) -> str:
    return textwrap.dedent(body).strip() + "\n"


def build_world(body: str) -> World:
    return World(parse_scenario(scenario_text(body)))


TWO_NODE_200G = """
[general]
name = t
duration_ns = {duration}
seed = {seed}
sample_period_ns = {sample}

[topology]
node = a subnet=0
node = b subnet=1
link = a gbps=200 prop_delay_ns=500
link = b gbps=200 prop_delay_ns=500

[scus]
scu = b index=0 kind=passthrough
scu = a index=0 kind=passthrough

[flows]
{flows}

[cc]
algorithm = {cc}
window_bytes = {window}
"""


def two_node(flows: str, duration: int = 2_000_000, seed: int = 1,
             sample: int = 100_000, cc: str = "window",
             window: str = "auto") -> World:
    text = TWO_NODE_200G.format(duration=duration, seed=seed, sample=sample,
                                flows=flows.strip(), cc=cc, window=window)
    return build_world(text)


def star(n: int, gbps: int = 100, duration: int = 0, seed: int = 1,
         extra: str = "") -> World:
    nodes = "\n".join(f"node = n{i} subnet={i}" for i in range(n))
    links = "\n".join(f"link = n{i} gbps={gbps} prop_delay_ns=500"
                      for i in range(n))
    return build_world(f"""
    [general]
    name = star
    duration_ns = {duration}
    seed = {seed}
    sample_period_ns = 1000000

    [topology]
    {nodes}
    {links}
    {extra}
    """)

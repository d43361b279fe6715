"""Run orchestration: execute one scenario and emit its CSV artifacts.

Every run writes ``metrics.csv`` and ``counters.csv`` into a directory
named after the scenario under the chosen output root.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .metrics import render_counters_csv, render_metrics_csv
from .scenario import Scenario
from .sim import World

OUT_ENV_VAR = "SCENIC_SIM_OUT"
DEFAULT_OUT = "runs"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV_VAR, DEFAULT_OUT))


@dataclass
class RunResult:
    world: World
    run_dir: Path
    metrics_path: Path
    counters_path: Path


def run_scenario(sc: Scenario, out_dir: Optional[Path] = None,
                 seed: Optional[int] = None,
                 sample_period_ns: Optional[int] = None) -> RunResult:
    if seed is not None:
        sc = replace(sc, seed=seed)
    if sample_period_ns is not None:
        sc = replace(sc, sample_period_ns=sample_period_ns)
    world = World(sc)
    if sc.collective is not None:
        _run_collective(world, sc)
    else:
        world.run()
    run_dir = (out_dir if out_dir is not None else default_out_dir()) / sc.name
    run_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = run_dir / "metrics.csv"
    counters_path = run_dir / "counters.csv"
    metrics_path.write_text(render_metrics_csv(world.metrics.series))
    counters_path.write_text(render_counters_csv(world.metrics.series.counters))
    return RunResult(world, run_dir, metrics_path, counters_path)


def _run_collective(world: World, sc: Scenario) -> None:
    from .collective import broadcast, gather

    decl = sc.collective
    rng = world.rng
    if decl.op in ("broadcast", "both"):
        payload = rng.bytes(decl.size_bytes)
        res = broadcast(world, decl.root, payload, decl.mode)
        for name, t in sorted(res.delivery_ns.items()):
            world.count(f"broadcast_delivery_{name}_ns", t)
        world.count("broadcast_finish_ns", res.finish_ns)
        world.count("broadcast_root_egress_ns",
                    res.root_egress_end_ns - res.root_egress_start_ns)
    if decl.op in ("gather", "both"):
        payloads = [rng.bytes(decl.size_bytes) for _ in world.nodes]
        buffer, res = gather(world, decl.root, payloads)
        ok = buffer == b"".join(
            payloads[r] for r in range(len(world.nodes)))
        world.count("gather_bitexact", int(ok))
        world.count("gather_finish_ns", res.finish_ns)
    world.finalize_counters()

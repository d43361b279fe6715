"""Per-flow throughput series and run counters, plus their CSV forms.

The metrics CSV has the fixed header ``time_ns,flow_id,bytes_delivered,
throughput_gbps`` with one row per (sample time, started flow);
``bytes_delivered`` counts payload bytes delivered during that sample
window and throughput is those bytes over the window, printed with six
fractional digits.  The counters CSV is ``counter,value`` sorted by name.
Neither file quotes anything; both end with a newline.  Identical runs
produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .core import ConfigError, SimTime

METRICS_HEADER = "time_ns,flow_id,bytes_delivered,throughput_gbps"
COUNTERS_HEADER = "counter,value"


@dataclass
class MetricsSeries:
    sample_period_ns: int
    # rows: (time_ns, flow_id, bytes_in_window, throughput_gbps)
    samples: List[Tuple[int, int, int, float]] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)

    def flow_series(self, flow_id: int) -> List[Tuple[int, int, float]]:
        return [(t, b, g) for (t, f, b, g) in self.samples if f == flow_id]

    def flow_ids(self) -> List[int]:
        return sorted({f for (_, f, _, _) in self.samples})


class MetricsCollector:
    def __init__(self, sample_period_ns: int):
        if sample_period_ns <= 0:
            raise ConfigError("sample period must be positive")
        self.series = MetricsSeries(sample_period_ns)
        self._window: Dict[int, int] = {}
        self._started: List[int] = []
        self._last_sample_at = -1

    def flow_started(self, flow_id: int) -> None:
        if flow_id not in self._started:
            self._started.append(flow_id)
            self._window.setdefault(flow_id, 0)

    def add_flow_bytes(self, flow_id: int, nbytes: int) -> None:
        self._window[flow_id] = self._window.get(flow_id, 0) + nbytes

    def sample(self, now: SimTime) -> None:
        if now <= self._last_sample_at:
            raise ConfigError("sample timestamps must be strictly increasing")
        self._last_sample_at = now
        period = self.series.sample_period_ns
        for flow_id in sorted(self._started):
            nbytes = self._window.get(flow_id, 0)
            self._window[flow_id] = 0
            gbps = nbytes * 8 / period  # bits per nanosecond == Gbit/s
            self.series.samples.append((now, flow_id, nbytes, gbps))


def render_metrics_csv(series: MetricsSeries) -> str:
    lines = [METRICS_HEADER]
    for (t, flow, nbytes, gbps) in series.samples:
        lines.append(f"{t},{flow},{nbytes},{gbps:.6f}")
    return "\n".join(lines) + "\n"


def render_counters_csv(counters: Dict[str, int]) -> str:
    lines = [COUNTERS_HEADER]
    for name in sorted(counters):
        lines.append(f"{name},{counters[name]}")
    return "\n".join(lines) + "\n"


def parse_metrics_csv(text: str) -> MetricsSeries:
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != METRICS_HEADER:
        raise ConfigError(f"metrics CSV must start with '{METRICS_HEADER}'")
    series = MetricsSeries(0)
    for line in lines[1:]:
        t, flow, nbytes, gbps = line.split(",")
        series.samples.append((int(t), int(flow), int(nbytes), float(gbps)))
    return series


def parse_counters_csv(text: str) -> Dict[str, int]:
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != COUNTERS_HEADER:
        raise ConfigError(f"counters CSV must start with '{COUNTERS_HEADER}'")
    out = {}
    for line in lines[1:]:
        name, value = line.split(",")
        out[name] = int(value)
    return out

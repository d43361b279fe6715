/**
 * Throughput versus message size: log2 x-axis, one point per run, one line
 * per configuration.  A run's message size comes from its counters
 * (message_size_bytes); its throughput is the mean aggregate over the
 * samples where traffic was flowing, trimmed of the first and last active
 * sample to drop ramp effects.
 */

import { writeFileSync } from "node:fs";

import { RunArtifact, SchemaError } from "./csv.js";
import { drawAxes, Frame, PALETTE, Svg, xPix, yPix } from "./svg.js";

export interface CurvePoint {
  sizeBytes: number;
  gbps: number;
}

export interface CurveFigure {
  svg: string;
  /** configuration label -> points ordered by size */
  lines: Map<string, CurvePoint[]>;
}

export function steadyThroughputGbps(run: RunArtifact): number {
  const byTime = new Map<number, number>();
  for (const row of run.metrics) {
    byTime.set(row.timeNs, (byTime.get(row.timeNs) ?? 0) + row.throughputGbps);
  }
  const active = [...byTime.entries()]
    .sort((a, b) => a[0] - b[0])
    .filter(([, v]) => v > 0)
    .map(([, v]) => v);
  if (active.length === 0) return 0;
  const trimmed = active.length > 2 ? active.slice(1, -1) : active;
  return trimmed.reduce((a, b) => a + b, 0) / trimmed.length;
}

export function messageSize(run: RunArtifact): number {
  const size = run.counters.get("message_size_bytes");
  if (size === undefined) {
    throw new SchemaError(
      `run ${run.name}: counters.csv lacks message_size_bytes`);
  }
  return size;
}

/** Group label for multi-configuration sweeps: run names look like
 * `<config>_<size>`; a bare name is its own configuration. */
export function configLabel(run: RunArtifact): string {
  const m = run.name.match(/^(.*)_\d+$/);
  return m ? m[1] : run.name;
}

export function buildCurveFigure(runs: RunArtifact[]): CurveFigure {
  if (runs.length === 0) {
    throw new SchemaError("need at least one run");
  }
  const lines = new Map<string, CurvePoint[]>();
  for (const run of runs) {
    const label = configLabel(run);
    const point = { sizeBytes: messageSize(run), gbps: steadyThroughputGbps(run) };
    const list = lines.get(label) ?? [];
    list.push(point);
    lines.set(label, list);
  }
  for (const list of lines.values()) {
    list.sort((a, b) => a.sizeBytes - b.sizeBytes);
  }
  return { svg: render(lines), lines };
}

function render(lines: Map<string, CurvePoint[]>): string {
  const svg = new Svg(760, 420);
  const all = [...lines.values()].flat();
  const xs = all.map((p) => Math.log2(p.sizeBytes));
  const ys = all.map((p) => p.gbps);
  const f: Frame = {
    width: 760, height: 420, left: 64, right: 16, top: 30, bottom: 44,
    xMin: Math.min(...xs) - 0.4, xMax: Math.max(...xs) + 0.4,
    yMin: 0, yMax: Math.max(...ys, 1) * 1.15,
  };
  const xTicks: Array<[number, string]> = [];
  for (let e = Math.ceil(f.xMin); e <= Math.floor(f.xMax); e++) {
    const bytes = 2 ** e;
    xTicks.push([e, bytes >= 1 << 20 ? `${bytes >> 20}M`
      : bytes >= 1024 ? `${bytes >> 10}K` : `${bytes}`]);
  }
  const yTicks: Array<[number, string]> = [];
  for (let i = 0; i <= 4; i++) {
    const v = (f.yMax / 4) * i;
    yTicks.push([v, v.toFixed(0)]);
  }
  drawAxes(svg, f, "message size (bytes, log2)", "throughput (Gbit/s)",
           xTicks, yTicks);
  svg.text(f.left, 18, "throughput vs message size", { size: 13 });

  let i = 0;
  for (const [label, points] of lines) {
    const color = PALETTE[i % PALETTE.length];
    const pix = points.map((p) =>
      [xPix(f, Math.log2(p.sizeBytes)), yPix(f, p.gbps)] as [number, number]);
    if (pix.length > 1) svg.polyline(pix, color, 1.6);
    for (const [x, y] of pix) svg.circle(x, y, 3, color);
    svg.text(f.width - f.right - 4, f.top + 14 + 14 * i, label,
             { anchor: "end", fill: color });
    i += 1;
  }
  return svg.render();
}

export function plotThroughputCurve(runs: RunArtifact[],
                                    outPath: string): CurveFigure {
  const fig = buildCurveFigure(runs);
  writeFileSync(outPath, fig.svg);
  return fig;
}

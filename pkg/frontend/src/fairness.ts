/**
 * Stacked per-flow throughput over time: each flow is a band, the top edge
 * is the aggregate, and a dashed marker annotates every point where a flow
 * joins (a phase boundary).
 */

import { writeFileSync } from "node:fs";

import { flowIds, flowSeries, MetricsRow, RunArtifact } from "./csv.js";
import { drawAxes, Frame, PALETTE, Svg, xPix, yPix } from "./svg.js";

export interface FairnessFigure {
  svg: string;
  bands: number;
  /** stacked cumulative throughput per sample time, one array per flow */
  stacks: Map<number, Array<[number, number]>>;
  aggregate: Array<[number, number]>;
  phaseStartsNs: number[];
}

export function buildFairnessFigure(run: RunArtifact): FairnessFigure {
  const ids = flowIds(run.metrics);
  const times = [...new Set(run.metrics.map((r) => r.timeNs))].sort((a, b) => a - b);
  const byFlow = new Map<number, Map<number, MetricsRow>>();
  for (const id of ids) {
    byFlow.set(id, new Map(flowSeries(run.metrics, id).map((r) => [r.timeNs, r])));
  }

  const stacks = new Map<number, Array<[number, number]>>();
  const aggregate: Array<[number, number]> = [];
  const phaseStartsNs: number[] = [];
  for (const id of ids) {
    stacks.set(id, []);
    const first = run.metrics.find((r) => r.flowId === id);
    if (first !== undefined) phaseStartsNs.push(first.timeNs);
  }
  for (const t of times) {
    let acc = 0;
    for (const id of ids) {
      const row = byFlow.get(id)!.get(t);
      acc += row ? row.throughputGbps : 0;
      stacks.get(id)!.push([t, acc]);
    }
    aggregate.push([t, acc]);
  }

  const svg = render(run.name, ids, times, stacks, aggregate, phaseStartsNs);
  return { svg, bands: ids.length, stacks, aggregate, phaseStartsNs };
}

function render(name: string, ids: number[], times: number[],
                stacks: Map<number, Array<[number, number]>>,
                aggregate: Array<[number, number]>,
                phaseStartsNs: number[]): string {
  const svg = new Svg(860, 420);
  const yMax = aggregate.length
    ? Math.max(...aggregate.map(([, v]) => v)) * 1.12 : 1;
  const f: Frame = {
    width: 860, height: 420, left: 64, right: 16, top: 30, bottom: 44,
    xMin: 0, xMax: times.length ? times[times.length - 1] : 1,
    yMin: 0, yMax,
  };
  const xTicks: Array<[number, string]> = [];
  for (let i = 0; i <= 4; i++) {
    const t = (f.xMax / 4) * i;
    xTicks.push([t, (t / 1e6).toFixed(0)]);
  }
  const yTicks: Array<[number, string]> = [];
  for (let i = 0; i <= 4; i++) {
    const v = (yMax / 4) * i;
    yTicks.push([v, v.toFixed(0)]);
  }
  drawAxes(svg, f, "time (ms)", "throughput (Gbit/s)", xTicks, yTicks);
  svg.text(f.left, 18, `per-flow bandwidth sharing: ${name}`, { size: 13 });

  // bands, bottom-up: region between the previous stack line and this one
  let below: Array<[number, number]> | null = null;
  ids.forEach((id, i) => {
    const top = stacks.get(id)!;
    const upper = top.map(([t, v]) => [xPix(f, t), yPix(f, v)] as [number, number]);
    const lower = (below ?? top.map(([t]) => [t, 0]))
      .map(([t, v]) => [xPix(f, t), yPix(f, v)] as [number, number])
      .reverse();
    if (upper.length >= 2) {
      svg.polygon([...upper, ...lower], PALETTE[i % PALETTE.length], 0.8);
    }
    below = top;
  });
  if (aggregate.length >= 2) {
    svg.polyline(
      aggregate.map(([t, v]) => [xPix(f, t), yPix(f, v)]), "#111", 1.2);
  }
  phaseStartsNs.forEach((t, i) => {
    const px = xPix(f, t);
    svg.line(px, f.top, px, f.height - f.bottom, "#555", 1, "4 3");
    svg.text(px + 3, f.top + 12, `flow ${ids[i]}`, { size: 10, fill: "#444" });
  });
  return svg.render();
}

export function plotFairness(run: RunArtifact, outPath: string): FairnessFigure {
  const fig = buildFairnessFigure(run);
  writeFileSync(outPath, fig.svg);
  return fig;
}

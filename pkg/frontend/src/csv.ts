/**
 * Run artifacts: the two CSVs a simulator run emits.
 *
 * metrics.csv:  time_ns,flow_id,bytes_delivered,throughput_gbps
 * counters.csv: counter,value
 *
 * Neither file quotes anything, so parsing is plain splitting; values are
 * carried through without rounding so plotted series equal file contents
 * exactly.
 */

import { readFileSync } from "node:fs";
import { basename, join } from "node:path";

export const METRICS_HEADER = "time_ns,flow_id,bytes_delivered,throughput_gbps";
export const COUNTERS_HEADER = "counter,value";

export interface MetricsRow {
  timeNs: number;
  flowId: number;
  bytesDelivered: number;
  throughputGbps: number;
}

export interface RunArtifact {
  name: string;
  metrics: MetricsRow[];
  counters: Map<string, number>;
}

export class SchemaError extends Error {}

export function parseMetricsCsv(text: string): MetricsRow[] {
  const lines = text.replace(/\n+$/, "").split("\n");
  if (lines.length === 0 || lines[0] !== METRICS_HEADER) {
    const missing = METRICS_HEADER.split(",").filter(
      (col) => !(lines[0] ?? "").split(",").includes(col),
    );
    throw new SchemaError(
      `metrics CSV header mismatch; missing column(s): ${missing.join(", ")}`,
    );
  }
  const rows: MetricsRow[] = [];
  for (const line of lines.slice(1)) {
    if (line === "") continue;
    const parts = line.split(",");
    if (parts.length !== 4) {
      throw new SchemaError(`metrics row has ${parts.length} fields: ${line}`);
    }
    rows.push({
      timeNs: Number(parts[0]),
      flowId: Number(parts[1]),
      bytesDelivered: Number(parts[2]),
      throughputGbps: Number(parts[3]),
    });
  }
  return rows;
}

export function parseCountersCsv(text: string): Map<string, number> {
  const lines = text.replace(/\n+$/, "").split("\n");
  if (lines.length === 0 || lines[0] !== COUNTERS_HEADER) {
    throw new SchemaError(`counters CSV must start with '${COUNTERS_HEADER}'`);
  }
  const out = new Map<string, number>();
  for (const line of lines.slice(1)) {
    if (line === "") continue;
    const idx = line.indexOf(",");
    out.set(line.slice(0, idx), Number(line.slice(idx + 1)));
  }
  return out;
}

export function loadRun(runDir: string): RunArtifact {
  const metrics = parseMetricsCsv(
    readFileSync(join(runDir, "metrics.csv"), "utf-8"),
  );
  const counters = parseCountersCsv(
    readFileSync(join(runDir, "counters.csv"), "utf-8"),
  );
  return { name: basename(runDir), metrics, counters };
}

/** Distinct flow ids in first-seen order. */
export function flowIds(rows: MetricsRow[]): number[] {
  const seen: number[] = [];
  for (const row of rows) {
    if (!seen.includes(row.flowId)) seen.push(row.flowId);
  }
  return seen.sort((a, b) => a - b);
}

/** Rows of one flow, in time order (file order is already time-sorted). */
export function flowSeries(rows: MetricsRow[], flowId: number): MetricsRow[] {
  return rows.filter((r) => r.flowId === flowId);
}

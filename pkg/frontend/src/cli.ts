#!/usr/bin/env node
/**
 * plot <kind> <run-dir> [more-run-dirs...] [--out file]
 *
 * kinds:
 *   fairness  stacked per-flow throughput bands for one run
 *   curve     throughput vs message size across a sweep of runs
 *
 * Output is SVG; the default file name derives from the kind.
 */

import { loadRun, SchemaError } from "./csv.js";
import { plotFairness } from "./fairness.js";
import { plotThroughputCurve } from "./curve.js";

export function main(argv: string[]): number {
  const args = [...argv];
  let out: string | undefined;
  const outIdx = args.indexOf("--out");
  if (outIdx >= 0) {
    out = args[outIdx + 1];
    if (out === undefined) {
      console.error("--out needs a file name");
      return 2;
    }
    args.splice(outIdx, 2);
  }
  const [kind, ...dirs] = args;
  if (!kind || dirs.length === 0) {
    console.error("usage: plot <fairness|curve> <run-dir>... [--out file]");
    return 2;
  }
  try {
    if (kind === "fairness") {
      const fig = plotFairness(loadRun(dirs[0]), out ?? "fairness.svg");
      console.log(`${out ?? "fairness.svg"}: ${fig.bands} bands`);
      return 0;
    }
    if (kind === "curve") {
      const fig = plotThroughputCurve(dirs.map(loadRun), out ?? "curve.svg");
      const n = [...fig.lines.values()].reduce((a, l) => a + l.length, 0);
      console.log(`${out ?? "curve.svg"}: ${fig.lines.size} line(s), ${n} point(s)`);
      return 0;
    }
    console.error(`unknown plot kind: ${kind}`);
    return 2;
  } catch (err) {
    if (err instanceof SchemaError || (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(String(err));
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!)) {
  process.exit(main(process.argv.slice(2)));
}

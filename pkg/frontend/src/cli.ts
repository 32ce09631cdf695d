#!/usr/bin/env node
/**
 * Figure renderer CLI.
 *
 * Usage:  render --job job.json
 *
 * job.json: {"kind": "mass_scatter" | "twopoint_heatmap" | "energy_decay"
 *            | "convergence_curve" | "locallimit_curve",
 *            "inputs": {...input paths...}, "output": "figure.svg",
 *            "title": "optional"}
 *
 * Exits nonzero on schema mismatches (missing inputs or columns are named in
 * the error message). Writing is atomic enough for our purposes: the SVG is
 * fully built in memory before touching the output path.
 */

import { readFileSync, writeFileSync } from "fs";

import { FigureJob, renderFigure } from "./figures.js";

export function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args[0] !== "render") {
    process.stderr.write("usage: render --job job.json\n");
    return 2;
  }
  const jobIdx = args.indexOf("--job");
  if (jobIdx < 0 || !args[jobIdx + 1]) {
    process.stderr.write("error: --job PATH is required\n");
    return 2;
  }
  let job: FigureJob;
  try {
    job = JSON.parse(readFileSync(args[jobIdx + 1], "utf8")) as FigureJob;
  } catch (err) {
    process.stderr.write(`error: cannot read job file: ${(err as Error).message}\n`);
    return 2;
  }
  try {
    const svg = renderFigure(job);
    writeFileSync(job.output, svg);
    process.stdout.write(`${job.kind} -> ${job.output}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

process.exit(main(process.argv));

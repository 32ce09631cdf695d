/**
 * Figure renderers over the simulation file contracts.
 *
 * Each renderer is a pure function of its input files: fixed canvas sizes,
 * fixed color stops, no clocks and no randomness, so re-rendering the same
 * inputs is byte-identical. Inputs are the CSV/JSON artifacts written by the
 * graphflow CLI (see the package README for the schemas).
 */

import { readFileSync } from "fs";

import { parseCsv, requireColumns } from "./csv.js";
import { viridis } from "./colormap.js";
import { Svg, extent, fmt, scale } from "./svg.js";

export type FigureKind =
  | "mass_scatter"
  | "twopoint_heatmap"
  | "convergence_curve"
  | "locallimit_curve"
  | "energy_decay";

export interface FigureJob {
  kind: FigureKind;
  inputs: Record<string, string>;
  output: string;
  title?: string;
}

const WIDTH = 560;
const HEIGHT = 420;
const MARGIN = 50;

function requireInput(job: FigureJob, name: string): string {
  const path = job.inputs[name];
  if (!path) {
    throw new Error(`figure "${job.kind}" needs input "${name}"`);
  }
  return readFileSync(path, "utf8");
}

// ---------------------------------------------------------------------------
// mass_scatter: vertex positions colored by snapshot mass
// ---------------------------------------------------------------------------

interface GraphDoc {
  positions: number[][];
  edges: [number, number, number][];
}

interface SnapshotDoc {
  t: number;
  rho: number[];
}

export function renderMassScatter(job: FigureJob): string {
  const graph = JSON.parse(requireInput(job, "graph")) as GraphDoc;
  const snap = JSON.parse(requireInput(job, "snapshot")) as SnapshotDoc;
  if (!graph.positions) {
    throw new Error('graph input is missing "positions"');
  }
  if (!snap.rho) {
    throw new Error('snapshot input is missing "rho"');
  }
  if (snap.rho.length !== graph.positions.length) {
    throw new Error(
      `snapshot has ${snap.rho.length} masses for ${graph.positions.length} vertices`,
    );
  }

  const xs = graph.positions.map((p) => p[0]);
  const ys = graph.positions.map((p) => (p.length > 1 ? p[1] : 0));
  const sx = scale(extent(xs), MARGIN, WIDTH - MARGIN);
  const sy = scale(extent(ys), HEIGHT - MARGIN, MARGIN);
  const maxMass = Math.max(...snap.rho);

  const svg = new Svg(WIDTH, HEIGHT);
  svg.rect(0, 0, WIDTH, HEIGHT, "white");
  // Faint edges underneath so the cloud geometry reads.
  for (const [i, j] of graph.edges ?? []) {
    svg.line(sx(xs[i]), sy(ys[i]), sx(xs[j]), sy(ys[j]), "rgb(225,225,225)", 0.5);
  }
  for (let i = 0; i < xs.length; i++) {
    const t = maxMass > 0 ? snap.rho[i] / maxMass : 0;
    svg.circle(sx(xs[i]), sy(ys[i]), 4, viridis(t));
  }
  svg.text(WIDTH / 2, 20, job.title ?? `mass at t = ${snap.t}`, 13, "middle");
  return svg.render();
}

// ---------------------------------------------------------------------------
// twopoint_heatmap: quasi-distance over the (rho0, nu0) grid
// ---------------------------------------------------------------------------

export function renderTwopointHeatmap(job: FigureJob): string {
  const table = parseCsv(requireInput(job, "grid"));
  const rows = requireColumns(table, ["rho0", "nu0", "T"]);
  const rhos = [...new Set(rows.map((r) => r[0]))].sort((a, b) => a - b);
  const nus = [...new Set(rows.map((r) => r[1]))].sort((a, b) => a - b);
  const value = new Map<string, number>();
  let tMax = 0;
  for (const [r0, n0, t] of rows) {
    value.set(`${r0}|${n0}`, t);
    tMax = Math.max(tMax, t);
  }

  const plot = Math.min(WIDTH, HEIGHT) - 2 * MARGIN;
  const cw = plot / rhos.length;
  const ch = plot / nus.length;
  const svg = new Svg(WIDTH, HEIGHT);
  svg.rect(0, 0, WIDTH, HEIGHT, "white");
  for (let i = 0; i < rhos.length; i++) {
    for (let j = 0; j < nus.length; j++) {
      const t = value.get(`${rhos[i]}|${nus[j]}`) ?? 0;
      const x = MARGIN + i * cw;
      const y = HEIGHT - MARGIN - (j + 1) * ch;
      svg.rect(x, y, cw + 0.5, ch + 0.5, viridis(tMax > 0 ? t / tMax : 0));
    }
  }
  // Color scale legend on the right.
  const legendX = MARGIN + plot + 20;
  const steps = 40;
  for (let k = 0; k < steps; k++) {
    const y = HEIGHT - MARGIN - ((k + 1) * plot) / steps;
    svg.rect(legendX, y, 14, plot / steps + 0.5, viridis((k + 0.5) / steps));
  }
  svg.text(legendX + 18, HEIGHT - MARGIN, "0", 10);
  svg.text(legendX + 18, MARGIN + 10, fmt(tMax), 10);
  svg.text(MARGIN + plot / 2, HEIGHT - MARGIN + 28, "rho0", 11, "middle");
  svg.text(16, HEIGHT / 2, "nu0", 11, "middle");
  svg.text(WIDTH / 2, 20, job.title ?? "two-point transport cost", 13, "middle");
  return svg.render();
}

// ---------------------------------------------------------------------------
// line plots
// ---------------------------------------------------------------------------

function lineFigure(
  pts: [number, number][],
  labels: { x: string; y: string; title: string },
): string {
  const svg = new Svg(WIDTH, HEIGHT);
  svg.rect(0, 0, WIDTH, HEIGHT, "white");
  const ex = extent(pts.map((p) => p[0]));
  const ey = extent(pts.map((p) => p[1]));
  const sx = scale(ex, MARGIN, WIDTH - MARGIN);
  const sy = scale(ey, HEIGHT - MARGIN, MARGIN);
  svg.line(MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, "black");
  svg.line(MARGIN, HEIGHT - MARGIN, MARGIN, MARGIN, "black");
  svg.polyline(pts.map(([x, y]) => [sx(x), sy(y)] as [number, number]), "rgb(31,119,180)");
  for (const [x, y] of pts) {
    svg.circle(sx(x), sy(y), 3, "rgb(31,119,180)");
  }
  svg.text(MARGIN, HEIGHT - MARGIN + 16, fmt(ex.min), 10);
  svg.text(WIDTH - MARGIN, HEIGHT - MARGIN + 16, fmt(ex.max), 10, "end");
  svg.text(MARGIN - 4, HEIGHT - MARGIN, fmt(ey.min), 10, "end");
  svg.text(MARGIN - 4, MARGIN + 8, fmt(ey.max), 10, "end");
  svg.text(WIDTH / 2, HEIGHT - 10, labels.x, 11, "middle");
  svg.text(14, HEIGHT / 2, labels.y, 11, "middle");
  svg.text(WIDTH / 2, 20, labels.title, 13, "middle");
  return svg.render();
}

export function renderEnergyDecay(job: FigureJob): string {
  const table = parseCsv(requireInput(job, "trajectory"));
  const rows = requireColumns(table, ["t", "energy"]);
  return lineFigure(
    rows.map((r) => [r[0], r[1]] as [number, number]),
    { x: "t", y: "energy", title: job.title ?? "energy decay" },
  );
}

export function renderConvergenceCurve(job: FigureJob): string {
  const table = parseCsv(requireInput(job, "table"));
  const rows = requireColumns(table, ["n", "t", "w1_error"]);
  const byN = new Map<number, number>();
  for (const [n, , err] of rows) {
    byN.set(n, Math.max(byN.get(n) ?? 0, err));
  }
  const pts = [...byN.entries()].sort((a, b) => a[0] - b[0]) as [number, number][];
  return lineFigure(pts, {
    x: "n (samples)",
    y: "W1 error vs reference",
    title: job.title ?? "sampling convergence",
  });
}

export function renderLocallimitCurve(job: FigureJob): string {
  const table = parseCsv(requireInput(job, "table"));
  const rows = requireColumns(table, ["eps", "l1_discrepancy"]);
  const pts = rows
    .map((r) => [r[0], r[1]] as [number, number])
    .sort((a, b) => a[0] - b[0]);
  return lineFigure(pts, {
    x: "eps",
    y: "L1 discrepancy vs finite-volume",
    title: job.title ?? "local limit",
  });
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

export function renderFigure(job: FigureJob): string {
  switch (job.kind) {
    case "mass_scatter":
      return renderMassScatter(job);
    case "twopoint_heatmap":
      return renderTwopointHeatmap(job);
    case "energy_decay":
      return renderEnergyDecay(job);
    case "convergence_curve":
      return renderConvergenceCurve(job);
    case "locallimit_curve":
      return renderLocallimitCurve(job);
    default:
      throw new Error(`unknown figure kind "${(job as FigureJob).kind}"`);
  }
}

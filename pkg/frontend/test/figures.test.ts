import { execFileSync } from "child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { parseCsv, requireColumns } from "../src/csv.js";
import { FigureJob, renderFigure } from "../src/figures.js";

const FIX = join(__dirname, "..", "fixtures");

function lastSnapshot(): string {
  return join(FIX, "run", "snapshot_00010.json");
}

function job(kind: FigureJob["kind"], inputs: Record<string, string>): FigureJob {
  return { kind, inputs, output: "unused.svg" };
}

describe("figure rendering", () => {
  it("renders a mass scatter from graph + snapshot", () => {
    const svg = renderFigure(
      job("mass_scatter", { graph: join(FIX, "run", "graph.json"), snapshot: lastSnapshot() }),
    );
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("<circle");
    // one marker per vertex
    const graph = JSON.parse(readFileSync(join(FIX, "run", "graph.json"), "utf8"));
    const circles = svg.match(/<circle/g) ?? [];
    expect(circles.length).toBe(graph.positions.length);
  });

  it("mass scatter brightness follows mass", () => {
    const snap = JSON.parse(readFileSync(lastSnapshot(), "utf8"));
    const svg = renderFigure(
      job("mass_scatter", { graph: join(FIX, "run", "graph.json"), snapshot: lastSnapshot() }),
    );
    // The heaviest vertex is drawn with the top colormap stop.
    const maxMass = Math.max(...snap.rho);
    expect(maxMass).toBeGreaterThan(0);
    expect(svg).toContain("rgb(253,231,37)");
  });

  it("renders the two-point heatmap and the data is visibly asymmetric", () => {
    const gridPath = join(FIX, "twopoint", "twopoint_grid.csv");
    const svg = renderFigure(job("twopoint_heatmap", { grid: gridPath }));
    expect(svg).toContain("<rect");

    const table = parseCsv(readFileSync(gridPath, "utf8"));
    const rows = requireColumns(table, ["rho0", "nu0", "T"]);
    const value = new Map<string, number>();
    for (const [r0, n0, t] of rows) {
      value.set(`${r0}|${n0}`, t);
    }
    let maxGap = 0;
    for (const [r0, n0] of rows) {
      const fwd = value.get(`${r0}|${n0}`) ?? 0;
      const bwd = value.get(`${n0}|${r0}`) ?? 0;
      maxGap = Math.max(maxGap, Math.abs(fwd - bwd));
    }
    expect(maxGap).toBeGreaterThan(0.5);
  });

  it("renders energy decay and the underlying data is non-increasing", () => {
    const csvPath = join(FIX, "run", "trajectory.csv");
    const svg = renderFigure(job("energy_decay", { trajectory: csvPath }));
    expect(svg).toContain("<polyline");
    const rows = requireColumns(parseCsv(readFileSync(csvPath, "utf8")), ["t", "energy"]);
    for (let i = 1; i < rows.length; i++) {
      expect(rows[i][1]).toBeLessThanOrEqual(rows[i - 1][1] + 1e-10);
    }
  });

  it("renders convergence and local-limit curves", () => {
    const conv = renderFigure(
      job("convergence_curve", { table: join(FIX, "converge", "convergence.csv") }),
    );
    expect(conv).toContain("<polyline");
    const ll = renderFigure(
      job("locallimit_curve", { table: join(FIX, "locallimit", "locallimit.csv") }),
    );
    expect(ll).toContain("<polyline");
  });

  it("re-rendering is byte-identical", () => {
    const jobs: FigureJob[] = [
      job("mass_scatter", { graph: join(FIX, "run", "graph.json"), snapshot: lastSnapshot() }),
      job("twopoint_heatmap", { grid: join(FIX, "twopoint", "twopoint_grid.csv") }),
      job("energy_decay", { trajectory: join(FIX, "run", "trajectory.csv") }),
    ];
    for (const j of jobs) {
      expect(renderFigure(j)).toBe(renderFigure(j));
    }
  });

  it("names missing columns explicitly", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-"));
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "time,value\n0,1\n");
    expect(() => renderFigure(job("energy_decay", { trajectory: bad }))).toThrow(/"t"/);
  });

  it("rejects unknown figure kinds", () => {
    expect(() =>
      renderFigure({ kind: "pie" as FigureJob["kind"], inputs: {}, output: "x.svg" }),
    ).toThrow(/unknown figure kind/);
  });
});

describe("render CLI", () => {
  it("writes the figure and is pixel-deterministic across invocations", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-cli-"));
    const outputs: Buffer[] = [];
    for (const name of ["a.svg", "b.svg"]) {
      const jobPath = join(dir, `job-${name}.json`);
      writeFileSync(
        jobPath,
        JSON.stringify({
          kind: "twopoint_heatmap",
          inputs: { grid: join(FIX, "twopoint", "twopoint_grid.csv") },
          output: join(dir, name),
        }),
      );
      execFileSync("node", [join(__dirname, "..", "dist", "cli.js"), "render", "--job", jobPath]);
      outputs.push(readFileSync(join(dir, name)));
    }
    expect(outputs[0].equals(outputs[1])).toBe(true);
  });

  it("exits nonzero on schema mismatch", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-cli-"));
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "x,y\n1,2\n");
    const jobPath = join(dir, "job.json");
    writeFileSync(
      jobPath,
      JSON.stringify({ kind: "energy_decay", inputs: { trajectory: bad }, output: join(dir, "o.svg") }),
    );
    let code = 0;
    try {
      execFileSync("node", [join(__dirname, "..", "dist", "cli.js"), "render", "--job", jobPath], {
        stdio: "pipe",
      });
    } catch (err) {
      code = (err as { status: number }).status;
    }
    expect(code).not.toBe(0);
  });
});

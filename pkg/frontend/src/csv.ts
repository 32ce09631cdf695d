/**
 * Minimal CSV reader for the simulation artifacts.
 *
 * All files follow the same contract: one header row, '.' decimals, LF line
 * endings, fully numeric columns. Missing columns are reported by name so a
 * schema mismatch fails loudly instead of rendering garbage.
 */

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV input");
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows = lines.slice(1).map((line, i) => {
    const parts = line.split(",");
    if (parts.length !== columns.length) {
      throw new Error(`CSV row ${i + 1} has ${parts.length} fields, expected ${columns.length}`);
    }
    return parts.map((p) => Number(p));
  });
  return { columns, rows };
}

/** Extract named columns, throwing with the missing name on mismatch. */
export function requireColumns(table: Table, names: string[]): number[][] {
  const indices = names.map((name) => {
    const idx = table.columns.indexOf(name);
    if (idx < 0) {
      throw new Error(`missing column "${name}" (found: ${table.columns.join(", ")})`);
    }
    return idx;
  });
  return table.rows.map((row) => indices.map((i) => row[i]));
}

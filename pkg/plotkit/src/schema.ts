/** Column schemas of the simulator's CSV outputs plus a validator. */

import { readFileSync } from "fs";
import Papa from "papaparse";

export interface ColumnSpec {
  name: string;
  kind: "string" | "number" | "int" | "bool";
  optional?: boolean; // empty cells allowed
}

export const RESULTS_COLUMNS: ColumnSpec[] = [
  { name: "method", kind: "string" },
  { name: "sweep_axis", kind: "string" },
  { name: "sweep_value", kind: "number", optional: true },
  { name: "seed", kind: "int" },
  { name: "slot", kind: "int" },
  { name: "rmse", kind: "number", optional: true },
  { name: "iterations", kind: "int", optional: true },
  { name: "converged", kind: "bool", optional: true },
];

export const GDOP_COLUMNS: ColumnSpec[] = [
  { name: "x", kind: "number" },
  { name: "y", kind: "number" },
  { name: "deployment", kind: "string" },
  { name: "gdop", kind: "number" },
];

export type Row = Record<string, string>;

export interface ValidationReport {
  path: string;
  schema: string;
  rowCount: number;
  issues: string[];
}

export function sniffSchema(header: string[]): ColumnSpec[] | null {
  const names = header.join(",");
  if (names === RESULTS_COLUMNS.map((c) => c.name).join(",")) return RESULTS_COLUMNS;
  if (names === GDOP_COLUMNS.map((c) => c.name).join(",")) return GDOP_COLUMNS;
  return null;
}

function cellOk(value: string, spec: ColumnSpec): boolean {
  if (value === "") return Boolean(spec.optional);
  switch (spec.kind) {
    case "string":
      return true;
    case "number":
      return Number.isFinite(Number(value)) || value === "inf";
    case "int":
      return Number.isInteger(Number(value));
    case "bool":
      return value === "0" || value === "1" || value === "true" || value === "false";
  }
}

export function parseCsv(path: string): { header: string[]; rows: Row[] } {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<Row>(text.trim(), { header: true, skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new Error(`parse error at row ${e.row}: ${e.message}`);
  }
  return { header: parsed.meta.fields ?? [], rows: parsed.data };
}

/** Check a CSV against the expected schema; never mutates the input file. */
export function validateSchema(
  path: string,
  expected?: "results" | "gdop"
): ValidationReport {
  const report: ValidationReport = { path, schema: "unknown", rowCount: 0, issues: [] };
  let header: string[];
  let rows: Row[];
  try {
    ({ header, rows } = parseCsv(path));
  } catch (err) {
    report.issues.push(`parse-error: ${(err as Error).message}`);
    return report;
  }
  const want =
    expected === "results"
      ? RESULTS_COLUMNS
      : expected === "gdop"
        ? GDOP_COLUMNS
        : sniffSchema(header);
  if (!want) {
    report.issues.push(`unrecognized header: ${header.join(",")}`);
    return report;
  }
  report.schema = want === RESULTS_COLUMNS ? "results" : "gdop";
  const wantNames = want.map((c) => c.name);
  for (const name of wantNames) {
    if (!header.includes(name)) report.issues.push(`missing column: ${name}`);
  }
  for (const name of header) {
    if (!wantNames.includes(name)) report.issues.push(`unexpected column: ${name}`);
  }
  if (report.issues.length > 0) return report;

  report.rowCount = rows.length;
  for (const [i, row] of rows.entries()) {
    for (const spec of want) {
      const v = row[spec.name];
      if (v === undefined || !cellOk(v, spec)) {
        report.issues.push(`row ${i + 1}: bad ${spec.kind} in ${spec.name}: ${JSON.stringify(v)}`);
        if (report.issues.length >= 20) {
          report.issues.push("further issues suppressed");
          return report;
        }
      }
    }
  }
  return report;
}

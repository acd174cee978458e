import { execFileSync } from "child_process";
import { createHash } from "crypto";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

const ROOT = join(__dirname, "..");
const CLI = join(ROOT, "dist", "cli.js");
const FIXTURES = join(__dirname, "fixtures");

function cli(args: string[]): { code: number; out: string } {
  try {
    const out = execFileSync("node", [CLI, ...args], { encoding: "utf8" });
    return { code: 0, out };
  } catch (err) {
    const e = err as { status?: number; stdout?: string; stderr?: string };
    return { code: e.status ?? 1, out: `${e.stdout ?? ""}${e.stderr ?? ""}` };
  }
}

describe("plotkit CLI", () => {
  it.skipIf(!existsSync(CLI))("renders and validates end to end", { timeout: 120_000 }, () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-cli-"));
    const out = join(dir, "conv.svg");
    const res = cli(["convergence", "--in", join(FIXTURES, "results.csv"), "--out", out]);
    expect(res.code).toBe(0);
    expect(readFileSync(out, "utf8").startsWith("<svg")).toBe(true);

    const good = cli(["validate", "--in", join(FIXTURES, "results.csv")]);
    expect(good.code).toBe(0);
    expect(good.out).toContain("valid results file");
  });

  it.skipIf(!existsSync(CLI))("rejects corrupted headers with nonzero exit", { timeout: 120_000 }, () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-cli-"));
    const bad = join(dir, "bad.csv");
    const original = readFileSync(join(FIXTURES, "results.csv"), "utf8");
    writeFileSync(bad, original.replace("method", "methud"));
    const res = cli(["validate", "--in", bad, "--schema", "results"]);
    expect(res.code).toBe(1);
    expect(res.out).toContain("methud");
  });

  it.skipIf(!existsSync(CLI))("figure bytes stable across process invocations", { timeout: 120_000 }, () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-cli-"));
    const a = join(dir, "a.svg");
    const b = join(dir, "b.svg");
    cli(["cdf", "--in", join(FIXTURES, "results.csv"), "--out", a]);
    cli(["cdf", "--in", join(FIXTURES, "results.csv"), "--out", b]);
    const ha = createHash("sha256").update(readFileSync(a)).digest("hex");
    const hb = createHash("sha256").update(readFileSync(b)).digest("hex");
    expect(ha).toBe(hb);
  });
});

#!/usr/bin/env node
/** plotkit <kind> --in <csv> --out <svg> [--style <json>] plus `validate`. */

import { readFileSync } from "fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { FIGURE_KINDS, FigureKind } from "./figures.js";
import { renderFigure } from "./render.js";
import { validateSchema } from "./schema.js";

function loadStyle(path?: string): unknown {
  if (!path) return {};
  return JSON.parse(readFileSync(path, "utf8"));
}

async function main(): Promise<number> {
  const parser = yargs(hideBin(process.argv))
    .scriptName("plotkit")
    .usage("$0 <kind> --in <csv> --out <svg> [--style <json>]")
    .command("validate", "check a CSV against the expected schema", (y) =>
      y
        .option("in", { type: "string", demandOption: true, describe: "input CSV" })
        .option("schema", {
          choices: ["results", "gdop"] as const,
          describe: "expected schema (sniffed from the header when omitted)",
        })
    )
    .command("$0 <kind>", "render a figure", (y) =>
      y
        .positional("kind", { choices: FIGURE_KINDS, demandOption: true })
        .option("in", { type: "string", demandOption: true, describe: "input CSV" })
        .option("out", { type: "string", demandOption: true, describe: "output SVG" })
        .option("style", { type: "string", describe: "style JSON file" })
    )
    .strict()
    .help();

  const argv = await parser.parse();
  const command = argv._[0];

  if (command === "validate" || (argv.in && !argv.out && !argv.kind)) {
    const report = validateSchema(argv.in as string, argv.schema as never);
    if (report.issues.length === 0) {
      console.log(`${report.path}: valid ${report.schema} file, ${report.rowCount} rows`);
      return 0;
    }
    console.error(`${report.path}: ${report.issues.length} issue(s)`);
    for (const issue of report.issues) console.error(`  - ${issue}`);
    return 1;
  }

  try {
    const { rows } = renderFigure({
      kind: argv.kind as FigureKind,
      input: argv.in as string,
      output: argv.out as string,
      style: loadStyle(argv.style as string | undefined),
    });
    console.log(`wrote ${argv.out} from ${rows} rows`);
    return 0;
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});

#!/usr/bin/env node
// Usage: eitopt-render render --spec fig.json

import { readFileSync, writeFileSync } from "fs";

import { renderFromSpec } from "./render.js";
import { SchemaError, asFigureSpec } from "./types.js";

export function main(argv: string[]): number {
  if (argv[0] !== "render") {
    process.stderr.write("usage: eitopt-render render --spec <fig.json>\n");
    return 1;
  }
  const flag = argv.indexOf("--spec");
  if (flag < 0 || flag + 1 >= argv.length) {
    process.stderr.write("missing --spec <fig.json>\n");
    return 1;
  }
  try {
    const spec = asFigureSpec(JSON.parse(readFileSync(argv[flag + 1], "utf-8")));
    const svg = renderFromSpec(spec);
    writeFileSync(spec.output, svg);
    process.stdout.write(`${spec.output}\n`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`schema error: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`${String(err)}\n`);
    return 2;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}

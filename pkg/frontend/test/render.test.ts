import { mkdtempSync, readFileSync, statSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { renderFromSpec } from "../src/render.js";
import { SchemaError } from "../src/types.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function countMatches(svg: string, pattern: RegExp): number {
  return (svg.match(pattern) ?? []).length;
}

describe("variance map figure", () => {
  const spec = {
    kind: "variance-map" as const,
    artifact: join(FIXTURES, "variance_maps.json"),
    output: "unused.svg",
    field: "posterior-final" as const,
  };

  it("renders one arc per electrode plus a colorbar", () => {
    const svg = renderFromSpec(spec);
    expect(svg.length).toBeGreaterThan(1000);
    expect(countMatches(svg, /class="electrode-arc"/g)).toBe(4);
    expect(countMatches(svg, /class="colorbar"/g)).toBe(1);
    expect(countMatches(svg, /class="feeding-cord"/g)).toBe(1);
    expect(countMatches(svg, /class="cell"/g)).toBeGreaterThan(50);
  });

  it("is deterministic", () => {
    expect(renderFromSpec(spec)).toBe(renderFromSpec(spec));
  });

  it("renders the prior field too", () => {
    const svg = renderFromSpec({ ...spec, field: "prior" as const });
    expect(countMatches(svg, /class="electrode-arc"/g)).toBe(4);
  });
});

describe("fd vector figure", () => {
  const spec = {
    kind: "fd-vectors" as const,
    artifact: join(FIXTURES, "fd_comparison.json"),
    output: "unused.svg",
  };

  it("draws the analytic vector and the difference-scheme grid", () => {
    const svg = renderFromSpec(spec);
    expect(countMatches(svg, /class="analytic-vector"/g)).toBe(1);
    expect(countMatches(svg, /class="analytic-star"/g)).toBe(1);
    expect(countMatches(svg, /class="fd-vector"/g)).toBeGreaterThan(10);
    expect(countMatches(svg, /class="colorbar"/g)).toBe(1);
  });
});

describe("mc convergence figure", () => {
  const spec = {
    kind: "mc-convergence" as const,
    artifact: join(FIXTURES, "evaluation.json"),
    output: "unused.svg",
  };

  it("draws running means and the dashed trace lines", () => {
    const svg = renderFromSpec(spec);
    expect(countMatches(svg, /class="running-mean-initial"/g)).toBe(1);
    expect(countMatches(svg, /class="running-mean-optimized"/g)).toBe(1);
    expect(countMatches(svg, /class="trace-line-initial"/g)).toBe(1);
    expect(countMatches(svg, /stroke-dasharray/g)).toBeGreaterThanOrEqual(2);
  });
});

describe("iterate trace figure", () => {
  it("renders the objective history", () => {
    const svg = renderFromSpec({
      kind: "iterate-trace" as const,
      artifact: join(FIXTURES, "iterates.jsonl"),
      output: "unused.svg",
    });
    expect(countMatches(svg, /class="psi-trace"/g)).toBe(1);
    expect(countMatches(svg, /class="psi-point"/g)).toBeGreaterThan(1);
  });
});

describe("cli", () => {
  it("writes nonzero image files for all three fixture artifacts", () => {
    const dir = mkdtempSync(join(tmpdir(), "eitopt-render-"));
    const figures: [string, string, object][] = [
      ["variance-map", "variance_maps.json", { field: "posterior-final" }],
      ["fd-vectors", "fd_comparison.json", {}],
      ["mc-convergence", "evaluation.json", {}],
    ];
    for (const [kind, artifact, extra] of figures) {
      const specPath = join(dir, `${kind}.json`);
      const outPath = join(dir, `${kind}.svg`);
      writeFileSync(specPath, JSON.stringify({
        kind, artifact: join(FIXTURES, artifact), output: outPath, ...extra,
      }));
      expect(main(["render", "--spec", specPath])).toBe(0);
      expect(statSync(outPath).size).toBeGreaterThan(500);
      expect(readFileSync(outPath, "utf-8")).toContain("<svg");
    }
  });

  it("rejects malformed artifacts with the offending field named", () => {
    const dir = mkdtempSync(join(tmpdir(), "eitopt-render-bad-"));
    const artifact = join(dir, "broken.json");
    writeFileSync(artifact, JSON.stringify({ schema: "eitopt-variance-maps-v1" }));
    const specPath = join(dir, "spec.json");
    writeFileSync(specPath, JSON.stringify({
      kind: "variance-map", artifact, output: join(dir, "x.svg"),
    }));
    expect(main(["render", "--spec", specPath])).toBe(2);
    expect(() => renderFromSpec({
      kind: "variance-map", artifact, output: join(dir, "x.svg"),
    })).toThrow(SchemaError);
  });

  it("rejects unsupported output formats", () => {
    expect(() => renderFromSpec({
      kind: "mc-convergence",
      artifact: join(FIXTURES, "evaluation.json"),
      output: "x.png",
      format: "png",
    })).toThrow(/format/);
  });
});

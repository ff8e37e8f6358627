// Renderers for the four figure kinds, all producing standalone SVG strings.

import { readFileSync } from "fs";

import { makeScale } from "./colormap.js";
import { Svg, formatTick, makeFrame } from "./svg.js";
import {
  EvaluationDoc,
  FdComparisonDoc,
  FigureSpec,
  IterateRecord,
  SchemaError,
  VarianceMapsDoc,
  asEvaluation,
  asFdComparison,
  asFigureSpec,
  asVarianceMaps,
} from "./types.js";

const ELECTRODE_COLOR = "#d62728";
const FEEDING_CORD = 0.22;   // radial cord length of the feeding electrode marker
const PLAIN_CORD = 0.1;

export function renderVarianceMap(doc: VarianceMapsDoc, spec: FigureSpec): string {
  const width = spec.width ?? 520;
  const height = spec.height ?? 460;
  const values =
    spec.field === "prior" ? doc.prior_diag :
    spec.field === "posterior-init" ? doc.posterior_diag_init :
    doc.posterior_diag_final;
  const layout = spec.field === "posterior-init" ? doc.layout_init : doc.layout_final;

  const xs = doc.background.nodes.map((p) => p[0]);
  const ys = doc.background.nodes.map((p) => p[1]);
  const pad = 0.32;
  const frame = makeFrame(Math.min(...xs) - pad, Math.max(...xs) + pad,
    Math.min(...ys) - pad, Math.max(...ys) + pad, 10, 10, width - 90, height - 20);
  const scale = makeScale(spec.color_min ?? Math.min(...values),
    spec.color_max ?? Math.max(...values));

  const svg = new Svg(width, height);
  for (const tri of doc.background.triangles) {
    const mean = (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3;
    svg.polygon(tri.map((i) => frame.map(doc.background.nodes[i])) as [number, number][],
      scale.color(mean), "cell");
  }
  svg.polyline(doc.boundary.map((p) => frame.map(p)), "black", 1.2, "outline");
  layout.arcs.forEach((arc, m) => {
    const pts = arc.map((p) => frame.map(p));
    svg.polyline(pts, ELECTRODE_COLOR, 5, "electrode-arc");
    // cord marker: radial tick at the arc center, longer for the feeding electrode
    const mid = arc[Math.floor(arc.length / 2)];
    const norm = Math.hypot(mid[0], mid[1]) || 1;
    const cord = m === layout.feeding_index ? FEEDING_CORD : PLAIN_CORD;
    const tip: [number, number] = [mid[0] * (1 + cord / norm), mid[1] * (1 + cord / norm)];
    const [x1, y1] = frame.map(mid);
    const [x2, y2] = frame.map(tip);
    svg.line(x1, y1, x2, y2, ELECTRODE_COLOR, m === layout.feeding_index ? 3 : 2,
      m === layout.feeding_index ? "feeding-cord" : "cord");
  });
  svg.colorbar(width - 66, 30, 16, height - 80, scale);
  return svg.toString();
}

export function renderFdVectors(doc: FdComparisonDoc, spec: FigureSpec): string {
  const width = spec.width ?? 480;
  const height = spec.height ?? 460;
  const criterion = spec.criterion ?? "D";
  const analytic = doc.analytic[criterion];
  if (analytic.length !== 2) {
    throw new SchemaError("fd-vectors figure needs a two-angle configuration");
  }
  const rows = doc.estimates.filter((e) => e.criterion === criterion);
  const all = rows.map((e) => e.vector).concat([analytic]);
  const span = Math.max(...all.map((v) => Math.hypot(v[0], v[1]))) * 1.15 || 1;
  const frame = makeFrame(-span, span, -span, span, 10, 10, width - 90, height - 20);
  const steps = [...new Set(rows.map((e) => e.step))].sort((a, b) => a - b);
  const scale = makeScale(Math.log10(steps[0] || 1e-6), Math.log10(steps[steps.length - 1] || 1));

  const svg = new Svg(width, height);
  svg.line(frame.toX(-span), frame.toY(0), frame.toX(span), frame.toY(0), "#bbb", 1);
  svg.line(frame.toX(0), frame.toY(-span), frame.toX(0), frame.toY(span), "#bbb", 1);
  for (const row of rows) {
    const [x, y] = frame.map([row.vector[0], row.vector[1]]);
    svg.line(frame.toX(0), frame.toY(0), x, y, scale.color(Math.log10(row.step)),
      0.8, "fd-vector");
    svg.circle(x, y, 1.5 + row.order / 2, scale.color(Math.log10(row.step)), "fd-marker");
  }
  const [ax, ay] = frame.map([analytic[0], analytic[1]]);
  svg.line(frame.toX(0), frame.toY(0), ax, ay, "green", 2.5, "analytic-vector");
  svg.add(`<path class="analytic-star" fill="green" d="${starPath(ax, ay, 7)}"/>`);
  svg.text(12, 20, `search directions, ${criterion === "A" ? "trace" : "log-determinant"}`
    + " criterion", 13);
  svg.colorbar(width - 66, 30, 16, height - 80, scale);
  svg.text(width - 70, 20, "log10 step", 10);
  return svg.toString();
}

export function renderMcConvergence(doc: EvaluationDoc, spec: FigureSpec): string {
  const width = spec.width ?? 520;
  const height = spec.height ?? 400;
  const n = doc.running_mean_a.length;
  const all = doc.running_mean_a.concat(doc.running_mean_b)
    .concat([doc.trace_init ?? Infinity, doc.trace_final ?? Infinity].filter(isFinite));
  const hi = Math.max(...all) * 1.1;
  const frame = makeFrame(1, Math.max(n, 2), 0, hi, 50, 15, width - 70, height - 55);

  const svg = new Svg(width, height);
  const series: [number[], string, string][] = [
    [doc.running_mean_a, "#d62728", "running-mean-initial"],
    [doc.running_mean_b, "#1f77b4", "running-mean-optimized"],
  ];
  for (const [ys, color, cls] of series) {
    svg.polyline(ys.map((v, i) => frame.map([i + 1, v])), color, 1.8, cls);
  }
  if (doc.trace_init !== undefined) {
    svg.line(frame.toX(1), frame.toY(doc.trace_init), frame.toX(n), frame.toY(doc.trace_init),
      "#d62728", 1.2, "trace-line-initial", true);
  }
  if (doc.trace_final !== undefined) {
    svg.line(frame.toX(1), frame.toY(doc.trace_final), frame.toX(n), frame.toY(doc.trace_final),
      "#1f77b4", 1.2, "trace-line-optimized", true);
  }
  svg.line(frame.toX(1), frame.toY(0), frame.toX(n), frame.toY(0), "black", 1);
  svg.line(frame.toX(1), frame.toY(0), frame.toX(1), frame.toY(hi), "black", 1);
  for (let k = 0; k <= 4; k++) {
    const v = (hi * k) / 4;
    svg.text(44, frame.toY(v) + 4, formatTick(v), 10, "end");
  }
  svg.text(width / 2, height - 8, "number of draws", 12, "middle");
  svg.text(12, 14, `squared-error running means (ratio ${doc.ratio.toFixed(3)})`, 12);
  return svg.toString();
}

export function renderIterateTrace(records: IterateRecord[], spec: FigureSpec): string {
  const width = spec.width ?? 520;
  const height = spec.height ?? 360;
  if (records.length === 0) {
    throw new SchemaError("iterate trace: empty history");
  }
  const psis = records.map((r) => r.psi);
  const lo = Math.min(...psis);
  const hi = Math.max(...psis);
  const frame = makeFrame(0, Math.max(records.length - 1, 1), lo - 0.05 * (hi - lo || 1),
    hi + 0.05 * (hi - lo || 1), 60, 15, width - 80, height - 55);
  const svg = new Svg(width, height);
  svg.polyline(records.map((r, i) => frame.map([i, r.psi])), "#1f77b4", 1.8, "psi-trace");
  records.forEach((r, i) => {
    const [x, y] = frame.map([i, r.psi]);
    svg.circle(x, y, 2.5, "#1f77b4", "psi-point");
  });
  svg.text(width / 2, height - 8, "iteration", 12, "middle");
  svg.text(12, 14, "objective over accepted iterates", 12);
  for (const frac of [0, 0.5, 1]) {
    const v = lo + frac * (hi - lo || 1);
    svg.text(54, frame.toY(v) + 4, formatTick(v), 10, "end");
  }
  return svg.toString();
}

function starPath(cx: number, cy: number, r: number): string {
  const pts: string[] = [];
  for (let k = 0; k < 10; k++) {
    const rad = k % 2 === 0 ? r : r / 2.4;
    const a = (Math.PI * k) / 5 - Math.PI / 2;
    pts.push(`${(cx + rad * Math.cos(a)).toFixed(2)},${(cy + rad * Math.sin(a)).toFixed(2)}`);
  }
  return `M${pts.join("L")}Z`;
}

export function renderFromSpec(rawSpec: unknown): string {
  const spec = asFigureSpec(rawSpec);
  if (spec.kind === "iterate-trace") {
    const lines = readFileSync(spec.artifact, "utf-8").trim().split("\n");
    const records = lines.map((line) => JSON.parse(line) as IterateRecord);
    return renderIterateTrace(records, spec);
  }
  const doc = JSON.parse(readFileSync(spec.artifact, "utf-8"));
  switch (spec.kind) {
    case "variance-map":
      return renderVarianceMap(asVarianceMaps(doc), spec);
    case "fd-vectors":
      return renderFdVectors(asFdComparison(doc), spec);
    case "mc-convergence":
      return renderMcConvergence(asEvaluation(doc), spec);
  }
  throw new SchemaError(`unhandled figure kind "${spec.kind}"`);
}

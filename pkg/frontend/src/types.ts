// Artifact schemas emitted by the optimization pipeline, plus the figure spec.

export interface BackgroundMeshDoc {
  schema: string;
  nodes: [number, number][];
  triangles: [number, number, number][];
}

export interface LayoutDoc {
  theta_minus: number[];
  theta_plus: number[];
  feeding_index: number;
  arcs: [number, number][][];
}

export interface VarianceMapsDoc {
  schema: "eitopt-variance-maps-v1";
  background: BackgroundMeshDoc;
  boundary: [number, number][];
  prior_diag: number[];
  posterior_diag_init: number[];
  posterior_diag_final: number[];
  layout_init: LayoutDoc;
  layout_final: LayoutDoc;
}

export interface FdEstimate {
  criterion: "A" | "D";
  order: number;
  step: number;
  family: string;
  vector: number[];
  rel_norm_err: number;
  angle_deg: number;
}

export interface FdComparisonDoc {
  schema: "eitopt-fd-comparison-v1";
  theta: number[];
  analytic: { A: number[]; D: number[] };
  estimates: FdEstimate[];
}

export interface EvaluationDoc {
  schema: "eitopt-evaluation-v1";
  n_draw: number;
  running_mean_a: number[];
  running_mean_b: number[];
  trace_init?: number;
  trace_final?: number;
  ratio: number;
}

export interface IterateRecord {
  iteration: number;
  psi: number;
  grad_norm: number;
  t_min: number;
}

export type FigureKind = "variance-map" | "fd-vectors" | "mc-convergence" | "iterate-trace";

export interface FigureSpec {
  kind: FigureKind;
  artifact: string;            // path to the JSON (or JSONL) artifact
  output: string;              // output image path
  format?: "svg";
  field?: "prior" | "posterior-init" | "posterior-final";
  criterion?: "A" | "D";
  color_min?: number;
  color_max?: number;
  width?: number;
  height?: number;
}

export class SchemaError extends Error {}

function requireKeys(doc: Record<string, unknown>, keys: string[], what: string): void {
  for (const key of keys) {
    if (!(key in doc)) {
      throw new SchemaError(`${what}: missing field "${key}"`);
    }
  }
}

export function asVarianceMaps(doc: unknown): VarianceMapsDoc {
  const d = doc as VarianceMapsDoc;
  requireKeys(d as unknown as Record<string, unknown>,
    ["schema", "background", "boundary", "prior_diag", "posterior_diag_init",
      "posterior_diag_final", "layout_init", "layout_final"], "variance-maps artifact");
  if (d.schema !== "eitopt-variance-maps-v1") {
    throw new SchemaError(`unexpected schema "${d.schema}" for variance-maps artifact`);
  }
  if (d.prior_diag.length !== d.background.nodes.length) {
    throw new SchemaError("variance-maps artifact: field length does not match node count");
  }
  return d;
}

export function asFdComparison(doc: unknown): FdComparisonDoc {
  const d = doc as FdComparisonDoc;
  requireKeys(d as unknown as Record<string, unknown>,
    ["schema", "analytic", "estimates"], "fd-comparison artifact");
  if (d.schema !== "eitopt-fd-comparison-v1") {
    throw new SchemaError(`unexpected schema "${d.schema}" for fd-comparison artifact`);
  }
  return d;
}

export function asEvaluation(doc: unknown): EvaluationDoc {
  const d = doc as EvaluationDoc;
  requireKeys(d as unknown as Record<string, unknown>,
    ["schema", "running_mean_a", "running_mean_b", "ratio"], "evaluation artifact");
  if (d.schema !== "eitopt-evaluation-v1") {
    throw new SchemaError(`unexpected schema "${d.schema}" for evaluation artifact`);
  }
  return d;
}

export function asFigureSpec(doc: unknown): FigureSpec {
  const d = doc as FigureSpec;
  requireKeys(d as unknown as Record<string, unknown>, ["kind", "artifact", "output"],
    "figure spec");
  const kinds: FigureKind[] = ["variance-map", "fd-vectors", "mc-convergence", "iterate-trace"];
  if (!kinds.includes(d.kind)) {
    throw new SchemaError(`unknown figure kind "${d.kind}"`);
  }
  if (d.format !== undefined && d.format !== "svg") {
    throw new SchemaError(`unsupported output format "${d.format}" (only svg)`);
  }
  return d;
}

"""Declarative experiment runner and command-line interface.

A single JSON document describes an experiment: the domain curve, electrode
bank, prior, noise, criterion, mesh sizes, optimizer knobs and seeds.  The
runner materializes defaults, executes the requested stage and writes JSON
artifacts (config echo, iterate history, final layout, variance fields) so
plotting needs no numerics.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import jsonschema

from . import geometry
from .bayes import build_noise, build_prior, criterion_gradient, criterion_value, \
    posterior_covariance
from .forward import CurrentPatternSet, measurement_map
from .geometry import BoundaryCurve, ElectrodeLayout, GeometryError, make_layout
from .meshing import build_background, build_mesh, build_projection, mesh_to_json, \
    background_to_json
from .optimizer import DesignEvaluator, optimize
from .reconstruction import evaluate_layouts


class ConfigError(Exception):
    pass


class BudgetError(Exception):
    pass


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "name", "curve", "electrodes", "prior", "criterion", "mesh"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "name": {"type": "string"},
        "curve": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["disk", "ellipse", "peanut", "complicated", "custom-radial"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "semi_axes": {"type": "array", "items": {"type": "number"}, "minItems": 2,
                              "maxItems": 2},
                "amplitude": {"type": "number"},
                "coefficients": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
        },
        "electrodes": {
            "type": "object",
            "required": ["count", "width"],
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 2},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "init": {"oneOf": [{"const": "equidistant"},
                                   {"type": "array", "items": {"type": "number"}}]},
                "phase": {"type": "number"},
                "contact_impedance": {"type": "number", "exclusiveMinimum": 0},
                "feeding_index": {"type": "integer", "minimum": 0},
            },
        },
        "prior": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["homogeneous", "disk-inclusion", "half-plane-split"]},
                "correlation_length": {"type": "number", "minimum": 0},
                "mean": {"type": "number"},
                "kappa": {"type": "number"},
                "kappa_in": {"type": "number"},
                "kappa_out": {"type": "number"},
                "kappa_upper": {"type": "number"},
                "kappa_lower": {"type": "number"},
                "center": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": "number"},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"relative_factor": {"type": "number", "exclusiveMinimum": 0}},
        },
        "criterion": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["A", "D"]},
                "alpha": {"type": "number", "minimum": 0},
            },
        },
        "mesh": {
            "type": "object",
            "required": ["target_h"],
            "additionalProperties": False,
            "properties": {
                "target_h": {"type": "number", "exclusiveMinimum": 0},
                "background_h": {"type": "number", "exclusiveMinimum": 0},
                "background_scale": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_rel": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "line_search_evals": {"type": "integer", "minimum": 3},
                "gap_floor_fraction": {"type": "number", "minimum": 0},
                "step_cap": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "brute_force": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "points_per_angle": {"type": "integer", "minimum": 2},
                "max_evaluations": {"type": "integer", "minimum": 1},
                "refine": {"type": "boolean"},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_draw": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "sigma_floor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"master": {"type": "integer"}},
        },
        "output_dir": {"type": ["string", "null"]},
    },
}

DEFAULTS = {
    "electrodes": {"init": "equidistant", "phase": 0.0, "contact_impedance": 1.0,
                   "feeding_index": 0},
    "prior": {"correlation_length": 0.5, "mean": 1.0},
    "noise": {"relative_factor": 1e-3},
    "criterion": {"alpha": 1e-4},
    "mesh": {"background_scale": 1.05},
    "optimizer": {"tol_rel": 1e-6, "max_iters": 200, "line_search_evals": 20,
                  "gap_floor_fraction": 0.02, "step_cap": 0.5},
    "brute_force": {"points_per_angle": 24, "max_evaluations": 100000, "refine": True,
                    "workers": 1},
    "evaluation": {"n_draw": 50, "seed": 7, "sigma_floor": 0.01},
    "seeds": {"master": 0},
    "output_dir": None,
}


@dataclass
class ExperimentConfig:
    data: dict

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {path}: {exc.message}") from exc
        data = json.loads(json.dumps(raw))   # deep copy
        for section, defaults in DEFAULTS.items():
            if isinstance(defaults, dict):
                block = data.setdefault(section, {})
                for key, val in defaults.items():
                    block.setdefault(key, val)
            else:
                data.setdefault(section, defaults)
        data.setdefault("output_dir", None)
        # conductivity grid defaults to twice the mesh spacing: matching the two
        # makes the criterion landscape noticeably rougher under re-meshing
        # (interpolating the background hats onto sliding mesh nodes)
        data["mesh"].setdefault("background_h", 2.0 * data["mesh"]["target_h"])
        return ExperimentConfig(data)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    def __getitem__(self, key):
        return self.data[key]


def build_curve(spec: dict) -> BoundaryCurve:
    kind = spec["kind"]
    if kind == "disk":
        return BoundaryCurve.disk(spec.get("radius", 1.0))
    if kind == "ellipse":
        a, b = spec.get("semi_axes", (1.0, 0.65))
        return BoundaryCurve.ellipse(a, b)
    if kind == "peanut":
        return BoundaryCurve.peanut(spec.get("amplitude", 0.35))
    if kind == "complicated":
        return BoundaryCurve.complicated()
    if kind == "custom-radial":
        if "coefficients" not in spec:
            raise ConfigError("curve kind custom-radial needs coefficients")
        return BoundaryCurve.custom(spec["coefficients"])
    raise ConfigError(f"unknown curve kind {kind!r}")


class Experiment:
    """All fixed ingredients of one experiment, built once from a config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        data = config.data
        self.curve = build_curve(data["curve"])
        el = data["electrodes"]
        m = el["count"]
        if el["init"] == "equidistant":
            theta_init = el["phase"] + 2 * np.pi * np.arange(m) / m
        else:
            theta_init = np.asarray(el["init"], dtype=float)
            if len(theta_init) != m:
                raise ConfigError("electrodes.init length must equal electrodes.count")
        self.theta_init = theta_init
        self.widths = np.full(m, el["width"])
        self.contact_impedance = np.full(m, el["contact_impedance"])
        self.feeding_index = el["feeding_index"]
        if self.feeding_index >= m:
            raise ConfigError("electrodes.feeding_index out of range")
        self.patterns = CurrentPatternSet.feeding_basis(m, self.feeding_index)
        self.background = build_background(self.curve, data["mesh"]["background_h"],
                                           data["mesh"]["background_scale"])
        self.prior = build_prior(self.background, data["prior"])
        self.layout_init = make_layout(self.curve, theta_init, self.widths,
                                       self.contact_impedance, self.feeding_index)
        self.target_h = data["mesh"]["target_h"]
        mesh0 = build_mesh(self.curve, self.layout_init, self.target_h)
        proj0 = build_projection(self.background, mesh0)
        initial = measurement_map(mesh0, proj0.apply(self.prior.mean),
                                  self.layout_init, self.patterns)
        self.noise = build_noise(initial, data["noise"]["relative_factor"])
        self.initial_measurements = initial

    def evaluator(self, criterion: str = None) -> DesignEvaluator:
        data = self.config.data
        kind = criterion or data["criterion"]["kind"]
        return DesignEvaluator(self.curve, self.widths, self.contact_impedance,
                               self.patterns, self.background, self.prior, self.noise,
                               self.target_h, kind, data["criterion"]["alpha"],
                               self.feeding_index)


def _dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _layout_json(curve: BoundaryCurve, layout: ElectrodeLayout) -> dict:
    arcs = []
    for i in range(layout.n_electrodes):
        phis = np.linspace(layout.theta_minus[i], layout.theta_plus[i], 17)
        arcs.append(curve.point(phis).tolist())
    return {
        "theta_minus": layout.theta_minus.tolist(),
        "theta_plus": layout.theta_plus.tolist(),
        "widths": layout.widths.tolist(),
        "contact_impedance": layout.contact_impedance.tolist(),
        "feeding_index": layout.feeding_index,
        "arcs": arcs,
    }


def _boundary_polyline(curve: BoundaryCurve, n: int = 256) -> list:
    phis = np.linspace(0.0, 2 * np.pi, n + 1)
    return curve.point(phis).tolist()


def run_case(config: ExperimentConfig) -> dict:
    """Optimize the configured case and emit the full artifact bundle."""
    exp = Experiment(config)
    evaluator = exp.evaluator()
    records = []
    result = optimize(evaluator, exp.theta_init, **{
        "tol_rel": config["optimizer"]["tol_rel"],
        "max_iters": config["optimizer"]["max_iters"],
        "line_search_evals": config["optimizer"]["line_search_evals"],
        "gap_floor_fraction": config["optimizer"]["gap_floor_fraction"],
        "step_cap": config["optimizer"]["step_cap"],
    }, progress=records.append)

    post_init, _ = evaluator.posterior(exp.theta_init)
    post_final, ws_final = evaluator.posterior(result.theta)
    layout_final = ws_final.layout
    bundle = {
        "config": config.data,
        "history": records,
        "theta_init": exp.theta_init.tolist(),
        "theta_final": result.theta.tolist(),
        "psi_init": records[0]["psi"],
        "psi_final": result.psi,
        "iterations": result.iteration,
        "reason": result.reason,
        "final_layout": _layout_json(exp.curve, layout_final),
        "variance_maps": {
            "schema": "eitopt-variance-maps-v1",
            "background": background_to_json(exp.background),
            "boundary": _boundary_polyline(exp.curve),
            "prior_diag": np.diag(exp.prior.cov).tolist(),
            "posterior_diag_init": post_init.diagonal().tolist(),
            "posterior_diag_final": post_final.diagonal().tolist(),
            "layout_init": _layout_json(exp.curve, exp.layout_init),
            "layout_final": _layout_json(exp.curve, layout_final),
        },
    }
    out = config["output_dir"]
    if out:
        out = Path(out)
        _dump_json(bundle["config"], out / "config_echo.json")
        with open(out / "iterates.jsonl", "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        _dump_json(bundle["final_layout"], out / "final_layout.json")
        _dump_json(bundle["variance_maps"], out / "variance_maps.json")
        _dump_json({k: bundle[k] for k in ("theta_init", "theta_final", "psi_init",
                                           "psi_final", "iterations", "reason")},
                   out / "result.json")
    return bundle


@dataclass
class BruteForceResult:
    grid_points: np.ndarray      # (E, M) evaluated lower angles
    psi_a: np.ndarray
    psi_d: np.ndarray
    resolution: int
    refined: bool = False

    def argmin(self, kind: str):
        values = self.psi_a if kind == "A" else self.psi_d
        k = int(np.argmin(values))
        return self.grid_points[k], float(values[k])

    def to_json(self) -> dict:
        return {
            "schema": "eitopt-bruteforce-v1",
            "resolution": self.resolution,
            "refined": self.refined,
            "grid_points": self.grid_points.tolist(),
            "psi_A": self.psi_a.tolist(),
            "psi_D": self.psi_d.tolist(),
            "argmin_A": self.argmin("A")[0].tolist(),
            "argmin_D": self.argmin("D")[0].tolist(),
            "min_A": self.argmin("A")[1],
            "min_D": self.argmin("D")[1],
        }


_WORKER_EXPERIMENT = None


def _bf_init(config_data):
    global _WORKER_EXPERIMENT
    _WORKER_EXPERIMENT = Experiment(ExperimentConfig.from_dict(config_data))


def _bf_eval(theta):
    exp = _WORKER_EXPERIMENT
    out = exp.evaluator().evaluate(np.asarray(theta))
    return out["A"], out["D"]


def _admissible_tuples(curve, grid, theta_plus_grid, widths, n_electrodes):
    """Cyclically ordered index tuples whose gaps are all positive."""
    out = []
    r = len(grid)
    for combo in itertools.combinations(range(r), n_electrodes):
        for rot in range(n_electrodes):
            idx = combo[rot:] + combo[:rot]
            ok = True
            for a, b in zip(idx, idx[1:] + idx[:1]):
                gap = (grid[b] - theta_plus_grid[a]) % (2 * np.pi)
                width_b = (theta_plus_grid[b] - grid[b]) % (2 * np.pi)
                if gap <= 1e-9 or gap + width_b >= 2 * np.pi:
                    ok = False
                    break
            if ok:
                out.append(idx)
    return out


def brute_force(config: ExperimentConfig, grid_resolution: int = None) -> BruteForceResult:
    """Exhaustive criterion evaluation on an order-preserving angular grid.

    Evaluates both criteria per grid point (they share the solve).  With
    refine enabled, a second local grid around each argmin at one eighth of
    the base step sharpens the minimum without re-running the full sweep.
    """
    exp = Experiment(config)
    bf = config["brute_force"]
    r = grid_resolution or bf["points_per_angle"]
    m = exp.layout_init.n_electrodes
    grid = 2 * np.pi * np.arange(r) / r
    theta_plus_grid = np.array([geometry.endpoint_from_width(exp.curve, g, exp.widths[0])
                                for g in grid])
    tuples = _admissible_tuples(exp.curve, grid, theta_plus_grid, exp.widths, m)
    if len(tuples) > bf["max_evaluations"]:
        raise BudgetError(f"grid needs {len(tuples)} evaluations, budget is "
                          f"{bf['max_evaluations']}; lower points_per_angle")
    points = np.array([[grid[i] for i in idx] for idx in tuples])
    psi_a, psi_d = _evaluate_points(config, exp, points, bf["workers"])
    result = BruteForceResult(points, psi_a, psi_d, r)
    if bf["refine"]:
        step = 2 * np.pi / r
        extra = []
        for kind in ("A", "D"):
            center, _ = result.argmin(kind)
            offsets = step * np.array([-0.75, -0.375, 0.0, 0.375, 0.75])
            local = np.array(list(itertools.product(*[center[i] + offsets
                                                      for i in range(m)])))
            extra.append(local)
        extra = np.vstack(extra)
        keep = []
        for th in extra:
            try:
                lay = make_layout(exp.curve, th, exp.widths, exp.contact_impedance,
                                  exp.feeding_index)
                keep.append(th)
            except GeometryError:
                continue
        if keep:
            extra = np.array(keep)
            ea, ed = _evaluate_points(config, exp, extra, bf["workers"])
            result = BruteForceResult(np.vstack([points, extra]),
                                      np.concatenate([psi_a, ea]),
                                      np.concatenate([psi_d, ed]), r, refined=True)
    return result


def _evaluate_points(config, exp, points, workers):
    psi_a = np.empty(len(points))
    psi_d = np.empty(len(points))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_bf_init,
                                 initargs=(config.data,)) as pool:
            for k, (a, d) in enumerate(pool.map(_bf_eval, points.tolist(),
                                                chunksize=64)):
                psi_a[k], psi_d[k] = a, d
    else:
        evaluator = exp.evaluator()
        for k, th in enumerate(points):
            out = evaluator.evaluate(th)
            psi_a[k], psi_d[k] = out["A"], out["D"]
    return psi_a, psi_d


_STENCILS = {
    2: (np.array([-0.5, 0.5]), np.array([-1, 1])),
    4: (np.array([1, -8, 8, -1]) / 12.0, np.array([-2, -1, 1, 2])),
    6: (np.array([-1, 9, -45, 45, -9, 1]) / 60.0, np.array([-3, -2, -1, 1, 2, 3])),
    8: (np.array([3, -32, 168, -672, 672, -168, 32, -3]) / 840.0,
        np.array([-4, -3, -2, -1, 1, 2, 3, 4])),
}


def derivative_comparison(config: ExperimentConfig, orders=(2, 4, 6, 8),
                          steps=None, families=("morph", "remesh")) -> dict:
    """Analytic criterion gradients against central differences.

    The morph family evaluates perturbed layouts on topology-preserving
    deformations of the base mesh (differentiable, so the comparison isolates
    the derivative formula); the remesh family rebuilds meshes independently
    and documents the re-meshing noise floor at small steps.
    """
    if steps is None:
        steps = np.geomspace(1e-5, 1e-1, 9)
    exp = Experiment(config)
    theta0 = exp.theta_init
    m = len(theta0)
    analytic = {}
    base = {}
    for kind in ("A", "D"):
        evaluator = exp.evaluator(kind)
        ws = evaluator.workspace(theta0)
        post = posterior_covariance(ws.jacobian(), exp.prior, exp.noise)
        analytic[kind] = criterion_gradient(post, ws.jacobian_shape_derivative(), kind,
                                            exp.curve, ws.layout,
                                            config["criterion"]["alpha"])
        base[kind] = (evaluator, ws)
    estimates = []
    for family in families:
        cache = {}

        def psi_pair(theta, family=family):
            key = (family,) + tuple(np.round(theta, 14))
            if key not in cache:
                evaluator, ws0 = base["A"]
                if family == "morph":
                    ws = evaluator.workspace_morphed(theta, ws0)
                else:
                    ws = evaluator.workspace(theta)
                post = posterior_covariance(ws.jacobian(), exp.prior, exp.noise)
                alpha = config["criterion"]["alpha"]
                cache[key] = (criterion_value(post, "A", exp.curve, ws.layout, alpha),
                              criterion_value(post, "D", exp.curve, ws.layout, alpha))
            return cache[key]

        for order, step in itertools.product(orders, steps):
            coef, offs = _STENCILS[order]
            fd = {"A": np.zeros(m), "D": np.zeros(m)}
            for mi in range(m):
                for c, o in zip(coef, offs):
                    th = theta0.copy()
                    th[mi] += o * step
                    pa, pd = psi_pair(th)
                    fd["A"][mi] += c * pa / step
                    fd["D"][mi] += c * pd / step
            for kind in ("A", "D"):
                g, f = analytic[kind], fd[kind]
                denom = np.linalg.norm(f)
                rel = float(np.linalg.norm(g - f) / denom) if denom > 0 else np.inf
                cosang = float(np.dot(g, f) / max(np.linalg.norm(g) * denom, 1e-300))
                estimates.append({
                    "criterion": kind,
                    "order": int(order),
                    "step": float(step),
                    "family": family,
                    "vector": f.tolist(),
                    "rel_norm_err": rel,
                    "angle_deg": float(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))),
                })
    table = {
        "schema": "eitopt-fd-comparison-v1",
        "theta": theta0.tolist(),
        "analytic": {k: v.tolist() for k, v in analytic.items()},
        "estimates": estimates,
    }
    out = config["output_dir"]
    if out:
        _dump_json(table, Path(out) / "fd_comparison.json")
    return table


def run_evaluation(config: ExperimentConfig, layout_b_theta=None) -> dict:
    """Monte-Carlo comparison of the initial layout against an optimized one."""
    exp = Experiment(config)
    if layout_b_theta is None:
        result = optimize(exp.evaluator(), exp.theta_init,
                          tol_rel=config["optimizer"]["tol_rel"],
                          max_iters=config["optimizer"]["max_iters"])
        layout_b_theta = result.theta
    layout_b = make_layout(exp.curve, layout_b_theta, exp.widths,
                           exp.contact_impedance, exp.feeding_index)
    ev = config["evaluation"]
    report = evaluate_layouts(exp.curve, exp.layout_init, layout_b, exp.patterns,
                              exp.background, exp.prior, exp.noise, exp.target_h,
                              ev["n_draw"], ev["seed"], ev["sigma_floor"])
    doc = report.to_json()
    post_a, _ = exp.evaluator("A").posterior(exp.theta_init)
    post_b, _ = exp.evaluator("A").posterior(layout_b_theta)
    doc["trace_init"] = post_a.trace()
    doc["trace_final"] = post_b.trace()
    doc["theta_b"] = np.asarray(layout_b_theta).tolist()
    out = config["output_dir"]
    if out:
        _dump_json(doc, Path(out) / "evaluation.json")
    return doc


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eitopt",
        description="Electrode-placement optimization for 2D impedance tomography")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("run", "optimize electrode positions for a config"),
                        ("brute-force", "grid-evaluate the criterion"),
                        ("fd-check", "compare analytic and FD gradients"),
                        ("evaluate", "Monte-Carlo reconstruction comparison"),
                        ("mesh-dump", "write the initial mesh as JSON")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--output", help="output directory (overrides config)")
        if name == "run":
            p.add_argument("--criterion", choices=["A", "D"])
        if name == "brute-force":
            p.add_argument("--resolution", type=int)
        if name == "fd-check":
            p.add_argument("--orders", type=int, nargs="+", default=[2, 4, 6, 8])
            p.add_argument("--steps", type=float, nargs="+")
        if name == "evaluate":
            p.add_argument("--layout-b", help="final_layout.json of the optimized run")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0

    try:
        config = ExperimentConfig.from_file(args.config)
        if args.output:
            config.data["output_dir"] = args.output
        if args.command == "run":
            if args.criterion:
                config.data["criterion"]["kind"] = args.criterion
            bundle = run_case(config)
            print(f"{config['name']}: psi {bundle['psi_init']:.6g} -> "
                  f"{bundle['psi_final']:.6g} in {bundle['iterations']} iterations "
                  f"({bundle['reason']})")
        elif args.command == "brute-force":
            result = brute_force(config, args.resolution)
            out = config["output_dir"]
            if out:
                _dump_json(result.to_json(), Path(out) / "brute_force.json")
            for kind in ("A", "D"):
                th, v = result.argmin(kind)
                print(f"{kind}-criterion grid minimum {v:.6g} at {np.round(th, 4).tolist()}")
        elif args.command == "fd-check":
            steps = np.asarray(args.steps) if args.steps else None
            table = derivative_comparison(config, tuple(args.orders), steps)
            print(json.dumps({"analytic": table["analytic"]}, sort_keys=True))
        elif args.command == "evaluate":
            theta_b = None
            if args.layout_b:
                with open(args.layout_b) as fh:
                    theta_b = json.load(fh)["theta_minus"]
            doc = run_evaluation(config, theta_b)
            print(f"squared-error ratio (optimized/initial): {doc['ratio']:.4f}")
        elif args.command == "mesh-dump":
            exp = Experiment(config)
            mesh = build_mesh(exp.curve, exp.layout_init, exp.target_h)
            doc = mesh_to_json(mesh)
            out = config["output_dir"]
            if out:
                _dump_json(doc, Path(out) / "mesh.json")
            else:
                print(json.dumps(doc, sort_keys=True))
    except (ConfigError, BudgetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def cli_entry():
    sys.exit(cli_main())

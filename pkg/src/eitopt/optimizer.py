"""Steepest-descent placement optimizer with admissibility-bounded line search.

Every objective evaluation rebuilds the electrode-fitted mesh for the trial
angles; the search direction is the normalized negative gradient, and the
step interval is capped so all gaps stay above a floor.  The line search is
derivative-free (golden section) because re-meshing makes the objective only
piecewise smooth along the ray.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bayes import (DesignError, GaussianPrior, NoiseModel, criterion_gradient,
                    criterion_value, posterior_covariance)
from .forward import CurrentPatternSet
from .geometry import BoundaryCurve, GeometryError, gap_lengths, make_layout
from .meshing import BackgroundMesh, MeshError, build_mesh, build_projection, morph_mesh
from .sensitivity import SensitivityWorkspace


class DesignEvaluator:
    """Maps lower electrode angles to the design objective and its gradient."""

    def __init__(self, curve: BoundaryCurve, widths, contact_impedance,
                 patterns: CurrentPatternSet, background: BackgroundMesh,
                 prior: GaussianPrior, noise: NoiseModel, target_h: float,
                 criterion: str = "A", alpha: float = 1e-4, feeding_index: int = 0):
        self.curve = curve
        self.widths = widths
        self.contact_impedance = contact_impedance
        self.patterns = patterns
        self.background = background
        self.prior = prior
        self.noise = noise
        self.target_h = target_h
        self.criterion = criterion
        self.alpha = alpha
        self.feeding_index = feeding_index

    def layout(self, theta_minus):
        return make_layout(self.curve, theta_minus, self.widths,
                           self.contact_impedance, self.feeding_index)

    def workspace(self, theta_minus) -> SensitivityWorkspace:
        layout = self.layout(theta_minus)
        mesh = build_mesh(self.curve, layout, self.target_h)
        projection = build_projection(self.background, mesh)
        sigma = projection.apply(self.prior.mean)
        return SensitivityWorkspace(self.curve, mesh, sigma, layout,
                                    self.patterns, projection)

    def workspace_morphed(self, theta_minus, base_ws: SensitivityWorkspace):
        """Workspace on a topology-preserving morph of an existing mesh.

        Finite-difference probes use this mesh family: independent re-meshing
        makes the Jacobian only piecewise smooth in the angles, while the
        morphed family is differentiable.
        """
        layout = self.layout(theta_minus)
        mesh = morph_mesh(base_ws.mesh, self.curve, base_ws.layout, layout)
        projection = build_projection(self.background, mesh)
        sigma = projection.apply(self.prior.mean)
        return SensitivityWorkspace(self.curve, mesh, sigma, layout,
                                    self.patterns, projection)

    def value_morphed(self, theta_minus, base_ws: SensitivityWorkspace) -> float:
        ws = self.workspace_morphed(theta_minus, base_ws)
        post = posterior_covariance(ws.jacobian(), self.prior, self.noise)
        return criterion_value(post, self.criterion, self.curve, ws.layout, self.alpha)

    def posterior(self, theta_minus):
        ws = self.workspace(theta_minus)
        return posterior_covariance(ws.jacobian(), self.prior, self.noise), ws

    def evaluate(self, theta_minus) -> dict:
        """Both criteria and their ingredients at one layout (shared solve)."""
        post, ws = self.posterior(theta_minus)
        out = {}
        for kind in ("A", "D"):
            out[kind] = criterion_value(post, kind, self.curve, ws.layout, self.alpha)
        out["trace"] = post.trace()
        out["logdet"] = post.logdet()
        out["gaps"] = gap_lengths(self.curve, ws.layout)
        return out

    def value(self, theta_minus) -> float:
        post, ws = self.posterior(theta_minus)
        return criterion_value(post, self.criterion, self.curve, ws.layout, self.alpha)

    def value_and_gradient(self, theta_minus):
        psi, grad, _ = self.evaluate_full(theta_minus)
        return psi, grad

    def evaluate_full(self, theta_minus):
        """Objective, gradient and the workspace (for morph-based line searches)."""
        post, ws = self.posterior(theta_minus)
        psi = criterion_value(post, self.criterion, self.curve, ws.layout, self.alpha)
        grad = criterion_gradient(post, ws.jacobian_shape_derivative(), self.criterion,
                                  self.curve, ws.layout, self.alpha)
        return psi, grad, ws

    def admissible(self, theta_minus, g_floor: float) -> bool:
        try:
            layout = self.layout(theta_minus)
        except GeometryError:
            return False
        return bool(np.all(gap_lengths(self.curve, layout) > g_floor))

    def gaps(self, theta_minus) -> np.ndarray:
        return gap_lengths(self.curve, self.layout(theta_minus))

    def gap_gradients(self, theta_minus) -> np.ndarray:
        return _gap_gradients(self.curve, self.layout(theta_minus))


@dataclass
class OptimizerState:
    theta: np.ndarray
    psi: float
    gradient: np.ndarray
    iteration: int = 0
    step_bound: float = 0.0
    converged: bool = False
    reason: str = ""
    history: list = field(default_factory=list)


def admissible_step_bound(evaluator: DesignEvaluator, theta, direction, g_floor: float,
                          step_cap: float = 0.5, tol: float = 1e-4) -> float:
    """Largest step along -direction keeping every gap above the floor."""
    if evaluator.admissible(theta - step_cap * direction, g_floor):
        return step_cap
    lo, hi = 0.0, step_cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if evaluator.admissible(theta - mid * direction, g_floor):
            lo = mid
        else:
            hi = mid
    return 0.999 * lo


def line_search(direction, state: OptimizerState, evaluator: DesignEvaluator,
                t_max: float, n_evals: int = 20, base_ws=None):
    """Golden-section scan of psi(theta - t*direction) on [0, t_max].

    Returns (t_min, psi_min) over all sampled points including the upper
    bound; t_min = 0 signals that no sampled point improved on psi(theta).
    With base_ws given, trial layouts are evaluated on morphs of that mesh,
    which removes the re-meshing jitter along the ray (the caller still
    re-checks the winner on a fresh mesh).
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    best_t, best_psi = 0.0, state.psi
    cache = {}

    def psi_at(t):
        if t not in cache:
            theta = state.theta - t * direction
            try:
                if base_ws is not None:
                    try:
                        cache[t] = evaluator.value_morphed(theta, base_ws)
                    except MeshError:
                        cache[t] = evaluator.value(theta)
                else:
                    cache[t] = evaluator.value(theta)
            except (GeometryError, DesignError, MeshError):
                cache[t] = np.inf
        return cache[t]

    a, b = 0.0, t_max
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    budget = n_evals
    pts = [t_max, c, d]
    for t in pts:
        psi_at(t)
        budget -= 1
    while budget > 0 and (d - c) > 1e-12:
        if psi_at(c) < psi_at(d):
            b, d = d, c
            c = b - invphi * (b - a)
            psi_at(c)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
            psi_at(d)
        budget -= 1
    for t, val in cache.items():
        if val < best_psi:
            best_t, best_psi = t, val
    return best_t, best_psi


def _gap_gradients(curve: BoundaryCurve, layout) -> np.ndarray:
    """Rows: gradient of each gap length w.r.t. the lower electrode angles.

    Gap m sits between electrodes m and m+1; both of its endpoints move with
    their electrode (the leading one through the fixed-width coupling, which
    reduces to the boundary speed at theta_minus).
    """
    m = layout.n_electrodes
    speed = curve.speed(layout.theta_minus)
    grads = np.zeros((m, m))
    for i in range(m):
        grads[i, i] = -speed[i]
        grads[i, (i + 1) % m] = speed[(i + 1) % m]
    return grads


def _project_blocked(direction, gaps, gap_grads, g_floor, horizon=0.15):
    """Remove direction components that would drive a nearby gap below the floor.

    Constraints whose gap would hit the floor within the given step horizon
    are treated as active; the step direction is projected so their gap rate
    becomes nonnegative (sliding along the constraint surface).
    """
    d = direction.copy()
    for _ in range(2):
        changed = False
        for i in range(len(gaps)):
            rate = -float(gap_grads[i] @ d)      # gap change per unit step along -d
            if rate < 0 and (gaps[i] - g_floor) / (-rate) < horizon:
                d = d + (rate / float(gap_grads[i] @ gap_grads[i])) * gap_grads[i]
                changed = True
        if not changed:
            break
    norm = np.linalg.norm(d)
    return (d / norm, True) if norm > 1e-10 else (direction, False)


def optimize(evaluator: DesignEvaluator, theta_init, tol_rel: float = 1e-6,
             max_iters: int = 200, line_search_evals: int = 20,
             gap_floor_fraction: float = 0.02, step_cap: float = 0.5,
             progress=None) -> OptimizerState:
    """Steepest descent over the lower electrode angles (fixed widths).

    Stops on relative objective decrease below tol_rel, a failed line search
    (stationary within tolerance), or the iteration cap.  The gap floor is a
    fraction of the mean initial gap and every accepted iterate satisfies it.
    When the raw gradient ray is blocked by the floor, the direction is
    projected onto the active gap constraints and the search retried, so the
    iterate can slide along the admissibility boundary instead of stalling.
    """
    theta = np.asarray(theta_init, dtype=float).copy()
    init_gaps = evaluator.gaps(theta)
    if np.any(init_gaps <= 0):
        raise DesignError("initial layout inadmissible")
    g_floor = gap_floor_fraction * float(np.mean(init_gaps))

    psi, grad, ws = evaluator.evaluate_full(theta)
    psi_init = psi
    state = OptimizerState(theta, psi, grad)
    state.history.append(_record(state, 0.0))
    if progress:
        progress(state.history[-1])

    for it in range(1, max_iters + 1):
        norm = float(np.linalg.norm(state.gradient))
        if norm == 0.0:
            state.converged, state.reason = True, "zero gradient"
            break
        gaps = evaluator.gaps(state.theta)
        gap_grads = evaluator.gap_gradients(state.theta)
        candidates = [state.gradient / norm]
        projected, ok = _project_blocked(candidates[0], gaps, gap_grads, g_floor)
        if ok and np.linalg.norm(projected - candidates[0]) > 1e-12:
            candidates.append(projected)
        t_min, psi_new, direction = 0.0, state.psi, candidates[0]
        for cand in candidates:
            t_max = admissible_step_bound(evaluator, state.theta, cand, g_floor, step_cap)
            if t_max <= 0.0:
                continue
            state.step_bound = t_max
            # trial points on a smooth morph family first, winner re-checked on
            # a fresh mesh; a plain re-meshed pass is the fallback
            for base in ((ws, None) if ws is not None else (None,)):
                t_try, psi_try = line_search(cand, state, evaluator, t_max,
                                             line_search_evals, base_ws=base)
                if base is not None and t_try > 0.0:
                    try:
                        psi_try = evaluator.value(state.theta - t_try * cand)
                    except (GeometryError, DesignError, MeshError):
                        continue
                if t_try > 0.0 and psi_try < psi_new:
                    t_min, psi_new, direction = t_try, psi_try, cand
                    break
            if t_min > 0.0:
                break
        if t_min == 0.0 or psi_new >= state.psi:
            state.converged, state.reason = True, "stationary within tolerance"
            break
        # progress is measured against the accumulated decrease: the raw psi can
        # carry a huge criterion-dependent offset (log-determinants), which would
        # otherwise stop the descent after the first small step
        total_drop = max(psi_init - psi_new, 1e-300)
        rel_drop = (state.psi - psi_new) / total_drop
        state.theta = state.theta - t_min * direction
        state.psi, state.gradient, ws = evaluator.evaluate_full(state.theta)
        state.iteration = it
        state.history.append(_record(state, t_min))
        if progress:
            progress(state.history[-1])
        if rel_drop < tol_rel:
            state.converged, state.reason = True, "relative decrease below tolerance"
            break
    else:
        state.reason = "iteration cap reached"
    return state


def _record(state: OptimizerState, t_min: float) -> dict:
    return {
        "iteration": state.iteration,
        "theta_minus": state.theta.tolist(),
        "psi": state.psi,
        "grad_norm": float(np.linalg.norm(state.gradient)),
        "t_min": t_min,
    }

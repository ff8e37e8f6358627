"""Gaussian priors, the measurement noise model, and the design criteria.

The linearized posterior covariance is never assembled through the prior
inverse: with the measurement count far below the node count, the low-rank
(Kalman) form through S = noise + J Gpr J^T is both stabler and cheaper,
and the log-determinant follows from the matrix determinant lemma.  The
full posterior matrix and its Cholesky factor are materialized lazily.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import BoundaryCurve, ElectrodeLayout, gap_lengths
from .meshing import BackgroundMesh
from .sensitivity import Jacobian, JacobianAngleDerivative


class DesignError(Exception):
    pass


@dataclass
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray          # lower triangular, cov = chol @ chol.T
    jitter: float

    @property
    def n(self) -> int:
        return len(self.mean)

    def trace(self) -> float:
        return float(np.trace(self.cov))

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.chol, True), v)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.chol @ rng.standard_normal(self.n)


def _kappa_field(bg: BackgroundMesh, spec: dict):
    """Per-node deviation factors and the same-region mask for the covariance."""
    x = bg.nodes
    kind = spec["kind"]
    if kind == "homogeneous":
        kappa = np.full(bg.n_nodes, float(spec["kappa"]))
        region = np.zeros(bg.n_nodes, dtype=int)
    elif kind == "disk-inclusion":
        center = np.asarray(spec["center"], dtype=float)
        inside = np.linalg.norm(x - center, axis=1) <= float(spec["radius"])
        kappa = np.where(inside, float(spec["kappa_in"]), float(spec["kappa_out"]))
        region = inside.astype(int)
    elif kind == "half-plane-split":
        upper = x[:, 1] >= 0.0
        kappa = np.where(upper, float(spec["kappa_upper"]), float(spec["kappa_lower"]))
        region = upper.astype(int)
    else:
        raise DesignError(f"unknown prior kind {kind!r}")
    return kappa, region


def build_prior(bg: BackgroundMesh, spec: dict) -> GaussianPrior:
    """Squared-exponential covariance with region-blocked deviation factors.

    Cross-covariances between distinct regions are zero.  A correlation
    length of zero degenerates to independent nodes (diagonal covariance),
    which the two-electrode reference experiment uses.
    """
    lam = float(spec.get("correlation_length", 0.0))
    mean = np.full(bg.n_nodes, float(spec.get("mean", 1.0)))
    kappa, region = _kappa_field(bg, spec)
    if lam > 0.0:
        d2 = np.sum((bg.nodes[:, None, :] - bg.nodes[None, :, :]) ** 2, axis=2)
        cov = np.outer(kappa, kappa) * np.exp(-d2 / (2.0 * lam**2))
        cov *= region[:, None] == region[None, :]
    else:
        cov = np.diag(kappa**2)
    jitter = 1e-10 * float(np.max(np.diag(cov)))
    cov = cov + jitter * np.eye(bg.n_nodes)
    try:
        chol = sla.cholesky(cov, lower=True)
    except sla.LinAlgError as exc:
        eigmin = float(np.min(sla.eigvalsh(cov)))
        raise DesignError(f"prior covariance indefinite after jitter "
                          f"(smallest eigenvalue {eigmin:.3e})") from exc
    return GaussianPrior(mean, cov, chol, jitter)


@dataclass(frozen=True)
class NoiseModel:
    """White noise whose level is set by the initial measurement spread, then frozen."""
    std: float

    @property
    def variance(self) -> float:
        return self.std**2


def build_noise(initial_potentials: np.ndarray, relative_factor: float = 1e-3) -> NoiseModel:
    spread = float(np.max(initial_potentials) - np.min(initial_potentials))
    if spread <= 0.0:
        raise DesignError("degenerate initial measurements: zero potential spread")
    return NoiseModel(relative_factor * spread)


@dataclass
class PosteriorModel:
    """Linearized-posterior covariance in low-rank form.

    Stores the triangular factor of S = noise*I + J Gpr J^T and the
    half-update T with Gamma_post = Gpr - T^T T; trace, log-determinant,
    diagonal and matrix products all derive from these without forming
    the prior inverse.
    """
    prior: GaussianPrior
    noise: NoiseModel
    jacobian_matrix: np.ndarray           # stacked (MN, K)
    s_chol: np.ndarray = field(init=False)
    _half_update: np.ndarray = field(init=False)
    _gamma: np.ndarray = field(default=None, repr=False)
    _gamma_chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        j = np.atleast_2d(self.jacobian_matrix)
        g1 = j @ self.prior.cov
        s = self.noise.variance * np.eye(j.shape[0]) + g1 @ j.T
        try:
            self.s_chol = sla.cholesky(s, lower=True)
        except sla.LinAlgError as exc:
            cond = np.linalg.cond(s)
            raise DesignError(f"posterior factorization failed (cond(S) = {cond:.3e})") from exc
        self._half_update = sla.solve_triangular(self.s_chol, g1, lower=True)

    @property
    def n_measurements(self) -> int:
        return np.atleast_2d(self.jacobian_matrix).shape[0]

    def trace(self) -> float:
        return self.prior.trace() - float(np.sum(self._half_update**2))

    def logdet(self) -> float:
        # determinant lemma: det = det(Gpr) det(noise I) / det(S)
        return (self.prior.logdet() + self.n_measurements * np.log(self.noise.variance)
                - 2.0 * float(np.sum(np.log(np.diag(self.s_chol)))))

    def diagonal(self) -> np.ndarray:
        return np.diag(self.prior.cov) - np.sum(self._half_update**2, axis=0)

    def matrix(self) -> np.ndarray:
        if self._gamma is None:
            self._gamma = self.prior.cov - self._half_update.T @ self._half_update
        return self._gamma

    def cholesky(self) -> np.ndarray:
        if self._gamma_chol is None:
            self._gamma_chol = sla.cholesky(self.matrix(), lower=True)
        return self._gamma_chol

    def mean_shift(self, centered_data: np.ndarray) -> np.ndarray:
        """Posterior mean of the linearized model for centered data V*."""
        w = sla.cho_solve((self.s_chol, True), centered_data)
        return (self.jacobian_matrix @ self.prior.cov).T @ w

    def information_weight(self, kind: str) -> np.ndarray:
        """Matrix W with d(criterion info term) = -2 sum(W * dJ).

        For the log-determinant this is Gn^{-1} J Gamma = S^{-1} (J Gpr); the
        trace version carries one more factor of Gamma.
        """
        g1 = self.jacobian_matrix @ self.prior.cov
        w_logdet = sla.cho_solve((self.s_chol, True), g1)
        if kind == "D":
            return w_logdet
        if kind == "A":
            return w_logdet @ self.matrix()
        raise DesignError(f"unknown criterion kind {kind!r}")


def posterior_covariance(jacobian: Jacobian | np.ndarray, prior: GaussianPrior,
                         noise: NoiseModel) -> PosteriorModel:
    j = jacobian.matrix if isinstance(jacobian, Jacobian) else jacobian
    return PosteriorModel(prior, noise, j)


def gap_penalty(curve: BoundaryCurve, layout: ElectrodeLayout, alpha: float):
    gaps = gap_lengths(curve, layout)
    if np.any(gaps <= 0):
        raise DesignError("inadmissible layout: nonpositive electrode gap")
    return alpha * float(np.sum(1.0 / gaps)), gaps


def criterion_value(post: PosteriorModel, kind: str, curve: BoundaryCurve,
                    layout: ElectrodeLayout, alpha: float) -> float:
    """Design objective: gap penalty plus posterior trace or log-determinant."""
    penalty, _ = gap_penalty(curve, layout, alpha)
    info = post.trace() if kind == "A" else post.logdet() if kind == "D" else None
    if info is None:
        raise DesignError(f"unknown criterion kind {kind!r}")
    return penalty + info


def criterion_gradient(post: PosteriorModel, d_jacobian: JacobianAngleDerivative,
                       kind: str, curve: BoundaryCurve, layout: ElectrodeLayout,
                       alpha: float) -> np.ndarray:
    """Gradient of the criterion w.r.t. the lower electrode angles.

    The information term uses d(tr) = -2 sum(W_A * dJ) and
    d(logdet) = -2 sum(W_D * dJ); the gap term differentiates the two
    adjacent gaps of each electrode, whose endpoints both move with the
    electrode (the upper one through the fixed-width coupling, which cancels
    the speed ratio).
    """
    m = layout.n_electrodes
    w = post.information_weight(kind)
    grad = np.array([-2.0 * float(np.sum(w * d_jacobian.tensors[mi])) for mi in range(m)])
    _, gaps = gap_penalty(curve, layout, alpha)
    speed = curve.speed(layout.theta_minus)
    for mi in range(m):
        g_before = gaps[(mi - 1) % m]
        g_after = gaps[mi]
        grad[mi] += alpha * speed[mi] * (1.0 / g_after**2 - 1.0 / g_before**2)
    return grad

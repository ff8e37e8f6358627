"""Derivatives of the measurement map: conductivity Jacobian and angle derivatives.

All quantities reuse one matrix factorization.  The Jacobian comes from the
reciprocity identity: pairing the derivative of pattern j's potentials with
pattern i equals minus the stiffness-weighted product of the two forward
solutions, so no extra solves are needed.  Electrode-angle derivatives are
sampled at the electrode endpoints, weighted by the boundary speed there,
with the fixed-width coupling of the upper endpoint folded in by the chain
rule.  Endpoint values of the conductivity-derivative fields come from one
adjoint solve per endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import CemSystem, CurrentPatternSet, SolverError, assemble_system, solve
from .geometry import BoundaryCurve, ElectrodeLayout
from .meshing import CemMesh, ProjectionMap


@dataclass
class Jacobian:
    """Derivative of the stacked electrode potentials w.r.t. background conductivity.

    matrix has shape (M*N, n_background): row j*M + m is the derivative of
    electrode m's potential under pattern j.
    """
    matrix: np.ndarray
    n_electrodes: int
    n_patterns: int


@dataclass
class JacobianAngleDerivative:
    """Per movable angle, the derivative of the Jacobian matrix (same shape)."""
    tensors: np.ndarray   # (M, M*N, n_background)


def _reconstruction_matrix(patterns: CurrentPatternSet) -> np.ndarray:
    """Map pairings with the current basis back to grounded electrode vectors.

    For a grounded w (summing to zero), the pairings q_i = I^(i) . w together
    with the ground constraint determine w; this returns the (M, N) matrix
    solving that square system.
    """
    if not patterns.is_full_basis:
        raise SolverError("angle derivatives need a full basis of current patterns")
    m = patterns.n_electrodes
    a = np.vstack([patterns.matrix.T, np.ones((1, m))])
    rhs = np.vstack([np.eye(m - 1), np.zeros((1, m - 1))])
    return np.linalg.solve(a, rhs)


class SensitivityWorkspace:
    """Shared state for measurement, Jacobian and angle-derivative evaluation.

    Builds the CEM system once per (mesh, sigma, layout) and exposes the
    stacked measurements, the Jacobian and both shape derivatives, reusing
    the factorization and the forward solutions throughout.
    """

    def __init__(self, curve: BoundaryCurve, mesh: CemMesh, sigma, layout: ElectrodeLayout,
                 patterns: CurrentPatternSet, projection: ProjectionMap = None,
                 system: CemSystem = None):
        self.curve = curve
        self.mesh = mesh
        self.layout = layout
        self.patterns = patterns
        self.projection = projection
        self.system = system if system is not None else assemble_system(mesh, sigma, layout)
        self.solution = solve(self.system, patterns)
        self._rec = None
        self._jac = None
        self._endpoint_values = None

    # -- basic quantities ----------------------------------------------------

    def measurements(self) -> np.ndarray:
        return self.solution.stacked()

    @property
    def _reconstruct(self) -> np.ndarray:
        if self._rec is None:
            self._rec = _reconstruction_matrix(self.patterns)
        return self._rec

    def _element_pair_scatter(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """Nodal field k -> integral of hat_k * grad(left_p) . grad(right_q).

        left, right are interior nodal fields with shape (n, p) and (n, q);
        the result has shape (n_nodes, p, q) and is the derivative of the
        stiffness pairing w.r.t. each nodal conductivity value.
        """
        sys_ = self.system
        tri = self.mesh.triangles
        gl = np.einsum("tid,tip->tdp", sys_.tri_grads, left[tri])
        gr = np.einsum("tid,tiq->tdq", sys_.tri_grads, right[tri])
        pair = np.einsum("tdp,tdq->tpq", gl, gr) * (sys_.tri_areas / 3.0)[:, None, None]
        out = np.zeros((self.mesh.n_nodes,) + pair.shape[1:])
        for c in range(3):
            np.add.at(out, tri[:, c], pair)
        return out

    def _to_background(self, nodal_tensor: np.ndarray) -> np.ndarray:
        """Contract a (n_nodes, ...) tensor with the projection columns."""
        if self.projection is None:
            return nodal_tensor
        flat = nodal_tensor.reshape(self.mesh.n_nodes, -1)
        out = self.projection.matrix.T @ flat
        return out.reshape((out.shape[0],) + nodal_tensor.shape[1:])

    # -- conductivity Jacobian -------------------------------------------------

    def jacobian(self) -> Jacobian:
        if self._jac is None:
            u = self.solution.u
            pairings = self._element_pair_scatter(u, u)       # (n, N, N)
            q = self._to_background(pairings)                 # (K, N, N)
            # pairing with pattern i of dU^(j)/dsigma_k is -q[k, i, j]
            jac = -np.einsum("mi,kij->jmk", self._reconstruct, q)
            n = self.patterns.n_patterns
            m = self.patterns.n_electrodes
            self._jac = Jacobian(jac.reshape(m * n, q.shape[0]), m, n)
        return self._jac

    # -- endpoint bookkeeping ---------------------------------------------------

    def _endpoints(self):
        """Per electrode: endpoint node indices, jumps U_m - u there, and weights."""
        if self._endpoint_values is None:
            lay = self.layout
            nodes = self.mesh.electrode_endpoint_nodes        # (M, 2)
            u, big_u = self.solution.u, self.solution.U
            jumps = big_u[:, None, :] - u[nodes]              # (M, 2, N): (electrode, side, pattern)
            weight = self.curve.speed(lay.theta_minus) / lay.contact_impedance
            self._endpoint_values = (nodes, jumps, weight)
        return self._endpoint_values

    # -- measurement shape derivative ------------------------------------------

    def measurement_shape_derivative(self) -> np.ndarray:
        """d(stacked potentials)/d(theta_minus_m), shape (M*N, M).

        Sampled at the two endpoints of electrode m; the upper endpoint enters
        through the fixed-width chain rule, which cancels the speed ratio and
        leaves a common |gamma'(theta_minus)| / z_m weight.
        """
        nodes, jumps, weight = self._endpoints()
        rec = self._reconstruct
        m, n = self.patterns.n_electrodes, self.patterns.n_patterns
        out = np.zeros((m * n, m))
        for mi in range(m):
            v0, v1 = jumps[mi, 0], jumps[mi, 1]               # (N,)
            block = weight[mi] * (np.outer(rec @ v0, v0) - np.outer(rec @ v1, v1))
            out[:, mi] = block.T.ravel()                      # (j, m') -> row j*M + m'
        return out

    # -- Jacobian shape derivative ------------------------------------------------

    def jacobian_shape_derivative(self) -> JacobianAngleDerivative:
        """d(Jacobian)/d(theta_minus_m) for every m, shape (M, M*N, K)."""
        nodes, jumps, weight = self._endpoints()
        rec = self._reconstruct
        m, n = self.patterns.n_electrodes, self.patterns.n_patterns
        n_dof = self.system.matrix.shape[0]
        n_nodes = self.mesh.n_nodes

        # adjoint solves giving interior endpoint values of the derivative fields
        flat_nodes = nodes.ravel()
        rhs = np.zeros((n_dof, 2 * m))
        rhs[flat_nodes, np.arange(2 * m)] = 1.0
        lam = self.system.solve_dofs(rhs)[:n_nodes]
        ep_pair = self._to_background(self._element_pair_scatter(self.solution.u, lam))
        # derivative of pattern j's interior potential at endpoint node p:
        deriv_interior = -np.transpose(ep_pair, (1, 0, 2))    # (N, K, 2M)

        jac = self.jacobian()
        n_bg = jac.matrix.shape[1]
        jac_t = jac.matrix.reshape(n, m, n_bg)                # (j, electrode, K)

        out = np.empty((m, m * n, n_bg))
        for mi in range(m):
            a0 = jac_t[:, mi, :] - deriv_interior[:, :, 2 * mi]      # (N, K), lower endpoint
            a1 = jac_t[:, mi, :] - deriv_interior[:, :, 2 * mi + 1]  # upper endpoint
            v0, v1 = jumps[mi, 0], jumps[mi, 1]
            block = (np.einsum("m,jk->jmk", rec @ v0, a0) + np.einsum("mk,j->jmk", rec @ a0, v0)
                     - np.einsum("m,jk->jmk", rec @ v1, a1) - np.einsum("mk,j->jmk", rec @ a1, v1))
            out[mi] = weight[mi] * block.reshape(m * n, n_bg)
        return JacobianAngleDerivative(out)


def conductivity_jacobian(curve, mesh, sigma, layout, patterns,
                          projection: ProjectionMap = None) -> Jacobian:
    """Jacobian of the stacked measurements w.r.t. (background) conductivity."""
    ws = SensitivityWorkspace(curve, mesh, sigma, layout, patterns, projection)
    return ws.jacobian()


def shape_derivative_measurements(curve, mesh, sigma, layout, patterns) -> np.ndarray:
    """Derivative of the stacked measurements w.r.t. each electrode angle."""
    ws = SensitivityWorkspace(curve, mesh, sigma, layout, patterns)
    return ws.measurement_shape_derivative()


def jacobian_angle_derivative(curve, mesh, sigma, layout, patterns,
                              projection: ProjectionMap = None) -> JacobianAngleDerivative:
    """Derivative of the conductivity Jacobian w.r.t. each electrode angle."""
    ws = SensitivityWorkspace(curve, mesh, sigma, layout, patterns, projection)
    return ws.jacobian_shape_derivative()

"""Finite-element solver for the complete electrode model.

The discrete unknowns are the P1 nodal potentials on the electrode-fitted
mesh together with the M electrode potentials.  Electrode potentials are
expanded in a sum-free basis (feeding electrode minus each remaining one),
which removes the constant kernel and makes the reduced system symmetric
positive definite; the recovered electrode potentials automatically satisfy
the sum-to-zero ground convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import ElectrodeLayout
from .meshing import CemMesh, GAP_TAG


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class Conductivity:
    """Piecewise-linear nodal conductivity on the electrode-fitted mesh."""
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.min(v) <= 0.0:
            raise SolverError(f"conductivity must be positive (min {np.min(v):.3g})")
        object.__setattr__(self, "values", v)


def as_sigma(sigma, mesh: CemMesh) -> np.ndarray:
    v = sigma.values if isinstance(sigma, Conductivity) else np.asarray(sigma, dtype=float)
    if np.isscalar(sigma) or v.ndim == 0:
        v = np.full(mesh.n_nodes, float(v))
    if len(v) != mesh.n_nodes:
        raise SolverError("conductivity vector does not match the mesh")
    if np.min(v) <= 0.0:
        raise SolverError(f"conductivity must be positive (min {np.min(v):.3g})")
    return v


@dataclass
class CurrentPatternSet:
    """N linearly independent current patterns, one per column, each sum-free."""
    matrix: np.ndarray   # (M, N)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        col_sums = np.abs(self.matrix.sum(axis=0))
        if np.any(col_sums > 1e-10 * max(1.0, np.abs(self.matrix).max())):
            raise SolverError("current patterns must sum to zero over the electrodes")
        if np.linalg.matrix_rank(self.matrix) < self.n_patterns:
            raise SolverError("current patterns must be linearly independent")

    @property
    def n_electrodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_patterns(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_full_basis(self) -> bool:
        return self.n_patterns == self.n_electrodes - 1

    @staticmethod
    def feeding_basis(n_electrodes: int, feeding_index: int = 0) -> "CurrentPatternSet":
        """Basis obtained by feeding one electrode and sinking at each other in turn."""
        others = [m for m in range(n_electrodes) if m != feeding_index]
        mat = np.zeros((n_electrodes, n_electrodes - 1))
        mat[feeding_index, :] = 1.0
        for j, m in enumerate(others):
            mat[m, j] = -1.0
        return CurrentPatternSet(mat)


@dataclass
class CemSystem:
    """Assembled CEM bilinear form, its grounded reduction, and element data."""
    mesh: CemMesh
    layout: ElectrodeLayout
    sigma: np.ndarray
    matrix: sp.csc_matrix          # reduced SPD matrix, size n + M - 1
    basis: np.ndarray              # (M, M-1) electrode-potential basis, columns sum-free
    tri_grads: np.ndarray          # (t, 3, 2) P1 basis gradients
    tri_areas: np.ndarray          # (t,)
    electrode_edge_data: list      # per electrode: (edge node pairs, lengths)
    _factor: object = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_electrodes(self) -> int:
        return self.layout.n_electrodes

    def load(self, patterns: CurrentPatternSet) -> np.ndarray:
        """Right-hand sides of the reduced system, one column per pattern."""
        rhs = np.zeros((self.matrix.shape[0], patterns.n_patterns))
        rhs[self.n_nodes:, :] = self.basis.T @ patterns.matrix
        return rhs

    def factor(self):
        if self._factor is None:
            self._factor = splu(self.matrix)
        return self._factor

    def solve_dofs(self, rhs: np.ndarray) -> np.ndarray:
        x = self.factor().solve(rhs)
        res = np.linalg.norm(self.matrix @ x - rhs)
        scale = np.linalg.norm(rhs)
        if scale > 0 and res > 1e-10 * scale:
            raise SolverError(f"linear solve residual {res / scale:.2e} above tolerance")
        return x

    def full_matrix(self) -> sp.csc_matrix:
        """Un-grounded symmetric PSD form on (nodal potentials) + (M electrode dofs)."""
        n, m = self.n_nodes, self.n_electrodes
        expand = sp.bmat([[sp.eye(n), None], [None, sp.csr_matrix(self.basis)]]).tocsr()
        # rebuild without the basis reduction: K_full = [[A+B, -C], [-C^T, D]]
        a_b = self.matrix[:n, :n]
        c_full = np.zeros((n, m))
        d_full = np.zeros(m)
        for mi, (pairs, lengths) in enumerate(self.electrode_edge_data):
            zinv = 1.0 / self.layout.contact_impedance[mi]
            np.add.at(c_full[:, mi], pairs[:, 0], zinv * lengths / 2)
            np.add.at(c_full[:, mi], pairs[:, 1], zinv * lengths / 2)
            d_full[mi] = zinv * lengths.sum()
        return sp.bmat([[a_b, sp.csr_matrix(-c_full)],
                        [sp.csr_matrix(-c_full.T), sp.diags(d_full)]]).tocsc()


@dataclass
class CemSolution:
    """Grounded potentials per current pattern (interior nodal u and electrode U)."""
    u: np.ndarray            # (n, N)
    U: np.ndarray            # (M, N), each column sums to zero
    ground: str = "sum-zero"
    dofs: np.ndarray = None  # raw reduced solution vectors, reused by sensitivities

    def stacked(self) -> np.ndarray:
        """Electrode potentials stacked pattern-major into a single vector."""
        return self.U.T.ravel()


def _element_geometry(mesh: CemMesh):
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    grads = np.empty((len(p), 3, 2))
    # grad of hat i is the inward rotation of the opposite edge over 2*area
    for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
        edge = p[:, k] - p[:, j]
        grads[:, i, 0] = -edge[:, 1]
        grads[:, i, 1] = edge[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return grads, area


def assemble_system(mesh: CemMesh, sigma, layout: ElectrodeLayout) -> CemSystem:
    """Assemble the grounded CEM finite-element system for nodal sigma."""
    sig = as_sigma(sigma, mesh)
    n, m = mesh.n_nodes, layout.n_electrodes
    grads, area = _element_geometry(mesh)
    tri = mesh.triangles

    sig_bar = sig[tri].mean(axis=1)
    local = np.einsum("tid,tjd->tij", grads, grads) * (sig_bar * area)[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    stiff = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    mass = sp.lil_matrix((n, n))
    c_mat = np.zeros((n, m))
    d_diag = np.zeros(m)
    electrode_edge_data = []
    edges = mesh.boundary_edges
    pts = mesh.nodes
    for mi in range(m):
        sel = edges[edges[:, 2] == mi]
        pairs = sel[:, :2]
        lengths = np.linalg.norm(pts[pairs[:, 1]] - pts[pairs[:, 0]], axis=1)
        electrode_edge_data.append((pairs, lengths))
        zinv = 1.0 / layout.contact_impedance[mi]
        for (i, j), ell in zip(pairs, lengths):
            mass[i, i] += zinv * ell / 3.0
            mass[j, j] += zinv * ell / 3.0
            mass[i, j] += zinv * ell / 6.0
            mass[j, i] += zinv * ell / 6.0
            c_mat[i, mi] += zinv * ell / 2.0
            c_mat[j, mi] += zinv * ell / 2.0
        d_diag[mi] = zinv * lengths.sum()

    basis = np.zeros((m, m - 1))
    others = [k for k in range(m) if k != layout.feeding_index]
    basis[layout.feeding_index, :] = 1.0
    for j, k in enumerate(others):
        basis[k, j] = -1.0

    k_uu = stiff + mass.tocsr()
    k_ub = sp.csr_matrix(-c_mat @ basis)
    k_bb = sp.csr_matrix(basis.T @ np.diag(d_diag) @ basis)
    matrix = sp.bmat([[k_uu, k_ub], [k_ub.T, k_bb]]).tocsc()
    return CemSystem(mesh, layout, sig, matrix, basis, grads, area, electrode_edge_data)


def solve(system: CemSystem, patterns: CurrentPatternSet) -> CemSolution:
    """Grounded CEM solution for every current pattern (one factorization)."""
    if patterns.n_electrodes != system.n_electrodes:
        raise SolverError("pattern / layout electrode count mismatch")
    rhs = system.load(patterns)
    x = system.solve_dofs(rhs)
    n = system.n_nodes
    u = x[:n]
    electrode = system.basis @ x[n:]
    return CemSolution(u=u, U=electrode, dofs=x)


def measurement_map(mesh: CemMesh, sigma, layout: ElectrodeLayout,
                    patterns: CurrentPatternSet) -> np.ndarray:
    """Stacked grounded electrode potentials for all patterns (length M*N)."""
    system = assemble_system(mesh, sigma, layout)
    return solve(system, patterns).stacked()


def resistance_matrix(mesh: CemMesh, sigma, layout: ElectrodeLayout) -> np.ndarray:
    """Grounded M x M current-to-voltage matrix (symmetric by reciprocity)."""
    m = layout.n_electrodes
    proj = np.eye(m) - np.full((m, m), 1.0 / m)
    system = assemble_system(mesh, sigma, layout)
    rhs = np.zeros((system.matrix.shape[0], m))
    rhs[system.n_nodes:, :] = system.basis.T @ proj
    x = system.solve_dofs(rhs)
    return system.basis @ x[system.n_nodes:]


def check_currents(solution: CemSolution, layout: ElectrodeLayout, mesh: CemMesh,
                   system: CemSystem = None) -> np.ndarray:
    """Electrode currents recovered from the solved potentials, shape (M, N).

    Uses the contact-impedance identity: the current through electrode m is
    the integral of (U_m - u)/z_m over the electrode.
    """
    if system is None:
        edge_data = []
        for mi in range(layout.n_electrodes):
            sel = mesh.boundary_edges[mesh.boundary_edges[:, 2] == mi]
            pairs = sel[:, :2]
            lengths = np.linalg.norm(mesh.nodes[pairs[:, 1]] - mesh.nodes[pairs[:, 0]], axis=1)
            edge_data.append((pairs, lengths))
    else:
        edge_data = system.electrode_edge_data
    n_pat = solution.U.shape[1]
    out = np.zeros((layout.n_electrodes, n_pat))
    for mi, (pairs, lengths) in enumerate(edge_data):
        u_avg = 0.5 * (solution.u[pairs[:, 0]] + solution.u[pairs[:, 1]])
        integral = solution.U[mi] * lengths.sum() - lengths @ u_avg
        out[mi] = integral / layout.contact_impedance[mi]
    return out


def gap_flux(solution: CemSolution, mesh: CemMesh, sigma) -> np.ndarray:
    """Normal flux integrated over the gap boundary, per pattern.

    The continuum solution has zero flux there; the P1 approximation only
    vanishes weakly, so this is a mesh-convergence diagnostic.
    """
    sig = as_sigma(sigma, mesh)
    grads, area = _element_geometry(mesh)
    edge_owner = {}
    for t, tri in enumerate(mesh.triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edge_owner[frozenset((tri[a], tri[b]))] = t
    n_pat = solution.u.shape[1]
    total = np.zeros(n_pat)
    for i, j, tag in mesh.boundary_edges:
        if tag != GAP_TAG:
            continue
        t = edge_owner[frozenset((i, j))]
        grad_u = np.einsum("id,iN->dN", grads[t], solution.u[mesh.triangles[t]])
        d = mesh.nodes[j] - mesh.nodes[i]
        normal = np.array([d[1], -d[0]])      # boundary is ordered CCW
        sig_e = sig[mesh.triangles[t]].mean()
        total += sig_e * (normal @ grad_u)
    return total

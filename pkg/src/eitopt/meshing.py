"""Triangulations of the electrode-fitted domain and the fixed background grid.

build_mesh produces a conforming triangulation of the polygonal domain whose
boundary nodes include every electrode endpoint exactly.  The point layout is
fully deterministic and varies smoothly with the electrode angles except for
discrete node insertions/removals far from the endpoints, which keeps
finite-difference checks of shape derivatives usable.

The background mesh covers a fixed disk containing the domain for every
admissible layout; conductivities live on its nodes and are carried to the
electrode-fitted mesh by a barycentric interpolation matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, cKDTree

from .geometry import BoundaryCurve, ElectrodeLayout

GAP_TAG = -1


class MeshError(Exception):
    """Mesh generation failed (degenerate geometry for the requested size)."""


@dataclass
class CemMesh:
    nodes: np.ndarray                  # (n, 2)
    triangles: np.ndarray              # (t, 3) CCW
    boundary_edges: np.ndarray         # (b, 3): node i, node j, tag (electrode or GAP_TAG)
    electrode_endpoint_nodes: np.ndarray  # (M, 2): node index at theta_minus, theta_plus
    target_h: float
    refinement_level: int = 0
    boundary_phi: np.ndarray = None    # unwrapped boundary node angles (first n_b nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass
class BackgroundMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    radius: float
    target_h: float
    _delaunay: Delaunay = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


@dataclass
class ProjectionMap:
    """Sparse barycentric interpolation from background nodes to mesh nodes."""
    matrix: sp.csr_matrix              # (n_mesh, n_background), rows sum to 1

    def apply(self, background_values: np.ndarray) -> np.ndarray:
        return self.matrix @ background_values


def _hex_lattice(spacing: float, radius: float) -> np.ndarray:
    """Hexagonal lattice anchored at the origin covering a disk of given radius."""
    dy = spacing * np.sqrt(3.0) / 2.0
    n_row = int(np.ceil(radius / dy)) + 1
    n_col = int(np.ceil(radius / spacing)) + 1
    rows = []
    for j in range(-n_row, n_row + 1):
        xs = spacing * np.arange(-n_col, n_col + 1) + (spacing / 2.0 if j % 2 else 0.0)
        ys = np.full_like(xs, j * dy)
        rows.append(np.column_stack([xs, ys]))
    pts = np.vstack(rows)
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius + spacing]


def _curve_clearance(curve: BoundaryCurve, pts: np.ndarray) -> np.ndarray:
    """Approximate inward distance from pts to the boundary (negative outside).

    Uses the radial gap projected onto the boundary normal, which is accurate
    for points within a few mesh sizes of the boundary, the only place the
    value is used.
    """
    rho = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    r = curve.radius(phi)
    return (r - rho) * r / curve.speed(phi)


def _endpoint_rings(curve, point, tangent_angle, h, fine_h):
    """Graded rings of nodes around an electrode endpoint, in a frame tied to it."""
    pts = []
    rho = 0.6 * fine_h
    final = 0
    while final < 2:
        s = min(max(fine_h, 0.75 * rho), h)
        if s >= 0.95 * h:
            final += 1
        n = max(3, int(np.ceil(2 * np.pi * rho / s)))
        ang = tangent_angle + 2 * np.pi * np.arange(n) / n
        pts.append(point + rho * np.column_stack([np.cos(ang), np.sin(ang)]))
        rho += s
    return np.vstack(pts), rho


def _march_positions(length, size_of_s, h):
    """Arc-length node positions: rigid graded zones at both ends, marched middle.

    Marching from each end keeps nodes near an electrode at fixed arc offsets
    from it, so they translate with the electrode.  Middle nodes are anchored
    to the left frontier; a length change pops at most the last middle node,
    never repositions the rest.
    """
    left = [0.0]
    while True:
        step = size_of_s(left[-1])
        if left[-1] + step > 0.5 * length - 0.25 * step or step >= 0.95 * h:
            break
        left.append(left[-1] + step)
    right = [length]
    while True:
        step = size_of_s(right[-1])
        if right[-1] - step < 0.5 * length + 0.25 * step or step >= 0.95 * h:
            break
        right.append(right[-1] - step)
    mid_a, mid_b = left[-1], right[-1]
    h_mid = 0.68 * min(size_of_s(0.5 * (mid_a + mid_b)), h)
    middle = []
    s = mid_a + h_mid
    while s <= mid_b - 0.45 * h_mid:
        middle.append(s)
        s += h_mid
    return np.concatenate([left, middle, right[::-1]])


def build_mesh(curve: BoundaryCurve, layout: ElectrodeLayout, target_h: float,
               refinement_level: int = 0) -> CemMesh:
    """Conforming triangulation with endpoint vertices and local refinement.

    Boundary edges are at most target_h long, and at most target_h/4 within
    one electrode-width (arc length) of each electrode endpoint.
    """
    h = target_h / 2**refinement_level
    fine_h = h / 16.0
    quarter_h = h / 4.0
    m = layout.n_electrodes
    endpoint_angles = np.concatenate([layout.theta_minus, layout.theta_plus])
    endpoint_pts = curve.point(endpoint_angles)
    mean_w = float(np.mean(layout.widths))

    def edge_size(d_arc, w_end):
        """Boundary node spacing at arc distance d_arc from an electrode endpoint.

        Geometric grading into the endpoint resolves the edge singularity;
        spacing is capped at h/4 within one electrode-width and ramps to h
        beyond.  Arc-local by construction: nodes move rigidly with their arc
        ends, so perturbing one electrode never reshuffles other arcs.
        """
        graded = np.clip(0.35 * d_arc, fine_h, h)
        cap = quarter_h + (h - quarter_h) * np.clip((d_arc - w_end) / (1.2 * mean_w), 0.0, 1.0)
        return min(graded, cap)

    # boundary nodes arc by arc: electrode m, then the gap after it.  Electrode
    # arcs are split at fixed arc offsets from their lower endpoint (rigid under
    # rotation); gaps are marched from both ends with a uniform middle splice.
    arcs = []
    for i in range(m):
        arcs.append((layout.theta_minus[i], layout.theta_plus[i], i,
                     layout.widths[i], layout.widths[i]))
        nxt = layout.theta_minus[(i + 1) % m] + (2 * np.pi if i == m - 1 else 0.0)
        arcs.append((layout.theta_plus[i], nxt, GAP_TAG,
                     layout.widths[i], layout.widths[(i + 1) % m]))
    bnd_phi, edge_tags, endpoint_nodes = [], [], np.zeros((m, 2), dtype=int)
    for a, b, tag, w_left, w_right in arcs:
        n_dense = max(48, int(96 * (b - a)))
        phi_grid = np.linspace(a, b, n_dense)
        sp_grid = curve.speed(phi_grid)
        s_grid = np.concatenate([[0.0], np.cumsum(0.5 * (sp_grid[1:] + sp_grid[:-1])
                                                  * np.diff(phi_grid))])
        length = s_grid[-1]
        size_of_s = lambda s: min(edge_size(s, w_left), edge_size(length - s, w_right))
        s_nodes = _march_positions(length, size_of_s, h)
        phis = np.interp(s_nodes, s_grid, phi_grid)
        phis[0], phis[-1] = a, b
        if tag != GAP_TAG:
            endpoint_nodes[tag] = (len(bnd_phi), len(bnd_phi) + len(phis) - 1)
        bnd_phi.extend(phis[:-1])
        edge_tags.extend([tag] * (len(phis) - 1))
    endpoint_nodes[0, 0] = 0
    n_b = len(bnd_phi)
    endpoint_nodes %= n_b
    bnd_phi = np.asarray(bnd_phi)
    bnd_pts = curve.point(bnd_phi)

    # interior: graded rings moving with each endpoint + a fixed base lattice
    interior = []
    ring_extent = np.zeros(2 * m)
    tangent_ang = np.arctan2(curve.tangent(endpoint_angles)[:, 1],
                             curve.tangent(endpoint_angles)[:, 0])
    for i in range(2 * m):
        ring, extent = _endpoint_rings(curve, endpoint_pts[i], tangent_ang[i], h, fine_h)
        ring_extent[i] = extent
        # threshold factors deliberately differ from the ring-radius factors so no
        # point sits exactly on a keep/drop boundary (ties flip with roundoff)
        keep = _curve_clearance(curve, ring) >= 0.5 * np.maximum(
            fine_h, 0.75 * np.linalg.norm(ring - endpoint_pts[i], axis=1))
        closer_other = np.zeros(len(ring), dtype=bool)
        for j in range(2 * m):
            if j != i:
                closer_other |= (np.linalg.norm(ring - endpoint_pts[j], axis=1)
                                 < 0.9 * np.linalg.norm(ring - endpoint_pts[i], axis=1))
        interior.append(ring[keep & ~closer_other])

    # fixed irrational offset so symmetric layouts never tie with lattice thresholds
    base = _hex_lattice(h, curve.max_radius()) + h * np.array([0.0562137, 0.0312711])
    keep = _curve_clearance(curve, base) >= 0.65 * h
    for i in range(2 * m):
        rim = ring_extent[i] + 0.70 * h
        rho = np.linalg.norm(base - endpoint_pts[i], axis=1)
        keep &= rho >= rim - 0.5 * h
        # points in a band around the rim are displaced outward instead of
        # dropped, so small electrode motions never change the point count
        band = keep & (rho < rim + 0.5 * h)
        if np.any(band):
            rho_new = rim + 0.5 * (rho[band] - (rim - 0.5 * h))
            base[band] = endpoint_pts[i] + (base[band] - endpoint_pts[i]) \
                * (rho_new / rho[band])[:, None]
    interior.append(base[keep])
    interior_pts = np.vstack(interior)
    if len(interior_pts):
        # drop interior points crowding a boundary node (rare ring/boundary clashes)
        d, _ = cKDTree(bnd_pts).query(interior_pts)
        interior_pts = interior_pts[d >= 0.35 * fine_h]

    pts = np.vstack([bnd_pts, interior_pts])
    tris = _triangulate_conforming(curve, pts, n_b)
    mesh = CemMesh(pts, tris, _tag_edges(tris, n_b, edge_tags), endpoint_nodes,
                   target_h, refinement_level, boundary_phi=bnd_phi)
    _check_quality(mesh)
    return mesh


def morph_mesh(mesh: CemMesh, curve: BoundaryCurve, layout_from: ElectrodeLayout,
               layout_to: ElectrodeLayout) -> CemMesh:
    """Mesh for a nearby layout with identical topology, nodes smoothly displaced.

    Boundary nodes keep their fractional position within their arc; interior
    nodes rotate by the boundary's angular displacement field attenuated
    toward the center.  Because the node count and connectivity are fixed,
    every assembled quantity is differentiable in the target angles, which
    makes this the mesh family of choice for finite-difference probes of
    shape derivatives (independent re-meshing is only piecewise smooth).
    """
    m = layout_from.n_electrodes

    def wrap(a):
        return a - 2 * np.pi * np.round(a / (2 * np.pi))

    d_minus = wrap(layout_to.theta_minus - layout_from.theta_minus)
    d_plus = wrap(layout_to.theta_plus - layout_from.theta_plus)
    # displacement field: piecewise linear bump around each electrode, decaying
    # to zero within 45% of each adjacent gap so remote mesh regions stay put
    knots, values = [], []
    for i in range(m):
        a, b = layout_from.theta_minus[i], layout_from.theta_plus[i]
        gap_before = layout_from.theta_minus[i] - layout_from.theta_plus[i - 1] \
            + (2 * np.pi if i == 0 else 0.0)
        gap_after = layout_from.theta_minus[(i + 1) % m] - layout_from.theta_plus[i] \
            + (2 * np.pi if i == m - 1 else 0.0)
        knots += [a - 0.45 * gap_before, a, b, b + 0.45 * gap_after]
        values += [0.0, d_minus[i], d_plus[i], 0.0]
    knots = np.asarray(knots)
    values = np.asarray(values)
    period_start = knots[0]

    def angle_shift(phi):
        lifted = period_start + np.mod(phi - period_start, 2 * np.pi)
        return np.interp(lifted, knots, values)

    n_b = len(mesh.boundary_edges)
    new_phi = mesh.boundary_phi + angle_shift(mesh.boundary_phi)
    new_nodes = mesh.nodes.copy()
    new_nodes[:n_b] = curve.point(new_phi)
    interior = mesh.nodes[n_b:]
    phi_int = np.arctan2(interior[:, 1], interior[:, 0])
    rho = np.hypot(interior[:, 0], interior[:, 1])
    weight = np.clip(rho / curve.radius(phi_int), 0.0, 1.0) ** 2
    ang = weight * angle_shift(phi_int)
    new_ang = phi_int + ang
    scale = curve.radius(new_ang) / curve.radius(phi_int)
    new_rho = rho * scale
    new_nodes[n_b:, 0] = new_rho * np.cos(new_ang)
    new_nodes[n_b:, 1] = new_rho * np.sin(new_ang)

    out = CemMesh(new_nodes, mesh.triangles, mesh.boundary_edges,
                  mesh.electrode_endpoint_nodes, mesh.target_h,
                  mesh.refinement_level, boundary_phi=new_phi)
    if np.any(out.triangle_areas() <= 0):
        raise MeshError("morph collapsed a triangle; layouts too far apart")
    return out


def _triangulate_conforming(curve, pts, n_b, max_rounds=4):
    """Delaunay triangulation filtered to the domain, repaired to conform."""
    active = np.ones(len(pts), dtype=bool)
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        dela = Delaunay(pts[idx])
        tris = idx[dela.simplices]
        cen = pts[tris].mean(axis=1)
        rho = np.hypot(cen[:, 0], cen[:, 1])
        tris = tris[rho <= curve.radius(np.arctan2(cen[:, 1], cen[:, 0]))]
        p = pts[tris]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        flip = area < 0
        tris[flip] = tris[flip][:, ::-1]
        missing = _missing_boundary_edges(tris, n_b)
        if not missing:
            return tris
        # knock out interior points blocking the missing segments and retry
        for i in missing:
            a, b = pts[i], pts[(i + 1) % n_b]
            mid, rad = 0.5 * (a + b), 0.55 * np.linalg.norm(b - a)
            blockers = np.linalg.norm(pts - mid, axis=1) < rad
            blockers[:n_b] = False
            active &= ~blockers
    raise MeshError("could not recover a boundary-conforming triangulation")


def _missing_boundary_edges(tris, n_b):
    edges = set()
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for i, j in zip(tris[:, a], tris[:, b]):
            if i < n_b and j < n_b:
                edges.add((min(i, j), max(i, j)))
    return [i for i in range(n_b) if (min(i, (i + 1) % n_b), max(i, (i + 1) % n_b)) not in edges]


def _tag_edges(tris, n_b, edge_tags):
    return np.array([[i, (i + 1) % n_b, edge_tags[i]] for i in range(n_b)], dtype=int)


def _check_quality(mesh: CemMesh, min_quality: float = 0.015):
    areas = mesh.triangle_areas()
    if np.any(areas <= 0):
        raise MeshError("degenerate (zero-area) triangle produced")
    p = mesh.nodes[mesh.triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    # ratio of inradius to circumradius, normalized to 1 for equilateral
    q = (b + c - a) * (c + a - b) * (a + b - c) / (a * b * c)
    if np.min(q) < min_quality:
        raise MeshError(f"sliver triangle (quality {np.min(q):.2e}); "
                        "geometry too degenerate for this target_h")
    used = np.unique(mesh.triangles)
    if len(used) != mesh.n_nodes:
        raise MeshError("orphan nodes in triangulation")


def build_background(curve: BoundaryCurve, target_h: float, scale: float = 1.05) -> BackgroundMesh:
    """Uniform triangulation of the bounding disk of the curve, fixed per experiment."""
    radius = scale * curve.max_radius()
    n_ring = max(16, int(np.ceil(2 * np.pi * radius / target_h)))
    ang = 2 * np.pi * np.arange(n_ring) / n_ring
    ring = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    lattice = _hex_lattice(target_h, radius)
    lattice = lattice[np.hypot(lattice[:, 0], lattice[:, 1]) <= radius - 0.6 * target_h]
    pts = np.vstack([ring, lattice])
    dela = Delaunay(pts)
    tris = dela.simplices.copy()
    p = pts[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris[area < 0] = tris[area < 0][:, ::-1]
    return BackgroundMesh(pts, tris, radius, target_h, dela)


def build_projection(bg: BackgroundMesh, mesh: CemMesh) -> ProjectionMap:
    """Barycentric interpolation weights of every mesh node in the background grid."""
    simplex = bg._delaunay.find_simplex(mesh.nodes)
    if np.any(simplex < 0):
        bad = int(np.flatnonzero(simplex < 0)[0])
        raise MeshError(f"mesh node {bad} at {mesh.nodes[bad]} lies outside the background domain")
    trans = bg._delaunay.transform[simplex]
    bary = np.einsum("nij,nj->ni", trans[:, :2], mesh.nodes - trans[:, 2])
    w = np.concatenate([bary, 1.0 - bary.sum(axis=1, keepdims=True)], axis=1)
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    cols = bg._delaunay.simplices[simplex]
    rows = np.repeat(np.arange(mesh.n_nodes), 3)
    mat = sp.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(mesh.n_nodes, bg.n_nodes))
    return ProjectionMap(mat)


def mesh_to_json(mesh: CemMesh) -> dict:
    """Plot-ready dict: nodes, triangles, tagged boundary edges, endpoints."""
    return {
        "schema": "eitopt-mesh-v1",
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary_edges": mesh.boundary_edges.tolist(),
        "electrode_endpoint_nodes": mesh.electrode_endpoint_nodes.tolist(),
        "target_h": mesh.target_h,
        "refinement_level": mesh.refinement_level,
    }


def background_to_json(bg: BackgroundMesh) -> dict:
    return {
        "schema": "eitopt-background-mesh-v1",
        "nodes": bg.nodes.tolist(),
        "triangles": bg.triangles.tolist(),
        "radius": bg.radius,
        "target_h": bg.target_h,
    }

import numpy as np
import pytest

from eitopt import (BoundaryCurve, CurrentPatternSet, SolverError, assemble_system,
                    build_mesh, check_currents, equidistant_layout, gap_flux,
                    make_layout, measurement_map, resistance_matrix, solve)

WIDTH = np.pi / 16


def test_pattern_basis_properties():
    pats = CurrentPatternSet.feeding_basis(5, feeding_index=2)
    assert pats.matrix.shape == (5, 4)
    assert np.allclose(pats.matrix.sum(axis=0), 0.0)
    assert pats.is_full_basis
    with pytest.raises(SolverError):
        CurrentPatternSet(np.ones((4, 2)))        # columns do not sum to zero
    with pytest.raises(SolverError):
        CurrentPatternSet(np.column_stack([[1, -1, 0], [2, -2, 0]]))  # dependent


def test_system_matrix_symmetric(disk_solution4):
    system, _, _ = disk_solution4
    diff = (system.matrix - system.matrix.T).toarray()
    assert np.abs(diff).max() < 1e-12


def test_constant_in_kernel_before_grounding(disk_solution4):
    system, _, _ = disk_solution4
    full = system.full_matrix()
    const = np.ones(full.shape[0])
    assert np.abs(full @ const).max() < 1e-10


def test_doubling_sigma_scales_interior_block_only(disk, four_electrode_layout, disk_mesh4):
    mesh = disk_mesh4
    n = mesh.n_nodes
    k1 = assemble_system(mesh, np.ones(n), four_electrode_layout).full_matrix().toarray()
    k2 = assemble_system(mesh, 2 * np.ones(n), four_electrode_layout).full_matrix().toarray()
    # electrode blocks (couplings to the M electrode dofs) carry no conductivity
    assert np.allclose(k2[n:, :], k1[n:, :])
    assert np.allclose(k2[:, n:], k1[:, n:])
    stiffness_1 = k1[:n, :n] - assemble_system(
        mesh, np.full(n, 1e-9), four_electrode_layout).full_matrix().toarray()[:n, :n]
    stiffness_2 = k2[:n, :n] - k1[:n, :n]
    assert np.allclose(stiffness_2, stiffness_1, rtol=1e-6, atol=1e-12)


def test_zero_current_gives_zero_solution(disk_solution4):
    system, _, _ = disk_solution4
    x = system.solve_dofs(np.zeros((system.matrix.shape[0], 1)))
    assert np.abs(x).max() == 0.0


def test_solution_linearity(disk_solution4):
    system, sol, pats = disk_solution4
    scaled = CurrentPatternSet(3.5 * pats.matrix)
    sol2 = solve(system, scaled)
    assert np.allclose(sol2.U, 3.5 * sol.U, rtol=1e-12, atol=1e-14)
    assert np.allclose(sol2.u, 3.5 * sol.u, rtol=1e-12, atol=1e-14)


def test_mirror_symmetry_two_electrodes(disk):
    # electrodes placed symmetrically about the y axis, driven against each other
    layout = make_layout(disk, [np.pi / 2 - 0.6 - WIDTH / 2, np.pi / 2 + 0.6 - WIDTH / 2],
                         WIDTH)
    mesh = build_mesh(disk, layout, 0.08)
    sol = solve(assemble_system(mesh, np.ones(mesh.n_nodes), layout),
                CurrentPatternSet.feeding_basis(2))
    assert abs(sol.U[0, 0] + sol.U[1, 0]) <= 1e-8 * np.abs(sol.U).max()


def test_ground_convention(disk_solution4):
    _, sol, _ = disk_solution4
    assert np.abs(sol.U.sum(axis=0)).max() < 1e-10


def test_reciprocity(disk_solution4):
    system, sol, pats = disk_solution4
    r_norm = np.abs(sol.U).max()
    for i in range(pats.n_patterns):
        for j in range(pats.n_patterns):
            lhs = pats.matrix[:, i] @ sol.U[:, j]
            rhs = pats.matrix[:, j] @ sol.U[:, i]
            assert abs(lhs - rhs) <= 1e-8 * r_norm


def test_resistance_matrix_symmetric_and_circulant(disk, four_electrode_layout, disk_mesh4):
    r = resistance_matrix(disk_mesh4, np.ones(disk_mesh4.n_nodes), four_electrode_layout)
    assert np.abs(r - r.T).max() <= 1e-8 * np.abs(r).max()
    # equispaced electrodes on the disk: rotating the electrode labels is a
    # symmetry up to meshing error
    rolled = np.roll(np.roll(r, 1, axis=0), 1, axis=1)
    assert np.abs(r - rolled).max() <= 2e-2 * np.abs(r).max()


def test_conductivity_monotonicity(disk, four_electrode_layout, disk_mesh4):
    mesh = disk_mesh4
    pats = CurrentPatternSet.feeding_basis(4)
    u1 = solve(assemble_system(mesh, np.ones(mesh.n_nodes), four_electrode_layout), pats)
    u2 = solve(assemble_system(mesh, 2 * np.ones(mesh.n_nodes), four_electrode_layout), pats)
    for j in range(pats.n_patterns):
        drive = pats.matrix[:, j]
        drop1 = drive @ u1.U[:, j]
        drop2 = drive @ u2.U[:, j]
        assert 0 < drop2 < drop1


def test_nonpositive_sigma_rejected(disk, four_electrode_layout, disk_mesh4):
    sigma = np.ones(disk_mesh4.n_nodes)
    sigma[3] = 0.0
    with pytest.raises(SolverError):
        assemble_system(disk_mesh4, sigma, four_electrode_layout)


def test_current_recovery(disk, four_electrode_layout, disk_mesh4, disk_solution4):
    system, sol, pats = disk_solution4
    rec = check_currents(sol, four_electrode_layout, disk_mesh4, system)
    assert np.abs(rec.sum(axis=0)).max() < 1e-9
    assert np.abs(rec - pats.matrix).max() <= 1e-6 * np.abs(pats.matrix).max()


def test_gap_flux_small(disk, four_electrode_layout, disk_mesh4, disk_solution4):
    _, sol, pats = disk_solution4
    flux = gap_flux(sol, disk_mesh4, np.ones(disk_mesh4.n_nodes))
    assert np.abs(flux).max() <= 2e-2 * np.abs(pats.matrix).sum(axis=0).max() + 2e-2


def test_grounding_invariance(disk_solution4):
    _, sol, _ = disk_solution4
    shifted_u = sol.u + 5.0
    shifted_e = sol.U + 5.0
    ground = shifted_e.mean(axis=0)
    assert np.allclose(shifted_u - ground, sol.u, atol=1e-12)
    assert np.allclose(shifted_e - ground, sol.U, atol=1e-12)


def test_solution_norm_scales_with_current(disk_solution4):
    system, sol, pats = disk_solution4
    big = solve(system, CurrentPatternSet(1e6 * pats.matrix))
    assert np.linalg.norm(big.U) == pytest.approx(1e6 * np.linalg.norm(sol.U), rel=1e-12)


def test_measurement_map_stacking(disk, four_electrode_layout, disk_mesh4):
    pats = CurrentPatternSet.feeding_basis(4)
    stacked = measurement_map(disk_mesh4, np.ones(disk_mesh4.n_nodes),
                              four_electrode_layout, pats)
    assert stacked.shape == (12,)
    sol = solve(assemble_system(disk_mesh4, np.ones(disk_mesh4.n_nodes),
                                four_electrode_layout), pats)
    assert np.array_equal(stacked[:4], sol.U[:, 0])

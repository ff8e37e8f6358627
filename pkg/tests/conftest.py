import numpy as np
import pytest

from eitopt import (BoundaryCurve, CurrentPatternSet, assemble_system, build_background,
                    build_mesh, build_projection, equidistant_layout, make_layout, solve)

WIDTH = np.pi / 16


@pytest.fixture(scope="session")
def disk():
    return BoundaryCurve.disk()


@pytest.fixture(scope="session")
def two_electrode_layout(disk):
    return make_layout(disk, [0.0, np.pi / 2], WIDTH)


@pytest.fixture(scope="session")
def four_electrode_layout(disk):
    return equidistant_layout(disk, 4, WIDTH)


@pytest.fixture(scope="session")
def disk_mesh4(disk, four_electrode_layout):
    return build_mesh(disk, four_electrode_layout, 0.12)


@pytest.fixture(scope="session")
def disk_solution4(disk, four_electrode_layout, disk_mesh4):
    patterns = CurrentPatternSet.feeding_basis(4)
    system = assemble_system(disk_mesh4, np.ones(disk_mesh4.n_nodes), four_electrode_layout)
    return system, solve(system, patterns), patterns


@pytest.fixture(scope="session")
def background_pair(disk, two_electrode_layout):
    """Mesh + background + projection for the two-electrode reference setup."""
    mesh = build_mesh(disk, two_electrode_layout, 0.06)
    bg = build_background(disk, 0.15)
    proj = build_projection(bg, mesh)
    return mesh, bg, proj

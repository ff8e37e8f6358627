"""Electrode-position optimization for 2D impedance tomography.

Forward modeling uses the complete electrode model discretized with P1
finite elements; electrode placement is optimized under Bayesian A- and
D-optimality criteria with analytically sampled shape derivatives.
"""

from .geometry import (
    BoundaryCurve,
    ElectrodeLayout,
    GeometryError,
    arc_length,
    endpoint_from_width,
    equidistant_layout,
    gap_lengths,
    is_admissible,
    make_layout,
    shift_layout,
    width_coupling_ratio,
)
from .meshing import (
    BackgroundMesh,
    CemMesh,
    MeshError,
    ProjectionMap,
    build_background,
    build_mesh,
    build_projection,
    mesh_to_json,
)
from .forward import (
    CemSolution,
    CemSystem,
    Conductivity,
    CurrentPatternSet,
    SolverError,
    assemble_system,
    check_currents,
    gap_flux,
    measurement_map,
    resistance_matrix,
    solve,
)

__version__ = "0.1.0"

"""Finite volume schemes for scalar conservation laws on moving triangulated surfaces."""

from .errors import (
    BlowUpError,
    ConfigurationError,
    DomainError,
    GeometryError,
    MoverFVError,
    NumericalError,
)
from .mesh import (
    MeshSnapshot,
    ReferenceMesh,
    build_icosphere,
    cell_measure,
    check_manifold,
    edge_geometry,
    mean_diameter,
    snapshot,
)
from .motion import MotionMap, evaluate, identity, pinching_ellipsoid, shrinking_sphere
from .flux import (
    FluxModel,
    discrete_divergence_check,
    pinched_ellipsoid_normal,
    potential_divfree,
    projected_burgers,
    rotation_linear,
    sphere_normal,
)
from .solver import (
    CellState,
    EdgeFluxFunction,
    SolverConfig,
    cfl_dt,
    edge_flux_function,
    eo_split,
    init_cell_averages,
    numerical_flux_eo,
    numerical_flux_llf,
    run,
    step,
)
from .validate import (
    BurgersFlux1D,
    EocRecord,
    LinearFlux1D,
    Reduced1DState,
    entropy_residual_1d,
    eoc_table,
    exact_tp1,
    exact_tp1_points,
    l1_error,
    mass_total,
    reduced_1d_run,
    tp2_initial,
)
from .config import RunConfiguration, build_problem, parse_config
from .vtkio import read_eoc_csv, read_vtk, write_eoc_csv, write_vtk

__version__ = "0.1.0"

"""Anisotropic conductivity recovery from local boundary data on layered domains."""
from .errors import (  # noqa: F401
    AnisocalError,
    NotSPD,
    DimensionTooSmall,
    CoincidentPoints,
    InvalidParameter,
    OutsidePatch,
    BrokenChain,
    FlatInterface,
    ResolutionTooCoarse,
    SingularSystem,
    PatchNotFound,
    EpsilonUnresolved,
    PointsTooClose,
    InsufficientDirections,
    FitDiverged,
    NonUniqueConstraints,
    ChainOrderViolation,
    PointsInE,
    ConfigInvalid,
    CheckFailed,
    SeriesNotFound,
)
from .fem import (
    CurrentDensity,
    DiscreteNDMap,
    NeumannSolver,
    alessandrini_residual,
    approx_delta_current,
    assemble_local_nd_map,
    kernel_from_nd_map,
    s_function_residual,
    solve_neumann_problem,
)
from .geometry import (
    Interface,
    PartitionedDomain,
    SurfacePatch,
    flat_patch,
    is_nonflat,
    paraboloid_patch,
    stacked_paraboloid_domain,
    tangent_frame_at,
    validate_partition_chain,
)
from .halfspace import boundary_kernel, build_pushforward_frame, four_point_kernel, halfspace_neumann_kernel
from .mesh import Mesh, build_structured_mesh, read_mesh, write_mesh
from .metric import conductivity_from_metric, metric_from_conductivity
from .recovery import (
    AnalyticKernelSource,
    FemKernelSource,
    FemSettings,
    FitSettings,
    RecoveryConfig,
    extract_tangential_metric,
    layer_strip,
    recover_full_metric,
    recover_interface_conductivity,
)
from .tartar import flat_boundary_indistinguishability, flat_constraint_nullspace, tartar_conductivity, tartar_metric

__version__ = "0.1.0"

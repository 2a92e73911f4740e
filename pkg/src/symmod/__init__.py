"""Symmetry-based modal analysis of grouped power systems."""

from .errors import (
    AlgebraicLoopSingular,
    ConfigInvalid,
    ContourSeparationFailure,
    ConvergenceFailure,
    DefectiveCluster,
    DimensionMismatch,
    DivergenceDetected,
    InvalidParameter,
    NonFiniteEntry,
    OperatingPointResidualTooLarge,
    PairingAmbiguous,
    PartitionMismatch,
    PortMismatch,
    SingularTransform,
    SymmodError,
    TraceTooShort,
    UnknownParameter,
)
from .lti import (
    EXTERNAL_GRID,
    AssembledSystem,
    StateSpaceModel,
    apply_similarity,
    as_real_dq,
    assemble_group_grid,
    assemble_rl_example,
    make_model,
)
from .modal import (
    GROUP_GRID,
    INNER_GROUP,
    UNCLASSIFIED,
    InvarianceReport,
    ModalResult,
    ModeCluster,
    classify_clusters,
    cluster_modes,
    geometric_multiplicity,
    group_participation,
    group_participation_projector,
    modal_analysis,
    pair_eigenvalues,
    relative_change,
)
from .symmetry import (
    Decomposition,
    Group,
    GroupPartition,
    TransformP,
    build_transform,
    decompose,
    detect_groups,
)
from .devices import (
    DeviceModel,
    DeviceSpec,
    as_real_dq_device,
    build_generic_lti,
    build_gfl,
    build_gfm,
    build_grid_rl,
    build_rl_branch,
    check_operating_point,
    gfm_angle_for_power,
)
from .simkit import (
    Disturbance,
    Scenario,
    Trace,
    dominant_frequencies,
    export_trace_csv,
    modal_coordinates,
    simulate,
)

__version__ = "0.1.0"

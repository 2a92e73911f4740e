"""Exception types shared across the package."""


class SymmodError(Exception):
    """Base class for all symmod errors."""


class DimensionMismatch(SymmodError):
    """Matrix/label dimensions of a state-space quadruple are inconsistent."""


class NonFiniteEntry(SymmodError):
    """A model matrix contains NaN or Inf entries."""


class InvalidParameter(SymmodError):
    """A physical or control parameter violates its validity range."""


class PortMismatch(SymmodError):
    """Subsystem and grid port dimensions are incompatible."""


class AlgebraicLoopSingular(SymmodError):
    """The feedthrough interconnection matrix is (numerically) singular."""


class SingularTransform(SymmodError):
    """A similarity transformation matrix is not invertible."""


class PartitionMismatch(SymmodError):
    """A group partition does not cover the assembled system's subsystems."""


class ConvergenceFailure(SymmodError):
    """The eigensolver failed to converge."""


class DefectiveCluster(SymmodError):
    """A mode cluster lacks a full eigenvector basis; gpf is not computed."""


class ContourSeparationFailure(SymmodError):
    """No circle separates the cluster from the rest of the spectrum."""


class PairingAmbiguous(SymmodError):
    """Two candidate mode pairings are equally close; both options reported."""


class TraceTooShort(SymmodError):
    """A simulation trace has too few samples for spectral analysis."""


class DivergenceDetected(SymmodError):
    """State norm exceeded the divergence guard during simulation."""


class ConfigInvalid(SymmodError):
    """A system configuration or scenario failed validation."""


class UnknownParameter(SymmodError):
    """A vary/disturbance expression names an unknown element or parameter."""


class OperatingPointResidualTooLarge(SymmodError):
    """The supplied operating point is too far from equilibrium to linearize."""

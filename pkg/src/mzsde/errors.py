"""Exception types shared across the package."""


class MzsdeError(Exception):
    """Base class for all package-specific errors."""


class NonNormalizableWeightError(MzsdeError):
    """The requested weight has non-finite mass on every tested interval."""


class InsufficientRecurrenceError(MzsdeError):
    """More quadrature nodes requested than the stored recurrence supports."""


class InconsistentBasisError(MzsdeError):
    """Basis weight does not match the equilibrium measure of the model."""


class InvalidModelError(MzsdeError):
    """SDE model parameters violate the model invariants."""


class AssemblyInconsistencyError(MzsdeError):
    """Ladder-form reassembly failed to reproduce the generator matrix."""


class DimensionMismatchError(MzsdeError):
    """Operands have incompatible dimensions."""


class DependentObservablesError(MzsdeError):
    """Projected observables are (numerically) linearly dependent."""


class InvalidObservableError(MzsdeError):
    """Observable violates a precondition (e.g. nonzero mean)."""


class InvalidGridError(MzsdeError):
    """Time grid is not strictly increasing (or not uniform where required)."""


class SchemeDivergenceError(MzsdeError):
    """Volterra integration blew up on a dissipative problem."""


class EigensolverFailureError(MzsdeError):
    """Dense nonsymmetric eigensolver did not converge."""


class UnstableConfigurationError(MzsdeError):
    """Path simulation overflowed (step size too large for the potential)."""


class InsufficientHorizonError(MzsdeError):
    """Requested correlation lag exceeds the sampled horizon."""


class InvalidComparisonError(MzsdeError):
    """Cross-validation inputs cannot be brought onto a common grid."""


class ConfigError(MzsdeError):
    """Experiment configuration is malformed; message names the field."""

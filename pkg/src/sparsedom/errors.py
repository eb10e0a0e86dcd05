"""Exception types shared across the package."""


class SparsedomError(Exception):
    """Base class for all package errors."""


class ContractViolation(SparsedomError, ValueError):
    """A documented precondition does not hold."""


class ResolutionError(SparsedomError):
    """The lattice or the finite-difference stencil cannot resolve the request."""


class InvertibilityError(SparsedomError):
    """A curve map could not be inverted on the configured box."""


class CurvatureError(SparsedomError):
    """No spanning bracket configuration was found up to the requested order."""


class SpanError(SparsedomError):
    """Fields are rank deficient at the base point."""


class DomainExitError(SparsedomError):
    """A trajectory or a curve point left the configured box."""


class DisconnectedError(SparsedomError):
    """The target point is unreachable within the largest admissible scale."""


class KernelError(SparsedomError):
    """A kernel could not be evaluated where the construction needs it."""


class SelectionFailure(SparsedomError):
    """No admissible threshold was found during sparse selection."""


class ConstantInfeasibleError(SparsedomError):
    """No Whitney constant satisfies the selection constraints."""


class DominationFailure(SparsedomError):
    """Nonzero pairing against a vanishing sparse form."""


class ConfigError(SparsedomError, ValueError):
    """Experiment configuration failed validation."""

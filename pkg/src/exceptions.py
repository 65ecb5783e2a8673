"""Exception hierarchy for the DPRP toolkit.

The CLI maps these onto exit codes: validation-type errors exit with 1,
calibration-type errors with 2.
"""


class DPRPError(Exception):
    """Base class for all toolkit errors."""


class DataValidationError(DPRPError, ValueError):
    """Input data violates the data model (bounds, zero norm, dimensions)."""


class PreconditionError(DPRPError, ValueError):
    """A function was called outside its mathematical domain."""


class ProvenanceMismatchError(DPRPError, ValueError):
    """Two sketches cannot be combined (different spec, variant or epsilon)."""


class UnsupportedMechanismError(DPRPError, ValueError):
    """The requested mechanism or variant is not available for this operation."""


class CalibrationError(DPRPError, RuntimeError):
    """Noise calibration could not be completed."""


class ConvergenceError(CalibrationError):
    """Root finding failed to bracket or to reach the residual tolerance."""


class IntegrationError(CalibrationError):
    """Numerical quadrature did not reach the requested tolerance."""

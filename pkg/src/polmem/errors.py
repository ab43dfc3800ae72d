"""Exception types shared across the package."""


class PolmemError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PolmemError):
    """Invalid configuration, schema violation, or malformed input file."""


class DataError(PolmemError):
    """Input data violates a precondition (unphysical state, bad window, ...)."""


class UndefinedRatioError(DataError):
    """A requested ratio has a zero denominator (no detections, no background)."""


class FitError(PolmemError):
    """A fit could not be performed or did not converge to a usable estimate."""


class IllConditionedFitError(FitError):
    """Design matrix is rank deficient; the sampled angles are degenerate."""


class DegenerateGeometryError(FitError):
    """Input vectors are collinear; the rotation is not uniquely determined."""

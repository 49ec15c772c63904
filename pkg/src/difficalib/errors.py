"""Exception types shared across the toolkit."""


class DifficalibError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DifficalibError):
    """Input data violates a documented invariant."""


class FormatError(DifficalibError):
    """File does not follow the expected wire format."""


class ParseError(FormatError):
    """A field inside an otherwise well-formed file could not be parsed."""


class CorruptionError(DifficalibError):
    """File is structurally recognizable but its payload is damaged."""


class FitError(DifficalibError):
    """Model fitting cannot proceed on the given data."""


class SingularCovarianceError(FitError):
    """Covariance factorization failed; a larger shrinkage is needed."""


class ConfigError(DifficalibError):
    """Configuration names an unknown option or misses a required one."""

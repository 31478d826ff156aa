"""Exception hierarchy. Every error carries a stable machine-readable code."""


class SisError(Exception):
    code = "SIS_ERROR"


class FormatError(SisError, ValueError):
    """A document could not be parsed or is structurally invalid."""

    code = "FORMAT_ERROR"


class VersionError(FormatError):
    code = "VERSION_ERROR"


class RangeError(SisError, ValueError):
    """A parameter (alpha, beta, k, nprobe, ...) is outside its legal range."""

    code = "RANGE_ERROR"


class ValidationError(SisError, ValueError):
    code = "VALIDATION_ERROR"


class MissingFeatureError(SisError, KeyError):
    code = "MISSING_FEATURE"

    def __str__(self):
        return Exception.__str__(self)

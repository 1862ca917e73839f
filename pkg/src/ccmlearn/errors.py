"""Exception types shared across the package."""


class CcmlearnError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CcmlearnError):
    """A persisted file is malformed; the message names the offending field."""


class VersionError(CcmlearnError):
    """A persisted file declares an unsupported schema version."""


class ConfigError(CcmlearnError):
    """Invalid configuration values."""


class SolverFailure(CcmlearnError):
    """An optimization sub-routine failed to produce a usable result."""


class CertificateViolation(CcmlearnError):
    """A metric that should be positive definite is not.

    Carries the offending minimum eigenvalue in ``min_eig``.
    """

    def __init__(self, message, min_eig=None):
        super().__init__(message)
        self.min_eig = min_eig

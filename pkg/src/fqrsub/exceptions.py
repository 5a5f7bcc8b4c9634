"""Exception hierarchy shared across the package."""


class FQRError(Exception):
    """Base class for all package errors."""


class ParameterError(FQRError, ValueError):
    """An argument lies outside its mathematical domain."""


class IngestionError(FQRError, ValueError):
    """Input data (arrays or files) could not be turned into a dataset."""


class SolverError(FQRError, RuntimeError):
    """A linear system could not be solved even after regularization."""


class ConfigError(FQRError, ValueError):
    """An experiment or command configuration is invalid."""

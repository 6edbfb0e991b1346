"""Exception taxonomy shared across the package."""


class SgbayesError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SgbayesError, ValueError):
    """A coordinate or parameter vector lies outside its admissible domain."""


class ConfigurationError(SgbayesError, ValueError):
    """Invalid or inconsistent configuration values."""


class IncompleteDataError(SgbayesError):
    """A required grid-point value is missing from the supplied data."""


class ModelExecutionError(SgbayesError):
    """A forward-model evaluation failed.

    Carries the parameter point and whatever diagnostics could be collected
    (exit code, stderr tail, offending file contents).
    """

    def __init__(self, message, theta=None, diagnostics=None):
        super().__init__(message)
        self.theta = None if theta is None else tuple(float(t) for t in theta)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if self.theta is not None:
            base += f" [theta={self.theta}]"
        if self.diagnostics:
            base += f" [diagnostics: {self.diagnostics}]"
        return base


class CacheError(SgbayesError):
    """Evaluation-cache I/O failed (corrupt entry, unreadable file, ...)."""


class PersistenceError(SgbayesError):
    """A surrogate file could not be written, or failed verification on load."""


class InitializationError(SgbayesError):
    """The MCMC sampler cannot start from the supplied initial point."""


class DirectRunRefusedError(SgbayesError):
    """Direct (non-surrogate) MCMC on an expensive backend was refused."""

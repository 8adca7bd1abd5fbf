"""Exception types shared across the package."""


class QbcmrError(Exception):
    """Base class for package errors."""


class ConfigError(QbcmrError, ValueError):
    """Invalid, incomplete or unresolvable experiment configuration."""


class NumericalError(QbcmrError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer."""


class SingularDesignError(NumericalError):
    """Empirical Gram matrix is (numerically) singular.

    Usually means the sieve dimension is too large for the sample size.
    """


class QuadratureError(NumericalError):
    """Successive quadrature refinements disagree beyond tolerance."""


class InsufficientDrawsError(QbcmrError, ValueError):
    """Too few retained MCMC draws for the requested summary."""


class ReplicationError(QbcmrError):
    """A Monte Carlo replication failed; carries its index and seed."""

    def __init__(self, index, seed, cause):
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"replication {index} (seed {seed}) failed: {cause!r}")

    def __reduce__(self):
        return (type(self), (self.index, self.seed, self.cause))

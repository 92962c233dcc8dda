"""Exception types shared across the package."""


class PrecisionError(RuntimeError):
    """Raised when a digit stream exhausts its refinement budget.

    The dyadic expansion of a sampled point can be extended only a bounded
    number of times (the stream's ``max_refinements``); if the requested
    number of certified digits still cannot be produced, this is raised
    rather than returning uncertified output.
    """


class CertificationError(RuntimeError):
    """Raised when an exactness check fails at build time.

    Used by the Ulam assembly when row sums or the adjoint-invariance
    residual exceed their certified bounds.
    """


class PowerIterationError(PrecisionError):
    """Power iteration hit ``max_iter`` before reaching tolerance.

    Carries the last iterate so callers can inspect how close it got:
    ``value`` (eigenvalue estimate), ``vector`` (iterate), and
    ``residual`` (max-norm of W v - value * v at exit).
    """

    def __init__(self, message, value, vector, residual):
        super().__init__(message)
        self.value = value
        self.vector = vector
        self.residual = residual


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""

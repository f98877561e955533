"""Exception hierarchy shared by all modules."""


class GpsmcError(Exception):
    """Base class for library errors."""


class DimensionError(GpsmcError, ValueError):
    """Array shapes or hyperparameter counts disagree."""


class CholeskyError(GpsmcError, ArithmeticError):
    """Covariance factorization failed even at the largest jitter.

    ``jitter`` is the largest absolute diagonal jitter attempted; ``stage``
    and ``particle`` are filled in when raised from inside the sampler.
    """

    def __init__(self, message, jitter=None, stage=None, particle=None):
        self.jitter = jitter
        self.stage = stage
        self.particle = particle
        parts = [message]
        if jitter is not None:
            parts.append(f"jitter={jitter:.3g}")
        if stage is not None:
            parts.append(f"stage={stage}")
        if particle is not None:
            parts.append(f"particle={particle}")
        super().__init__("; ".join(parts))


class DegeneracyError(GpsmcError, ArithmeticError):
    """Every particle weight (or every run-length message) is zero."""


class ConfigError(GpsmcError, ValueError):
    """Invalid configuration or input file."""

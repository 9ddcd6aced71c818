"""Exception types shared across the toolkit."""


class FrameLyapError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(FrameLyapError, ValueError):
    """An input point or matrix has the wrong shape for the vector field."""


class FieldDomainError(FrameLyapError, ValueError):
    """A vector field produced a non-finite value, signalling an invalid point."""


class BlowUpError(FrameLyapError, RuntimeError):
    """A trajectory left the configured norm bound.

    Carries the time and norm at which the bound was crossed so the caller
    can distinguish a genuine blow-up from a too-small bound.
    """

    def __init__(self, t: float, norm: float, bound: float):
        self.t = t
        self.norm = norm
        self.bound = bound
        super().__init__(
            f"trajectory norm {norm:.3e} exceeded bound {bound:.3e} at t={t:.6g}"
        )


class DegenerateFrameError(FrameLyapError, ValueError):
    """Gram-Schmidt hit a (numerically) dependent column."""

    def __init__(self, column: int, norm_ratio: float):
        self.column = column
        self.norm_ratio = norm_ratio
        super().__init__(
            f"frame column {column} is numerically dependent on the previous "
            f"columns (residual norm ratio {norm_ratio:.3e})"
        )


class OrthonormalityDriftError(FrameLyapError, RuntimeError):
    """Frame drifted too far from orthonormal between cleanup passes."""

    def __init__(self, t: float, drift: float, reorth_every: int):
        self.t = t
        self.drift = drift
        self.reorth_every = reorth_every
        super().__init__(
            f"orthonormality drift {drift:.3e} at t={t:.6g} exceeds 1e-6; "
            f"re-orthonormalize more often than every {reorth_every} steps"
        )


class TapeCoverageError(FrameLyapError, ValueError):
    """A requested time or window falls outside the sampled tape."""


class NonConvergedError(FrameLyapError, RuntimeError):
    """An exponent estimate has not settled enough for classification."""


class ConfigError(FrameLyapError, ValueError):
    """Invalid solver or experiment configuration."""

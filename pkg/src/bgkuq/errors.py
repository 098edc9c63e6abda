"""Exception types shared across the package."""


class BgkError(Exception):
    """Base class for all package-specific errors."""


class DegenerateStateError(BgkError):
    """A kinetic state produced non-physical moments (rho <= 0 or T <= 0).

    Carries enough context to locate the offending cell in a large
    sample farm.
    """

    def __init__(self, message, *, cell=None, stage=None, t=None, sample=None):
        super().__init__(message)
        self.cell = cell
        self.stage = stage
        self.t = t
        self.sample = sample

    def __str__(self):
        ctx = []
        if self.sample is not None:
            ctx.append(f"sample={self.sample}")
        if self.cell is not None:
            ctx.append(f"cell={self.cell}")
        if self.stage is not None:
            ctx.append(f"stage={self.stage}")
        if self.t is not None:
            ctx.append(f"t={self.t:.6g}")
        base = super().__str__()
        return f"{base} ({', '.join(ctx)})" if ctx else base


class NewtonConvergenceError(BgkError):
    """The discrete-Maxwellian Newton iteration failed to converge."""

    def __init__(self, message, *, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateWallError(BgkError):
    """Diffusive-wall flux balance has no solution (vanishing outgoing flux)."""


class VacuumError(BgkError):
    """Riemann data would generate vacuum; the exact solver does not support it."""


class ConfigError(BgkError):
    """Invalid run configuration (schema violation, unknown key, bad value)."""


class SolverFailure(BgkError):
    """A numerical failure propagated out of a sample solve.

    Wraps the original error and records (level, sample) context; a failed
    sample aborts the whole run rather than being dropped silently.
    """

    def __init__(self, message, *, level=None, sample=None, cause=None):
        super().__init__(message)
        self.level = level
        self.sample = sample
        self.cause = cause

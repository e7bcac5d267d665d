"""Exception hierarchy for skewmix."""


class SkewmixError(Exception):
    """Base class for all skewmix errors."""

    code = "error"

    def to_json(self):
        return {"error": self.code, "message": str(self)}


class ValidationError(SkewmixError):
    """A standing assumption (expansion, distortion, roof regularity, pair invariant) failed."""

    code = "validation"


class DomainError(SkewmixError):
    code = "domain"


class BoundaryHitError(SkewmixError):
    code = "boundary_hit"


class BranchOverflowError(SkewmixError):
    code = "branch_overflow"


class NotCoveringError(SkewmixError):
    code = "not_covering"


class ResolutionError(SkewmixError):
    code = "resolution"

    def __init__(self, message, suggested=None):
        super().__init__(message)
        self.suggested = suggested

    def to_json(self):
        out = super().to_json()
        out["suggested_resolution"] = self.suggested
        return out


class ConvergenceError(SkewmixError):
    code = "no_convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateDensityError(SkewmixError):
    code = "degenerate_density"


class InfeasibleParametersError(SkewmixError):
    code = "infeasible_parameters"


class SplitInfeasibleError(SkewmixError):
    code = "split_infeasible"


class BelowThresholdError(SkewmixError):
    """The twist |b| is too small for a full phase oscillation to fit the overlap."""

    code = "below_b0"


class CancellationViolation(SkewmixError):
    code = "cancellation_violation"


class CannotReduceError(SkewmixError):
    code = "cannot_reduce"


class UnderdeterminedFitError(SkewmixError):
    code = "underdetermined_fit"


class ConfigError(SkewmixError):
    code = "config"

"""Exception types shared across the package."""


class CoefficientError(ValueError):
    """A diffusion or reaction coefficient violates its positivity bound."""


class SolverFailure(RuntimeError):
    """A linear solve produced NaN/Inf or a singular system."""


class SizeGuardError(ValueError):
    """A brute-force oracle was asked to exceed its hard size limit."""


class ConfigError(ValueError):
    """A problem-description file is invalid.

    Carries the full list of violations, not just the first one found.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

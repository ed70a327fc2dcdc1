"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration or an input outside a documented precondition."""


class BudgetError(ConfigurationError):
    """The field is too large for the power-series composition to be meaningful."""


class SizeGuardError(ConfigurationError):
    """A box or operator would exceed the configured size cap."""


class SmallDivisorFailure(RuntimeError):
    """A parameter point is rejected because of (near-)vanishing divisors.

    Parameters
    ----------
    message : str
        Human readable reason.
    violations : list, optional
        Records describing the offending divisors, e.g. ``(n, k, value)``.
    diagnostics : dict, optional
        Extra numbers (condition estimate, threshold, ...).
    """

    def __init__(self, message, violations=None, diagnostics=None):
        super().__init__(message)
        self.violations = list(violations or [])
        self.diagnostics = dict(diagnostics or {})


class RealityViolation(RuntimeError):
    """A quantity that must be real picked up an imaginary part."""

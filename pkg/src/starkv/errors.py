"""Exception types shared across the package."""


class DomainError(ValueError):
    """Evaluation point outside the admissible domain."""


class NonDifferentiableError(DomainError):
    """Derivative requested at a kink of the coefficient."""


class ConfigError(ValueError):
    """Malformed or semantically invalid experiment configuration."""


class NoSingularityError(RuntimeError):
    """Profile has no power-type singularity at the vertex (d == 0 near 0, or d(0) > 0)."""


class EstimationError(RuntimeError):
    """Limit estimator failed to converge; carries the raw sequence for diagnosis."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class AssemblyError(RuntimeError):
    """Finite-element assembly failed (e.g. coefficient not evaluable on an element)."""


class NearSingularityError(RuntimeError):
    """Resolvent requested within roundoff distance of a generator eigenvalue."""


class DegenerateTestFunctionError(RuntimeError):
    """Test function with vanishing denominator in a Rayleigh-type ratio."""

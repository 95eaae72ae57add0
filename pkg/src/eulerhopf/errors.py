"""Exception types shared across the package."""


class EulerHopfError(Exception):
    """Base class for all package errors."""


class DomainError(EulerHopfError, ValueError):
    """A point lies outside the domain where the query requires membership."""


class ShellError(DomainError):
    """A normal was requested for a point too far from the boundary."""


class DegenerateGeometryError(EulerHopfError):
    """The signed-distance oracle is not usable (zero gradient, not 1-Lipschitz)."""


class SingularityError(EulerHopfError, ValueError):
    """Green's function requested on the diagonal."""


class CapExceededError(EulerHopfError):
    """Too many critical points for exhaustive subset enumeration."""


class AssumptionsViolated(EulerHopfError):
    """(A2)-type failure: an interaction matrix has a least eigenvalue near zero.

    ``subset`` holds the offending tuple of critical-point indices and ``rho``
    the computed eigenvalue.
    """

    def __init__(self, message, subset=None, rho=None, tolerance=None):
        super().__init__(message)
        self.subset = subset
        self.rho = rho
        self.tolerance = tolerance


class QuadratureError(EulerHopfError):
    """Monte Carlo quadrature produced an unusable estimate."""


class FitError(EulerHopfError):
    """Gauss-Newton bubble fit did not converge; ``best`` holds the best iterate."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class IntegratorError(EulerHopfError):
    """Velocity became non-finite; ``last_state`` is the last valid configuration."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ConfigError(EulerHopfError):
    """Run configuration failed validation."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

"""Exception hierarchy shared by all modules."""


class PoincareHomogError(Exception):
    """Base class for library errors."""


class GeometryError(PoincareHomogError, ValueError):
    """Invalid cell geometry or mesh request."""


class MeshResolutionError(GeometryError):
    """The mesh is too coarse to resolve the inclusion."""


class ConstraintError(PoincareHomogError, ValueError):
    """Constraint kind incompatible with the mesh or the quasi-momentum."""


class NumericalError(PoincareHomogError, RuntimeError):
    """A numerical check (residual, definiteness, separation) failed."""


class SingularFormError(NumericalError):
    """The denominator form is not positive definite on the constrained space."""


class SpectralSeparationError(NumericalError):
    """Trivial and nontrivial eigenvalues cannot be told apart."""


class CellProblemError(NumericalError):
    """The cell problem is singular for the requested conductivity."""

    def __init__(self, message: str, a: complex, distance: float | None = None,
                 nearest: float | None = None):
        super().__init__(message)
        self.a = a
        self.distance = distance
        self.nearest = nearest


class NearResonanceError(NumericalError):
    """The spectral parameter lies too close to the discrete spectrum."""

    def __init__(self, message: str, lam: complex, distance: float):
        super().__init__(message)
        self.lam = lam
        self.distance = distance


class ConfigError(PoincareHomogError, ValueError):
    """Invalid CLI configuration."""

class RydisingError(Exception):
    """Base class for all errors raised by rydising."""


class ConfigError(RydisingError, ValueError):
    """Invalid or incomplete experiment configuration."""


class DomainError(RydisingError, ValueError):
    """Argument outside the physical domain of an operation."""


class ResonanceError(RydisingError, ValueError):
    """Evaluation inside the guard band of the anti-blockade pole."""


class NoRangeError(RydisingError, ValueError):
    """The pair potential never reaches the detuning, so r_c is undefined."""


class DensityError(RydisingError, ValueError):
    """Requested cloud is denser than the sampler supports."""


class GeometryError(RydisingError, ValueError):
    """Coincident or otherwise invalid atom positions."""


class CapacityError(RydisingError, ValueError):
    """System too large for the exact state-vector backend."""


class FitError(RydisingError, ValueError):
    """Data cannot identify the requested fit parameters."""


class PreconditionError(RydisingError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(RydisingError, RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class BranchAmbiguityError(NumericalError):
    """The adiabatically connected eigenvalue branch could not be identified."""


class IntegrationError(NumericalError):
    """Quadrature or Monte Carlo integration did not converge."""


class StiffnessError(NumericalError):
    """The fixed-step integrator cannot resolve the precession fields."""


class SearchError(NumericalError):
    """Fixed-point search did not converge."""

"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HolonomyError(Exception):
    """Base class for every error raised by this package."""


class ContractError(HolonomyError, ValueError):
    """An input violates a documented precondition (shape, hermiticity, ...)."""


class DegenerateInputError(ContractError):
    """Vectors are linearly dependent within tolerance."""


class DegeneracyError(ContractError):
    """Nonzero eigenvalues are (nearly) degenerate; the orbit framework needs a gap."""


class NotOnOrbitError(ContractError):
    """A density matrix does not lie on the requested coadjoint orbit."""


class OutsideChartError(ContractError):
    """A point lies outside the domain of the local chart around a reference frame."""


class StepTooLargeError(HolonomyError):
    """Consecutive samples are too far apart to be aligned reliably."""

    def __init__(self, message: str, index: int | None = None, level: int | None = None):
        super().__init__(message)
        self.index = index
        self.level = level


class LiftUndefinedError(HolonomyError):
    """The Pancharatnam lift does not exist because an overlap vanishes."""

    def __init__(self, message: str, s: float | None = None, level: int | None = None):
        super().__init__(message)
        self.s = s
        self.level = level


class QuadratureError(HolonomyError):
    """Surface quadrature did not converge; carries the last two estimates."""

    def __init__(self, message: str, estimates: tuple[float, float]):
        super().__init__(message)
        self.estimates = estimates


class ClosureUnavailable(HolonomyError):
    """No null-phase closure curve can be constructed between the given endpoints."""


class ConfigError(ContractError):
    """A scenario configuration is invalid; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

"""Exception hierarchy shared by all modules.

Each class maps to one CLI exit status (see :mod:`stabfrag.cli`).
"""

from __future__ import annotations


class StabfragError(Exception):
    """Base class for every error raised by the package."""


class DomainError(StabfragError, ValueError):
    """An argument lies outside the supported domain."""


class NumericAccuracyError(StabfragError, ArithmeticError):
    """A numerical scheme missed its accuracy target.

    ``achieved`` carries the error bound that was actually reached.
    """

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved bound {achieved:.3e})")
        self.achieved = achieved


class ResourceError(StabfragError, MemoryError):
    """A memory, queue or harvest budget was exceeded."""


class PathologicalInputError(StabfragError, RuntimeError):
    """A loop guard tripped (for example the pick limit of a partition)."""


class ConfigurationError(StabfragError, ValueError):
    """Parameters are valid individually but unusable together."""


class UnsupportedPathError(StabfragError, ValueError):
    """Path algebra was asked to work on a path it cannot handle exactly."""


class NotReachedError(StabfragError, RuntimeError):
    """A first passage did not happen before the horizon."""

    def __init__(self, message: str, terminal_infimum: float):
        super().__init__(f"{message} (terminal infimum {terminal_infimum:.6g})")
        self.terminal_infimum = terminal_infimum


class GeometryError(StabfragError, ValueError):
    """An interval family failed its separation check."""


class ContractError(StabfragError, ValueError):
    """Inputs that must come from the same source do not match."""


class DegenerateInputError(StabfragError, ValueError):
    """Input is degenerate (constant sample, tied minimum, ...)."""


class PreconditionError(StabfragError, ValueError):
    """An operation's documented precondition does not hold for its input."""

"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "BracketReachError",
    "DomainEscape",
    "StepUnderflow",
    "ScheduleDomain",
    "FrameDeficient",
    "SingularJacobian",
    "BudgetExceeded",
    "NoConvergence",
    "HypercubeExhausted",
    "Stalled",
    "UnknownScenario",
]


class BracketReachError(Exception):
    """Base class for all package-specific failures."""


class DomainEscape(BracketReachError):
    """A trajectory left the domain box.

    ``exit_time`` is the (flow local) time at which the box boundary was
    crossed, ``point`` the last computed state and ``atom_index`` the flow
    program atom being integrated, when applicable.
    """

    def __init__(self, message: str, exit_time: float, point=None, atom_index: int | None = None):
        super().__init__(message)
        self.exit_time = exit_time
        self.point = point
        self.atom_index = atom_index


class StepUnderflow(BracketReachError):
    """The adaptive integrator step fell below 1e-14."""


class ScheduleDomain(BracketReachError):
    """A schedule was evaluated outside its parameter domain."""


class FrameDeficient(BracketReachError):
    """Fewer independent bracket fields than required were found."""


class SingularJacobian(BracketReachError):
    """The endpoint map Jacobian is numerically singular."""


class BudgetExceeded(BracketReachError):
    """Lipschitz sampling failed to stabilise within the allotted rounds."""


class NoConvergence(BracketReachError):
    """Newton steering did not reach the target tolerance.

    Carries the best residual norm and parameter found.
    """

    def __init__(self, message: str, best_residual: float | None = None, best_param=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_param = best_param


class HypercubeExhausted(BracketReachError):
    """The Newton iterate is pinned to the parameter hypercube boundary."""

    def __init__(self, message: str, best_residual: float | None = None, best_param=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_param = best_param


class Stalled(BracketReachError):
    """Waypoint chaining stopped because the certified radius collapsed."""


class UnknownScenario(BracketReachError):
    """Requested scenario name is not built in and no file was found."""

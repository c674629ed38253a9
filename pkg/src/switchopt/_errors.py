"""The switchopt exception hierarchy.

Every error maps onto one CLI exit code through `exit_code`.
"""

from __future__ import annotations

from collections.abc import Sequence

__all__ = [
    "CertificationError",
    "DivergedError",
    "GraphError",
    "ModelError",
    "ReconstructionError",
    "RegulationError",
    "RegulatorInfeasibleError",
    "SolverFailure",
    "SwitchoptError",
    "WellPosednessError",
]


class SwitchoptError(Exception):
    """Base class of all switchopt errors."""

    exit_code: int = 1


class ModelError(SwitchoptError, ValueError):
    """A realization, plant, graph or model file is malformed."""

    exit_code = 2


class GraphError(ModelError):
    """A switching graph is out of range or admits finite dead-end paths."""

    def __init__(self, message: str, offending: Sequence[int] = ()) -> None:
        super().__init__(message)
        self.offending = tuple(offending)


class WellPosednessError(ModelError):
    """An algebraic loop cannot be resolved in some mode."""

    def __init__(self, message: str, mode: int) -> None:
        super().__init__(f"{message} (mode {mode + 1})")
        self.mode = mode


class RegulationError(SwitchoptError):
    """No regulation witness exists for a closed loop."""

    exit_code = 3


class RegulatorInfeasibleError(RegulationError):
    """The open-loop regulator equations have no solution."""


class DivergedError(SwitchoptError):
    """A rate search is infeasible already at rho = 1."""

    exit_code = 4


class SolverFailure(SwitchoptError, RuntimeError):
    """The conic backend failed to produce a usable answer."""

    exit_code = 5


class ReconstructionError(SolverFailure):
    """Controller variables could not be transformed back into a controller."""


class CertificationError(SolverFailure):
    """Analysis could not re-certify a synthesized controller."""

    def __init__(self, message: str, rho: float) -> None:
        super().__init__(message)
        self.rho = rho

"""Solver and search configuration."""

from __future__ import annotations

from attrs import field, frozen
from attrs.validators import ge, gt, instance_of, le, optional

__all__ = ["BisectionConfig", "LmiConfig"]


@frozen
class LmiConfig:
    """How semidefinite programs are handed to the conic backend.

    Use `attrs.evolve` for per-call overrides.
    """

    solver: str = field(default="CLARABEL", validator=instance_of(str))
    fallback_solver: str | None = field(
        default="SCS", validator=optional(instance_of(str))
    )
    max_iters: int = field(default=10_000, validator=ge(1))
    eps_min: float = field(default=1e-7, validator=gt(0.0))
    """The strictness margin below which a solve counts as infeasible."""
    margin_mode: bool = True
    """Maximize the margin instead of fixing it at `eps_min`."""
    t_max: float = field(default=1e3)
    verify_tol: float = field(default=1e-7, validator=gt(0.0))
    variable_bound: float | None = field(default=None, validator=optional(gt(0.0)))
    """Cap on the magnitude of every decision variable entry."""

    @t_max.validator
    def _check_t_max(self, _attribute: object, value: float) -> None:
        if value <= self.eps_min:
            raise ValueError("t_max must be > eps_min")


@frozen
class BisectionConfig:
    rho_tol: float = field(default=1e-4, validator=gt(0.0))
    max_iterations: int = field(default=40, validator=ge(1))
    rho_min: float = field(default=0.0, validator=[ge(0.0), le(1.0)])
    rho_max: float = field(default=1.0, validator=[gt(0.0), le(1.0)])
    relax_factor: float = field(default=100.0, validator=ge(1.0))
    """`eps_min` is divided by this for the solve confirming infeasibility."""

    def __attrs_post_init__(self) -> None:
        if self.rho_min >= self.rho_max:
            raise ValueError("rho_min must be < rho_max")

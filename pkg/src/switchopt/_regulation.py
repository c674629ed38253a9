"""Regulator equations, internal models and the plant-model interconnection.

The regulator equations ask for Π_r and Γ_r with

    A_r Π_r + B_r2 Γ_r = Π_r'   on every edge (r, r'),
    C_r1 Π_r + D_r12 Γ_r = -I   in every mode,

so that a constant query can be held by the network. The internal model Q_r
built from the solution is an integrator that keeps the controller
consistent with this subspace.
"""

from __future__ import annotations

import logging

import numpy as np
from attrs import field, frozen

from ._equations import solve_edge_equations
from ._errors import RegulatorInfeasibleError, WellPosednessError
from ._graphs import SwitchingGraph
from ._systems import (
    Matrix,
    ModeRealization,
    PlantMode,
    SwitchedPlant,
    SwitchedSystem,
    star,
    star_controller,
)

__all__ = [
    "RegulatorSolution",
    "build_internal_model",
    "close_loop",
    "connect_plant_model",
    "regulation_theta",
    "solve_regulator",
    "verify_closed_loop_regulation",
]

log = logging.getLogger(__name__)

REGULATOR_TOL = 1e-8


def _frozen_tuple(mats: list[Matrix] | tuple[Matrix, ...]) -> tuple[Matrix, ...]:
    out = []
    for m in mats:
        arr = np.array(m, dtype=np.float64, ndmin=2)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


@frozen(eq=False)
class RegulatorSolution:
    Pi: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    Gamma: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    Phi: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    residual: float
    graph: SwitchingGraph

    @property
    def num_modes(self) -> int:
        return len(self.Pi)

    @property
    def d(self) -> int:
        return self.Pi[0].shape[1]


def solve_regulator(
    plant: SwitchedPlant, *, tol: float = REGULATOR_TOL
) -> RegulatorSolution:
    """Solve the regulator equations by minimum-norm least squares.

    Raises `RegulatorInfeasibleError` when the residual exceeds
    `tol * (1 + |data|)`.
    """
    n, d, n_u, _ = plant.dims
    shift = np.hstack([np.eye(n), np.zeros((n, n_u))])
    result = solve_edge_equations(
        plant.graph,
        [np.hstack([m.A, m.B2]) for m in plant.modes],
        shift,
        [np.hstack([m.C1, m.D12]) for m in plant.modes],
        -np.eye(d),
    )
    if not result.acceptable(tol):
        raise RegulatorInfeasibleError(
            f"the regulator equations have no solution (residual {result.residual:.3e})"
        )
    Pi = [u[:n] for u in result.unknowns]
    Gamma = [u[n:] for u in result.unknowns]
    Phi = [m.C2 @ p + m.D22 @ g for m, p, g in zip(plant.modes, Pi, Gamma, strict=True)]
    log.debug("regulator solved, residual %.3e", result.residual)
    return RegulatorSolution(Pi, Gamma, Phi, result.residual, plant.graph)


def build_internal_model(
    sol: RegulatorSolution, n_y: int | None = None
) -> SwitchedSystem:
    """Q_r with state ω, inputs (y, ũ1, ũ2) and outputs (u, ỹ).

        ω⁺ = ω + ũ1,   u = -Γ_r ω + ũ2,   ỹ = Φ_r ω + y.
    """
    d = sol.d
    n_u = sol.Gamma[0].shape[0]
    n_y = sol.Phi[0].shape[0] if n_y is None else n_y
    modes = []
    for Gamma, Phi in zip(sol.Gamma, sol.Phi, strict=True):
        modes.append(
            ModeRealization(
                np.eye(d),
                np.hstack([np.zeros((d, n_y)), np.eye(d), np.zeros((d, n_u))]),
                np.vstack([-Gamma, Phi]),
                np.block(
                    [
                        [np.zeros((n_u, n_y)), np.zeros((n_u, d)), np.eye(n_u)],
                        [np.eye(n_y), np.zeros((n_y, d)), np.zeros((n_y, n_u))],
                    ]
                ),
            )
        )
    return SwitchedSystem(modes, sol.graph)


def connect_plant_model(plant: SwitchedPlant, sol: RegulatorSolution) -> SwitchedPlant:
    """G_r = P_r ⋆ Q_r with state [x; ω], inputs (w, ũ1, ũ2), outputs (z, ỹ)."""
    _, d, n_u, n_y = plant.dims
    model = build_internal_model(sol, n_y)
    modes = []
    for r, (p_mode, q_mode) in enumerate(zip(plant.modes, model.modes, strict=True)):
        real = star(p_mode.realization, q_mode, n_y, n_u, mode=r)
        modes.append(PlantMode.from_realization(real, n_w=d, n_z=d))
    return SwitchedPlant(modes, plant.graph)


def close_loop(
    plant: SwitchedPlant, sol: RegulatorSolution, subcontroller: SwitchedSystem
) -> SwitchedSystem:
    """P_r ⋆ Q_r ⋆ R_r over w -> z, state [x; ω; ξ]."""
    return star_controller(connect_plant_model(plant, sol), subcontroller)


def regulation_theta(sol: RegulatorSolution, n_controller: int) -> list[Matrix]:
    """The witnesses Θ_r = [-Π_r; I; 0] of a loop closed through Q_r."""
    d = sol.d
    return [np.vstack([-Pi, np.eye(d), np.zeros((n_controller, d))]) for Pi in sol.Pi]


def verify_closed_loop_regulation(
    plant: SwitchedPlant,
    sol: RegulatorSolution,
    subcontroller: SwitchedSystem,
    *,
    tol: float = REGULATOR_TOL,
) -> bool:
    """Whether P ⋆ Q ⋆ R has no feedthrough and admits Θ_r = [-Π_r; I; 0]."""
    try:
        closed = close_loop(plant, sol, subcontroller)
    except WellPosednessError as exc:
        log.debug("closed loop is ill-posed: %s", exc)
        return False
    thetas = regulation_theta(sol, subcontroller.n)
    d = sol.d
    scale = 1.0 + max(np.linalg.norm(m.matrix) for m in closed.modes)
    for r, mode in enumerate(closed.modes):
        if np.linalg.norm(mode.D) > tol * scale:
            log.debug("closed loop has feedthrough in mode %d", r + 1)
            return False
        if np.linalg.norm(mode.C @ thetas[r] - np.eye(d)) > tol * scale:
            return False
    for r, rp in sol.graph.sorted_edges():
        if np.linalg.norm(closed.modes[r].A @ thetas[r] - thetas[rp]) > tol * scale:
            return False
    return True

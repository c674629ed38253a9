"""Synthesis of mode-scheduled subcontrollers.

The plant-model interconnection G_r = P_r ⋆ Q_r is loop transformed, ρ-weighted
and cascaded with Ψ(λ). For a subcontroller R_r of the same order ñ as this
cascade, the closed-loop dissipation inequalities become linear after the
change of variables

    𝒟 = D_c,   𝒞 = D_c C_2 𝒳 + C_c 𝒰,   ℬ = 𝒴 B_2 D_c + B_c,
    𝒜 = 𝒴(A + B_2 D_c C_2)𝒳 + 𝒴 B_2 C_c 𝒰 + B_c C_2 𝒳 + A_c 𝒰,

with the slack 𝒢 = [[𝒳, I], [𝒮, 𝒴]] and 𝒰 = 𝒮 - 𝒴𝒳.
The controller is recovered by inverting these relations.
"""

from __future__ import annotations

import logging
from typing import Any

import cvxpy as cp
import numpy as np
from attrs import evolve, field, frozen

from ._analysis import Diverged, bisect_search, feasible_at_rate
from ._config import BisectionConfig, LmiConfig
from ._errors import CertificationError, ReconstructionError, WellPosednessError
from ._graphs import require_valid
from ._lmi import LmiProblem, LmiSolution, LmiStatus, assemble_blocks
from ._regulation import (
    RegulatorSolution,
    build_internal_model,
    connect_plant_model,
    verify_closed_loop_regulation,
)
from ._systems import (
    Matrix,
    ModeRealization,
    PlantMode,
    SwitchedPlant,
    SwitchedSystem,
    star,
    star_controller,
)
from ._transforms import (
    FilterCoefficients,
    SectorSpec,
    check_admissible,
    zf_realization,
)

__all__ = [
    "SynthesisCheck",
    "SynthesisResult",
    "SynthesisVariables",
    "assemble_controller",
    "bisect_synthesis",
    "delta_plant",
    "reconstruct",
    "synth_cascade",
    "synth_feasible_at_rate",
    "synthesizable_below_one",
]

log = logging.getLogger(__name__)

_COND_LIMIT = 1e12
# 𝒰 closer than this to singular (relative) is rejected.
_SINGULAR_TOL = 1e-8
# Without a box the constant blocks let every variable grow with the margin.
VARIABLE_BOUND = 1e4
_RESOLVE_SHRINK = 100.0
CROSS_CHECK_SLACK = 1e-3


def _frozen_tuple(mats: Any) -> tuple[Matrix, ...]:
    out = []
    for m in mats:
        arr = np.array(m, dtype=np.float64, ndmin=2)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


def delta_plant(g: SwitchedPlant, sector: SectorSpec, rho: float) -> SwitchedPlant:
    """Substitute w = q + m z into G_r, output p = (L - m) z - q, weight by ρ.

    With Δ = (I - m D11)⁻¹ the blocks are

        A^Δ = (A + B1 mΔ C1)/ρ        B1^Δ = B1 Δ/ρ
        B2^Δ = (B2 + B1 mΔ D12)/ρ     C1^Δ = (L - m)Δ C1
        D11^Δ = (L - m)Δ D11 - I      D12^Δ = (L - m)Δ D12
        C2^Δ = C2 + D21 mΔ C1         D21^Δ = D21 Δ
        D22^Δ = D22 + D21 mΔ D12
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    m, L = sector.m, sector.L
    modes = []
    for r, mode in enumerate(g.modes):
        d = mode.n_z
        loop = np.eye(d) - m * mode.D11
        if np.linalg.cond(loop) > _COND_LIMIT:
            raise WellPosednessError("I - m D11 is singular", r)
        if np.linalg.cond(np.eye(d) + m * mode.D11) > _COND_LIMIT:
            log.warning(
                "I + m D11 is singular in mode %d while I - m D11 is not", r + 1
            )
        Delta = np.linalg.inv(loop)
        mDelta = m * Delta
        modes.append(
            PlantMode(
                A=(mode.A + mode.B1 @ mDelta @ mode.C1) / rho,
                B1=mode.B1 @ Delta / rho,
                B2=(mode.B2 + mode.B1 @ mDelta @ mode.D12) / rho,
                C1=(L - m) * Delta @ mode.C1,
                C2=mode.C2 + mode.D21 @ mDelta @ mode.C1,
                D11=(L - m) * Delta @ mode.D11 - np.eye(d),
                D12=(L - m) * Delta @ mode.D12,
                D21=mode.D21 @ Delta,
                D22=mode.D22 + mode.D21 @ mDelta @ mode.D12,
            )
        )
    return SwitchedPlant(modes, g.graph)


def synth_cascade(delta_sys: SwitchedPlant, lam: FilterCoefficients) -> SwitchedPlant:
    """Ψ(λ) after the uncertainty output, state [filter; plant]."""
    _, d, _, _ = delta_sys.dims
    fir = zf_realization(lam, d)
    n_f = fir.n
    modes = []
    for mode in delta_sys.modes:
        modes.append(
            PlantMode(
                A=np.block(
                    [
                        [fir.A, fir.B @ mode.C1],
                        [np.zeros((mode.n, n_f)), mode.A],
                    ]
                ),
                B1=np.vstack([fir.B @ mode.D11, mode.B1]),
                B2=np.vstack([fir.B @ mode.D12, mode.B2]),
                C1=np.hstack([fir.C, fir.D @ mode.C1]),
                C2=np.hstack([np.zeros((mode.n_y, n_f)), mode.C2]),
                D11=fir.D @ mode.D11,
                D12=fir.D @ mode.D12,
                D21=mode.D21,
                D22=mode.D22,
            )
        )
    return SwitchedPlant(modes, delta_sys.graph)


def _structured_modes(plant: SwitchedPlant) -> tuple[bool, ...]:
    """Modes in which the subcontroller may not feed ỹ through to ũ2."""
    return tuple(
        bool(np.any(m.D12 != 0.0) or np.any(m.D22 != 0.0)) for m in plant.modes
    )


@frozen(eq=False)
class SynthesisVariables:
    """Solved values of the transformed controller and storage variables."""

    A: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    B: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    C: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    D: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    M: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    X: Matrix
    Y: Matrix
    S: Matrix


@frozen(eq=False)
class SynthesisCheck:
    rho: float
    solution: LmiSolution
    cascade: SwitchedPlant | None = None
    structured: tuple[bool, ...] = ()
    variables: SynthesisVariables | None = None

    @property
    def feasible(self) -> bool:
        return self.solution.feasible


def synth_feasible_at_rate(
    plant: SwitchedPlant,
    sol: RegulatorSolution,
    sector: SectorSpec,
    rho: float,
    lam: FilterCoefficients,
    *,
    common_storage: bool = False,
    config: LmiConfig | None = None,
) -> SynthesisCheck:
    """Search for transformed controller variables certifying rate ρ.

    Every variable entry is boxed by `config.variable_bound`, which
    defaults to `VARIABLE_BOUND` here.
    """
    if not check_admissible(lam, rho):
        return SynthesisCheck(rho, LmiSolution(LmiStatus.INFEASIBLE))
    config = config or LmiConfig()
    if config.variable_bound is None:
        config = evolve(config, variable_bound=VARIABLE_BOUND)
    structured = _structured_modes(plant)
    weighted = delta_plant(connect_plant_model(plant, sol), sector, rho)
    cascade = synth_cascade(weighted, lam)
    n_t, d, n_uu, n_yy = cascade.dims
    graph = cascade.graph
    N = graph.num_modes
    eye = np.eye(n_t)

    problem = LmiProblem(name=f"synthesis(rho={rho:.6f})")
    if common_storage:
        X: Any = problem.symmetric("X", n_t)
        Y: Any = problem.symmetric("Y", n_t)
        S: Any = cp.Constant(eye)
        shared = assemble_blocks(
            {(0, 0): X, (1, 0): eye, (1, 1): Y}, [n_t, n_t], symmetric=True
        )
        Ms = [shared] * N
        problem.positive_definite("M", shared)
    else:
        X = problem.rectangular("X", n_t, n_t)
        Y = problem.rectangular("Y", n_t, n_t)
        S = problem.rectangular("S", n_t, n_t)
        Ms = [problem.symmetric(f"M{r + 1}", 2 * n_t) for r in range(N)]
        for r, M in enumerate(Ms):
            problem.positive_definite(f"M{r + 1}", M)
    slack = cp.bmat([[X, eye], [S, Y]])

    blocks = []
    for r in range(N):
        A_ = problem.rectangular(f"A{r + 1}", n_t, n_t)
        B_ = problem.rectangular(f"B{r + 1}", n_t, n_yy)
        C_ = problem.rectangular(f"C{r + 1}", n_uu, n_t)
        if structured[r]:
            D1 = problem.rectangular(f"D{r + 1}", d, n_yy)
            D_: Any = np.eye(n_uu)[:, :d] @ D1
        else:
            D_ = problem.rectangular(f"D{r + 1}", n_uu, n_yy)
        blocks.append((A_, B_, C_, D_))

    sizes = [2 * n_t, 2 * n_t, d]
    for r, rp in graph.sorted_edges():
        mode = cascade.modes[r]
        A, B1, B2, C1, C2 = mode.A, mode.B1, mode.B2, mode.C1, mode.C2
        A_, B_, C_, D_ = blocks[r]
        A_cl = cp.bmat(
            [
                [A @ X + B2 @ C_, A + B2 @ D_ @ C2],
                [A_, Y @ A + B_ @ C2],
            ]
        )
        B_cl = cp.vstack([B1 + B2 @ D_ @ mode.D21, Y @ B1 + B_ @ mode.D21])
        C_cl = cp.hstack([C1 @ X + mode.D12 @ C_, C1 + mode.D12 @ D_ @ C2])
        D_cl = mode.D11 + mode.D12 @ D_ @ mode.D21
        expr = assemble_blocks(
            {
                (0, 0): Ms[rp],
                (1, 0): A_cl.T,
                (1, 1): slack + slack.T - Ms[r],
                (2, 0): B_cl.T,
                (2, 1): -C_cl,
                (2, 2): -(D_cl + D_cl.T),
            },
            sizes,
            symmetric=True,
        )
        problem.positive_definite(f"edge {r + 1}->{rp + 1}", expr)

    solution = problem.solve(config)
    if not solution.feasible:
        return SynthesisCheck(rho, solution, cascade, structured)

    def dvalue(r: int) -> Matrix:
        if structured[r]:
            return np.vstack([solution[f"D{r + 1}"], np.zeros((n_uu - d, n_yy))])
        return solution[f"D{r + 1}"]

    if common_storage:
        Xv, Yv = solution["X"], solution["Y"]
        shared_value = np.block([[Xv, eye], [eye, Yv]])
        variables = SynthesisVariables(
            A=[solution[f"A{r + 1}"] for r in range(N)],
            B=[solution[f"B{r + 1}"] for r in range(N)],
            C=[solution[f"C{r + 1}"] for r in range(N)],
            D=[dvalue(r) for r in range(N)],
            M=[shared_value] * N,
            X=Xv,
            Y=Yv,
            S=eye,
        )
    else:
        variables = SynthesisVariables(
            A=[solution[f"A{r + 1}"] for r in range(N)],
            B=[solution[f"B{r + 1}"] for r in range(N)],
            C=[solution[f"C{r + 1}"] for r in range(N)],
            D=[dvalue(r) for r in range(N)],
            M=[solution[f"M{r + 1}"] for r in range(N)],
            X=solution["X"],
            Y=solution["Y"],
            S=solution["S"],
        )
    return SynthesisCheck(rho, solution, cascade, structured, variables)


def reconstruct(
    variables: SynthesisVariables,
    cascade: SwitchedPlant,
    rho: float,
    *,
    structured: tuple[bool, ...] | None = None,
) -> SwitchedSystem:
    """Recover the unweighted subcontroller R_r from solved variables.

    Uses 𝒱 = I and 𝒰 = 𝒮 - 𝒴𝒳, then re-inserts the D22 feedthrough that
    the inequalities were posed without and undoes the ρ-weighting.
    """
    X, Y = variables.X, variables.Y
    U = variables.S - Y @ X
    if U.size and np.linalg.cond(U) > 1.0 / _SINGULAR_TOL:
        raise ReconstructionError(
            f"S - YX is ill-conditioned (cond {np.linalg.cond(U):.2e});"
            " the recovered controller would not match the certificate"
        )
    U_inv = np.linalg.inv(U)
    if structured is None:
        structured = (False,) * cascade.num_modes
    _, d, _, _ = cascade.dims

    modes = []
    for r, mode in enumerate(cascade.modes):
        A, B2, C2, D22 = mode.A, mode.B2, mode.C2, mode.D22
        Dc0 = variables.D[r]
        Cc0 = (variables.C[r] - Dc0 @ C2 @ X) @ U_inv
        Bc0 = variables.B[r] - Y @ B2 @ Dc0
        known = Y @ (A @ X + B2 @ variables.C[r]) + Bc0 @ C2 @ X
        Ac0 = (variables.A[r] - known) @ U_inv

        loop = np.eye(Dc0.shape[0]) + Dc0 @ D22
        if np.linalg.cond(loop) > _COND_LIMIT:
            raise WellPosednessError("controller feedthrough loop is singular", r)
        E = np.linalg.inv(loop)
        Cc = E @ Cc0
        Dc = E @ Dc0
        Ac = Ac0 - Bc0 @ D22 @ Cc
        Bc = Bc0 @ (np.eye(D22.shape[0]) - D22 @ Dc)
        if structured[r]:
            Dc[d:] = 0.0
        modes.append(ModeRealization(rho * Ac, rho * Bc, Cc, Dc))
    return SwitchedSystem(modes, cascade.graph)


def assemble_controller(
    plant: SwitchedPlant, sol: RegulatorSolution, subcontroller: SwitchedSystem
) -> tuple[SwitchedSystem, SwitchedSystem]:
    """K_r = Q_r ⋆ R_r (y -> u, state [ω; ξ]) and the closed loop P_r ⋆ K_r."""
    _, d, n_u, n_y = plant.dims
    model = build_internal_model(sol, n_y)
    if subcontroller.num_modes not in (1, model.num_modes):
        raise ValueError("subcontroller and plant disagree on the number of modes")
    modes = []
    for r, q_mode in enumerate(model.modes):
        r_mode = subcontroller.modes[r if subcontroller.num_modes > 1 else 0]
        modes.append(star(q_mode, r_mode, n_y, d + n_u, mode=r))
    controller = SwitchedSystem(modes, plant.graph)
    return controller, star_controller(plant, controller)


@frozen(eq=False)
class SynthesisResult:
    subcontroller: SwitchedSystem
    controller: SwitchedSystem
    closed_loop: SwitchedSystem
    rho: float
    lam: FilterCoefficients
    margin: float
    storages: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    common_storage: bool = False
    regulated: bool = True
    certified: bool | None = None
    """Whether analysis re-certified the closed loop; None if not checked."""

    @property
    def order(self) -> int:
        return self.subcontroller.n


def _reconstruct_with_fallbacks(
    check: SynthesisCheck,
    resolve: Any,
    config: LmiConfig,
) -> tuple[SynthesisCheck, SwitchedSystem]:
    assert check.variables is not None and check.cascade is not None
    try:
        return check, reconstruct(
            check.variables, check.cascade, check.rho, structured=check.structured
        )
    except ReconstructionError as exc:
        log.warning("reconstruction at rho=%.6f failed: %s", check.rho, exc)
    bound = config.variable_bound or VARIABLE_BOUND
    tighter = evolve(config, margin_mode=True, variable_bound=bound / _RESOLVE_SHRINK)
    again: SynthesisCheck = resolve(check.rho, tighter)
    if not again.feasible:
        raise ReconstructionError(
            f"no well-conditioned solution at rho={check.rho:.6f}"
        )
    assert again.variables is not None and again.cascade is not None
    return again, reconstruct(
        again.variables, again.cascade, again.rho, structured=again.structured
    )


def bisect_synthesis(
    plant: SwitchedPlant,
    sol: RegulatorSolution,
    sector: SectorSpec,
    lam: FilterCoefficients | None = None,
    *,
    common_storage: bool = False,
    lmi: LmiConfig | None = None,
    bisection: BisectionConfig | None = None,
    cross_certify: bool = True,
) -> SynthesisResult | Diverged:
    """Synthesize the subcontroller with the smallest certifiable ρ."""
    require_valid(plant.graph)
    lam = lam or FilterCoefficients.identity()
    lmi = lmi or LmiConfig()

    def check(rho: float, config: LmiConfig) -> SynthesisCheck:
        return synth_feasible_at_rate(
            plant, sol, sector, rho, lam, common_storage=common_storage, config=config
        )

    best = bisect_search(check, lmi=lmi, bisection=bisection, what="synthesis")
    if isinstance(best, Diverged):
        return best
    best, subcontroller = _reconstruct_with_fallbacks(best, check, lmi)
    controller, closed = assemble_controller(plant, sol, subcontroller)

    regulated = verify_closed_loop_regulation(plant, sol, subcontroller)
    if not regulated:
        log.warning("synthesized closed loop fails the regulation check")
    certified = None
    if cross_certify:
        rho_check = min(best.rho + CROSS_CHECK_SLACK, 1.0)
        certified = (
            regulated
            and feasible_at_rate(
                closed,
                sector,
                rho_check,
                lam=lam,
                common_storage=common_storage,
                config=lmi,
            ).feasible
        )
        if not certified:
            raise CertificationError(
                f"analysis could not re-certify the controller at rho={rho_check:.6f}",
                best.rho,
            )
    assert best.variables is not None
    log.info("synthesized order-%d controller at rho=%.6f", subcontroller.n, best.rho)
    return SynthesisResult(
        subcontroller=subcontroller,
        controller=controller,
        closed_loop=closed,
        rho=best.rho,
        lam=lam,
        margin=best.solution.margin,
        storages=best.variables.M,
        common_storage=common_storage,
        regulated=regulated,
        certified=certified,
    )


def synthesizable_below_one(
    plant: SwitchedPlant,
    sol: RegulatorSolution,
    sector: SectorSpec,
    lam: FilterCoefficients | None = None,
    *,
    common_storage: bool = False,
    lmi: LmiConfig | None = None,
) -> bool:
    """Whether some subcontroller is certified at ρ = 1."""
    lmi = lmi or LmiConfig()
    lam = lam or FilterCoefficients.identity()
    result = synth_feasible_at_rate(
        plant, sol, sector, 1.0, lam, common_storage=common_storage, config=lmi
    )
    if result.feasible or result.solution.status is not LmiStatus.INFEASIBLE:
        return result.feasible
    relaxed = evolve(lmi, eps_min=lmi.eps_min / BisectionConfig().relax_factor)
    return synth_feasible_at_rate(
        plant, sol, sector, 1.0, lam, common_storage=common_storage, config=relaxed
    ).feasible

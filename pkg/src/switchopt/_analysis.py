"""Rate certification of switched algorithms.

A closed loop (Ã_r, B̃_r, C̃_r) driven by w = ∇f(z) is certified to converge
with rate ρ when, after loop transformation, ρ-weighting and filtering by
Ψ(λ), every edge (r, r') admits storages M_r ≻ 0 with

    [Â B̂]ᵀ M_r' [Â B̂] - diag(M_r, 0) + [[0, Ĉᵀ], [Ĉ, D̂ + D̂ᵀ]] ≺ 0.

The multiplier λ enters Ĉ and D̂ linearly, so (M, λ) are searched jointly.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Any, Protocol, TypeVar

import numpy as np
from attrs import evolve, field, frozen

from ._config import BisectionConfig, LmiConfig
from ._equations import solve_edge_equations
from ._errors import ModelError, RegulationError, SolverFailure
from ._graphs import require_valid
from ._lmi import LmiProblem, LmiSolution, LmiStatus, assemble_blocks
from ._systems import Matrix, SwitchedSystem
from ._transforms import (
    ADMISSIBILITY_MARGIN,
    FilterCoefficients,
    SectorSpec,
    check_admissible,
    filtered_loop_basis,
    rho_weight_and_loop,
)

__all__ = [
    "Diverged",
    "RateCertificate",
    "RateCheck",
    "RegulationWitness",
    "bisect_rate",
    "feasible_at_rate",
    "find_regulation_witness",
    "rate_below_one",
    "threshold_search",
]

log = logging.getLogger(__name__)

WITNESS_TOL = 1e-8


def _frozen_tuple(mats: Any) -> tuple[Matrix, ...]:
    out = []
    for m in mats:
        arr = np.array(m, dtype=np.float64, ndmin=2)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


@frozen(eq=False)
class RegulationWitness:
    theta: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    residual: float


@frozen(eq=False)
class RateCertificate:
    rho: float
    lam: FilterCoefficients
    storages: tuple[Matrix, ...] = field(converter=_frozen_tuple)
    witness: RegulationWitness | None
    margin: float
    common_storage: bool = False


@frozen
class Diverged:
    """A search that is infeasible already at ρ = 1."""

    message: str

    def __bool__(self) -> bool:
        return False


@frozen(eq=False)
class RateCheck:
    """The outcome of a single feasibility test at a fixed rate."""

    rho: float
    solution: LmiSolution
    storages: tuple[Matrix, ...] = ()
    lam: FilterCoefficients | None = None

    @property
    def feasible(self) -> bool:
        return self.solution.feasible


class _Check(Protocol):
    @property
    def rho(self) -> float: ...
    @property
    def solution(self) -> LmiSolution: ...
    @property
    def feasible(self) -> bool: ...


_C = TypeVar("_C", bound=_Check)


def find_regulation_witness(
    closed_loop: SwitchedSystem, *, tol: float = WITNESS_TOL
) -> RegulationWitness:
    """Solve Ã_r Θ_r = Θ_r' on edges and C̃_r Θ_r = I on modes."""
    graph = closed_loop.require_graph()
    for r, mode in enumerate(closed_loop.modes):
        if np.any(mode.D != 0.0):
            raise ModelError(f"closed loop has feedthrough in mode {r + 1}")
    d = closed_loop.n_y
    result = solve_edge_equations(
        graph,
        [m.A for m in closed_loop.modes],
        np.eye(closed_loop.n),
        [m.C for m in closed_loop.modes],
        np.eye(d),
    )
    if not result.acceptable(tol):
        raise RegulationError(
            f"no regulation witness exists (residual {result.residual:.3e})"
        )
    return RegulationWitness(result.unknowns, result.residual)


def _clip_tail(values: Matrix) -> FilterCoefficients:
    coeffs = np.array(values, dtype=np.float64).ravel()
    coeffs[1:] = np.minimum(coeffs[1:], 0.0)
    return FilterCoefficients(coeffs)


def feasible_at_rate(
    closed_loop: SwitchedSystem,
    sector: SectorSpec,
    rho: float,
    *,
    nu_max: int = 0,
    lam: FilterCoefficients | None = None,
    common_storage: bool = False,
    free_lambda0: bool = False,
    config: LmiConfig | None = None,
) -> RateCheck:
    """Test the per-edge dissipation inequalities at a fixed rate.

    With `lam` set the multiplier is fixed, otherwise coefficients of order
    `nu_max` are searched for together with the storages.
    """
    graph = closed_loop.require_graph()
    require_valid(graph)
    if lam is not None and not check_admissible(lam, rho):
        log.debug("multiplier %s is not admissible at rho=%.6f", lam.coefficients, rho)
        return RateCheck(rho, LmiSolution(LmiStatus.INFEASIBLE), lam=lam)
    order = lam.order if lam is not None else nu_max
    if order < 0:
        raise ValueError("nu_max must be >= 0")

    sys_hat = rho_weight_and_loop(closed_loop, sector, rho)
    parts = filtered_loop_basis(sys_hat, order)
    n_x = parts[0][0].shape[0]
    d = sys_hat.n_u
    if n_x == 0:
        raise ModelError("the filtered loop has no state to carry a storage")

    problem = LmiProblem(name=f"analysis(rho={rho:.6f})")
    coeffs: Any
    if lam is None:
        coeffs = problem.vector("lambda", order + 1)
        powers = float(rho) ** -np.arange(order + 1)
        if order:
            problem.constrain("tail", coeffs[1:] <= 0)
        problem.constrain("admissible", powers @ coeffs >= ADMISSIBILITY_MARGIN)
        if not free_lambda0:
            problem.constrain("normalized", coeffs[0] == 1)
    else:
        coeffs = lam.as_array()

    if common_storage:
        shared = problem.symmetric("M", n_x)
        storages = [shared] * graph.num_modes
        problem.positive_definite("M", shared)
    else:
        storages = [problem.symmetric(f"M{r + 1}", n_x) for r in range(graph.num_modes)]
        for r, M in enumerate(storages):
            problem.positive_definite(f"M{r + 1}", M)

    sizes = [n_x, d]
    for r, rp in graph.sorted_edges():
        A, B, Cs, Ds = parts[r]
        C = sum(coeffs[i] * Cs[i] for i in range(order + 1))
        D = sum(coeffs[i] * Ds[i] for i in range(order + 1))
        AB = np.hstack([A, B])
        expr = (
            AB.T @ storages[rp] @ AB
            - assemble_blocks({(0, 0): storages[r]}, sizes, symmetric=True)
            + assemble_blocks({(1, 0): C, (1, 1): D + D.T}, sizes, symmetric=True)
        )
        problem.negative_definite(f"edge {r + 1}->{rp + 1}", expr)

    solution = problem.solve(config)
    if not solution.feasible:
        return RateCheck(rho, solution, lam=lam)
    if common_storage:
        found = (solution["M"],) * graph.num_modes
    else:
        found = tuple(solution[f"M{r + 1}"] for r in range(graph.num_modes))
    found_lam = lam if lam is not None else _clip_tail(solution["lambda"])
    return RateCheck(rho, solution, found, found_lam)


def _confirmed(
    check: Callable[[float, LmiConfig], _C],
    rho: float,
    config: LmiConfig,
    bisection: BisectionConfig,
    tally: list[int],
) -> _C:
    """Run a check, re-testing an infeasible answer with a relaxed margin."""
    tally[0] += 1
    result = check(rho, config)
    if result.feasible:
        return result
    if result.solution.status is LmiStatus.NUMERICAL_FAILURE:
        tally[1] += 1
        log.warning("numerical failure at rho=%.6f, treated as infeasible", rho)
        return result
    if result.solution.solver is None:
        # rejected before solving
        return result
    relaxed_config = evolve(config, eps_min=config.eps_min / bisection.relax_factor)
    relaxed = check(rho, relaxed_config)
    if relaxed.feasible:
        log.warning("infeasibility at rho=%.6f reversed by the relaxed solve", rho)
        return relaxed
    return result


def bisect_search(
    check: Callable[[float, LmiConfig], _C],
    *,
    lmi: LmiConfig | None = None,
    bisection: BisectionConfig | None = None,
    what: str = "rate",
) -> _C | Diverged:
    """Smallest feasible ρ of a monotone family of feasibility checks."""
    lmi = lmi or LmiConfig()
    bisection = bisection or BisectionConfig()
    tally = [0, 0]
    hi = bisection.rho_max
    best = _confirmed(check, hi, lmi, bisection, tally)
    if not best.feasible:
        if tally[0] == tally[1]:
            raise SolverFailure(f"{what} search: every solve failed numerically")
        return Diverged(f"{what} search is infeasible at rho={hi}")
    lo = bisection.rho_min
    for _ in range(bisection.max_iterations):
        if hi - lo <= bisection.rho_tol:
            break
        mid = (lo + hi) / 2
        result = _confirmed(check, mid, lmi, bisection, tally)
        if result.feasible:
            hi, best = mid, result
        else:
            lo = mid
        log.info("%s bisection: [%.6f, %.6f]", what, lo, hi)
    return best


def bisect_rate(
    closed_loop: SwitchedSystem,
    sector: SectorSpec,
    *,
    nu_max: int = 0,
    lam: FilterCoefficients | None = None,
    common_storage: bool = False,
    free_lambda0: bool = False,
    lmi: LmiConfig | None = None,
    bisection: BisectionConfig | None = None,
) -> RateCertificate | Diverged:
    """Bisect on ρ for the smallest certifiable rate.

    Raises `GraphError` for an invalid switching graph, then
    `RegulationError` when the loop has no regulation witness.
    """
    require_valid(closed_loop.require_graph())
    witness = find_regulation_witness(closed_loop)

    def check(rho: float, config: LmiConfig) -> RateCheck:
        return feasible_at_rate(
            closed_loop,
            sector,
            rho,
            nu_max=nu_max,
            lam=lam,
            common_storage=common_storage,
            free_lambda0=free_lambda0,
            config=config,
        )

    best = bisect_search(check, lmi=lmi, bisection=bisection, what="analysis")
    if isinstance(best, Diverged):
        return best
    assert best.lam is not None
    return RateCertificate(
        rho=best.rho,
        lam=best.lam,
        storages=best.storages,
        witness=witness,
        margin=best.solution.margin,
        common_storage=common_storage,
    )


def rate_below_one(
    closed_loop: SwitchedSystem,
    sector: SectorSpec,
    *,
    nu_max: int = 0,
    lam: FilterCoefficients | None = None,
    common_storage: bool = False,
    lmi: LmiConfig | None = None,
) -> bool:
    """Whether the loop is certified at ρ = 1."""
    lmi = lmi or LmiConfig()

    def check(rho: float, config: LmiConfig) -> RateCheck:
        return feasible_at_rate(
            closed_loop,
            sector,
            rho,
            nu_max=nu_max,
            lam=lam,
            common_storage=common_storage,
            config=config,
        )

    return _confirmed(check, 1.0, lmi, BisectionConfig(), [0, 0]).feasible


def threshold_search(
    predicate: Callable[[float], bool],
    L_lo: float,
    L_hi: float,
    *,
    tol: float = 0.01,
) -> float | None:
    """Binary search for the largest L at which `predicate` still holds.

    Returns None when the predicate holds on the whole range.
    """
    if not L_lo < L_hi:
        raise ValueError("need L_lo < L_hi")
    if not predicate(L_lo):
        raise ValueError(f"predicate fails already at L={L_lo}")
    if predicate(L_hi):
        return None
    lo, hi = L_lo, L_hi
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if predicate(mid):
            lo = mid
        else:
            hi = mid
        log.info("threshold search: [%.4f, %.4f]", lo, hi)
    return (lo + hi) / 2

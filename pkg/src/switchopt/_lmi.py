"""Linear matrix inequalities on top of cvxpy.

Strict inequalities X ≺ 0 are encoded as X ⪯ -t·I. In margin mode `t` is
maximized up to `t_max` and must reach `eps_min` times the largest variable
entry, otherwise it is pinned to `eps_min`. A solve only counts as feasible
once every strict constraint has been re-checked with dense eigenvalues.
"""

from __future__ import annotations

import enum
import logging
import time
from collections.abc import Mapping, Sequence
from typing import Any

import cvxpy as cp
import numpy as np
from attrs import define, field, frozen

from ._config import LmiConfig
from ._errors import SolverFailure
from ._systems import Matrix

__all__ = [
    "LmiProblem",
    "LmiSolution",
    "LmiStatus",
    "VerifyReport",
    "assemble_blocks",
    "verify",
]

log = logging.getLogger(__name__)

_SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


class LmiStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


@frozen
class _Strict:
    label: str
    expr: Any
    sign: int
    """-1 for ≺ 0, +1 for ≻ 0."""


@frozen
class VerifyReport:
    passed: bool
    margins: dict[str, float]
    """Per constraint, the distance of its extreme eigenvalue from zero
    (positive when the constraint holds)."""
    worst: float


@frozen
class LmiSolution:
    status: LmiStatus
    values: dict[str, Matrix] = field(factory=dict)
    margin: float = float("nan")
    solver: str | None = None
    diagnostics: dict[str, Any] = field(factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is LmiStatus.FEASIBLE

    def __getitem__(self, name: str) -> Matrix:
        return self.values[name]


def _to_expr(value: Any) -> Any:
    return value if isinstance(value, cp.Expression) else cp.Constant(np.asarray(value))


def assemble_blocks(
    blocks: Mapping[tuple[int, int], Any], sizes: Sequence[int], *, symmetric: bool
) -> Any:
    """Place blocks into a square matrix with the given block sizes.

    With `symmetric`, only the lower triangle and diagonal are read and
    mirrored. Blocks of size zero are skipped, so empty partitions are
    allowed.
    """
    total = int(sum(sizes))
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    embed = [np.eye(total)[:, offsets[i] : offsets[i + 1]] for i in range(len(sizes))]
    expr: Any = cp.Constant(np.zeros((total, total)))
    for (i, j), block in blocks.items():
        if symmetric and j > i:
            raise ValueError(f"block ({i}, {j}) lies above the diagonal")
        if sizes[i] == 0 or sizes[j] == 0:
            continue
        term = embed[i] @ _to_expr(block) @ embed[j].T
        expr = expr + term
        if symmetric and i != j:
            expr = expr + term.T
    return expr


@define
class LmiProblem:
    """Decision variables plus strict matrix inequalities and linear constraints."""

    name: str = "lmi"
    _variables: dict[str, cp.Variable] = field(factory=dict, init=False)
    _strict: list[_Strict] = field(factory=list, init=False)
    _linear: list[tuple[str, Any]] = field(factory=list, init=False)
    _objective: Any = field(default=None, init=False)

    def _register(self, name: str, var: cp.Variable) -> cp.Variable:
        if name in self._variables:
            raise ValueError(f"variable {name!r} already declared")
        self._variables[name] = var
        return var

    def symmetric(self, name: str, k: int) -> cp.Variable:
        return self._register(name, cp.Variable((k, k), symmetric=True, name=name))

    def rectangular(self, name: str, p: int, q: int) -> cp.Variable:
        return self._register(name, cp.Variable((p, q), name=name))

    def vector(self, name: str, k: int) -> cp.Variable:
        return self._register(name, cp.Variable(k, name=name))

    @property
    def variables(self) -> dict[str, cp.Variable]:
        return dict(self._variables)

    def negative_definite(self, label: str, expr: Any) -> None:
        self._add_strict(label, expr, -1)

    def positive_definite(self, label: str, expr: Any) -> None:
        self._add_strict(label, expr, 1)

    def _add_strict(self, label: str, expr: Any, sign: int) -> None:
        expr = _to_expr(expr)
        if len(expr.shape) != 2 or expr.shape[0] != expr.shape[1]:
            raise ValueError(f"constraint {label!r} is not square: {expr.shape}")
        self._strict.append(_Strict(label, (expr + expr.T) / 2, sign))

    def constrain(self, label: str, constraint: Any) -> None:
        """Add a linear (in)equality such as `x[0] == 1`."""
        self._linear.append((label, constraint))

    def minimize(self, expr: Any) -> None:
        """Minimize a linear objective instead of maximizing the margin."""
        self._objective = expr

    @property
    def num_constraints(self) -> int:
        return len(self._strict)

    def size(self) -> int:
        """Total row count of the matrix inequalities."""
        return sum(c.expr.shape[0] for c in self._strict)

    def solve(self, config: LmiConfig | None = None) -> LmiSolution:
        config = config or LmiConfig()
        if not self._strict:
            raise ValueError("the problem has no matrix inequalities")
        margin_var = cp.Variable(name="t") if config.margin_mode else None
        t: Any = margin_var if margin_var is not None else config.eps_min

        constraints = [con for _, con in self._linear]
        if config.variable_bound is not None:
            constraints.extend(
                cp.abs(var) <= config.variable_bound
                for var in self._variables.values()
            )
        for c in self._strict:
            eye = np.eye(c.expr.shape[0])
            if c.sign < 0:
                constraints.append(c.expr << -t * eye)
            else:
                constraints.append(c.expr >> t * eye)
        if margin_var is not None:
            constraints.append(margin_var <= config.t_max)
            if self._objective is None:
                objective = cp.Maximize(margin_var)
            else:
                constraints.append(margin_var >= config.eps_min)
                objective = cp.Minimize(self._objective)
        else:
            objective = cp.Minimize(
                self._objective if self._objective is not None else 0
            )
        problem = cp.Problem(objective, constraints)

        started = time.perf_counter()
        solver, status = self._run(problem, config)
        elapsed = time.perf_counter() - started
        diagnostics: dict[str, Any] = {"cvxpy_status": status, "seconds": elapsed}
        log.debug(
            "%s: %d LMIs (%d rows), %s -> %s in %.3fs",
            self.name,
            len(self._strict),
            self.size(),
            solver,
            status,
            elapsed,
        )

        if status in _INFEASIBLE:
            return LmiSolution(
                LmiStatus.INFEASIBLE, solver=solver, diagnostics=diagnostics
            )
        if status not in _SOLVED:
            return LmiSolution(
                LmiStatus.NUMERICAL_FAILURE, solver=solver, diagnostics=diagnostics
            )

        values = {
            name: np.array(var.value, dtype=np.float64)
            for name, var in self._variables.items()
        }
        margin = float(margin_var.value) if margin_var is not None else config.eps_min
        required = config.eps_min
        if margin_var is not None and self._objective is None:
            # a margin that vanishes next to the variables is no margin
            required *= max(1.0, _largest_entry(values))
        if margin < required:
            diagnostics["margin"] = margin
            diagnostics["required_margin"] = required
            return LmiSolution(
                LmiStatus.INFEASIBLE, values, margin, solver, diagnostics
            )

        report = verify(values, self, config.verify_tol, margin=margin)
        diagnostics["verify"] = report
        if not report.passed:
            log.debug(
                "%s: verification failed, worst margin %.3e", self.name, report.worst
            )
            return LmiSolution(
                LmiStatus.NUMERICAL_FAILURE, values, margin, solver, diagnostics
            )
        return LmiSolution(LmiStatus.FEASIBLE, values, margin, solver, diagnostics)

    def _run(self, problem: cp.Problem, config: LmiConfig) -> tuple[str, str]:
        candidates = [config.solver]
        if config.fallback_solver and config.fallback_solver != config.solver:
            candidates.append(config.fallback_solver)
        status = "solver_error"
        for solver in candidates:
            try:
                problem.solve(solver=solver, **_solver_options(solver, config))
            except cp.SolverError as exc:
                log.warning("%s: solver %s failed: %s", self.name, solver, exc)
                continue
            status = problem.status
            if status in _SOLVED or status in _INFEASIBLE:
                return solver, status
            log.warning("%s: solver %s returned %s", self.name, solver, status)
        if status == "solver_error":
            raise SolverFailure(f"{self.name}: no backend among {candidates} could run")
        return candidates[-1], status

    def evaluate(self, values: Mapping[str, Matrix]) -> list[tuple[str, int, Matrix]]:
        """Every strict constraint evaluated at `values` as (label, sign, matrix)."""
        saved = {name: var.value for name, var in self._variables.items()}
        try:
            for name, var in self._variables.items():
                var.value = np.asarray(values[name]).reshape(var.shape)
            return [
                (c.label, c.sign, np.array(c.expr.value, dtype=np.float64))
                for c in self._strict
            ]
        finally:
            for name, var in self._variables.items():
                if saved[name] is not None:
                    var.value = saved[name]

    def dump(self, values: Mapping[str, Matrix] | None = None) -> str:
        """A plain-text listing of the assembled problem."""
        lines = [f"# {self.name}"]
        for name, var in self._variables.items():
            lines.append(f"variable {name} {var.shape}")
        for label, con in self._linear:
            lines.append(f"linear {label}: {con}")
        evaluated = self.evaluate(values) if values is not None else None
        for k, c in enumerate(self._strict):
            sense = "< 0" if c.sign < 0 else "> 0"
            lines.append(f"lmi {c.label} {c.expr.shape} {sense}")
            if evaluated is not None:
                lines.append(
                    np.array2string(evaluated[k][2], precision=6, suppress_small=True)
                )
        return "\n".join(lines)


def _largest_entry(values: Mapping[str, Matrix]) -> float:
    entries = [float(np.max(np.abs(v))) for v in values.values() if v.size]
    return max(entries, default=0.0)


def _solver_options(solver: str, config: LmiConfig) -> dict[str, Any]:
    if solver == cp.CLARABEL:
        return {"max_iter": config.max_iters}
    if solver == cp.SCS:
        return {"max_iters": config.max_iters, "eps_abs": 1e-8, "eps_rel": 1e-8}
    return {}


def verify(
    values: Mapping[str, Matrix] | LmiSolution,
    problem: LmiProblem,
    tol: float = 1e-7,
    *,
    margin: float | None = None,
) -> VerifyReport:
    """Re-check every strict constraint with `numpy.linalg.eigvalsh`.

    A constraint passes when its extreme eigenvalue clears `margin` up to
    `tol` relative to the matrix norm. Without `margin`, plain definiteness
    is checked.
    """
    if isinstance(values, LmiSolution):
        if margin is None and values.status is LmiStatus.FEASIBLE:
            margin = values.margin
        values = values.values
    required = 0.0 if margin is None else margin
    margins: dict[str, float] = {}
    passed = True
    for label, sign, mat in problem.evaluate(values):
        sym = (mat + mat.T) / 2
        eigs = np.linalg.eigvalsh(sym) if sym.size else np.zeros(1)
        extreme = -eigs[-1] if sign < 0 else eigs[0]
        margins[label] = float(extreme)
        scale = max(1.0, float(np.linalg.norm(sym, 2)) if sym.size else 1.0)
        if extreme < required - tol * scale or extreme <= 0.0:
            passed = False
    worst = min(margins.values(), default=float("inf"))
    return VerifyReport(passed, margins, worst)

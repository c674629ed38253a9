"""Deploying algorithms on test functions and measuring their rates."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
import scipy.optimize
from attrs import field, frozen
from numpy.typing import ArrayLike
from scipy.special import logsumexp, softmax

from ._errors import GraphError, ModelError
from ._gather import run_sweep
from ._graphs import SwitchingGraph, SwitchingPath
from ._systems import Matrix, ModeRealization, SwitchedSystem
from ._transforms import SectorSpec

__all__ = [
    "MonteCarloSummary",
    "SimulationTrace",
    "TestFunction",
    "baseline_gd",
    "baseline_tm",
    "deploy",
    "empirical_prefactor",
    "empirical_rate",
    "make_function",
    "minimize_oracle",
    "monte_carlo",
    "random_path",
]

log = logging.getLogger(__name__)

DISTANCE_FLOOR = 1e-13
# round-off level of a distance, relative to the size of z*
RELATIVE_FLOOR = 1e3 * float(np.finfo(np.float64).eps)
BLOW_UP = 1e12
# Newton steps with a smaller decrement are taken in full
_FULL_STEP_DECREMENT = 1e-10


def _readonly(value: ArrayLike) -> Matrix:
    arr = np.array(value, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class TestFunction:
    """f(z) = ½ zᵀΛz + bᵀz + (L - L')·logsumexp([z; -z]).

    Λ has spectrum in [m, L'] so the Hessian of f lies between m·I and L·I.
    """

    __test__ = False

    Lambda: Matrix = field(converter=_readonly)
    b: Matrix = field(converter=_readonly)
    sector: SectorSpec
    L_prime: float

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def _weight(self) -> float:
        return self.sector.L - self.L_prime

    def value(self, z: ArrayLike) -> float:
        z = np.asarray(z, dtype=np.float64)
        smooth = float(logsumexp(np.concatenate([z, -z])))
        return float(0.5 * z @ self.Lambda @ z + self.b @ z + self._weight * smooth)

    def gradient(self, z: ArrayLike) -> Matrix:
        z = np.asarray(z, dtype=np.float64)
        p = softmax(np.concatenate([z, -z]))
        d = self.d
        return self.Lambda @ z + self.b + self._weight * (p[:d] - p[d:])

    def hessian(self, z: ArrayLike) -> Matrix:
        z = np.asarray(z, dtype=np.float64)
        p = softmax(np.concatenate([z, -z]))
        lift = np.vstack([np.eye(self.d), -np.eye(self.d)])
        curvature = lift.T @ (np.diag(p) - np.outer(p, p)) @ lift
        return self.Lambda + self._weight * curvature


def make_function(
    sector: SectorSpec,
    L_prime: float | None = None,
    d: int = 10,
    seed: int | np.random.Generator | None = None,
) -> TestFunction:
    """Draw a random test function in the class S(m, L).

    `L_prime` bounds the spectrum of the quadratic part and defaults to the
    midpoint of [m, L].
    """
    m, L = sector.m, sector.L
    if L_prime is None:
        L_prime = (m + L) / 2
    if not m < L_prime <= L:
        raise ValueError(f"L' must lie in ({m}, {L}], got {L_prime}")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    spectrum = rng.uniform(m, L_prime, size=d)
    Lambda = q @ np.diag(spectrum) @ q.T
    Lambda = (Lambda + Lambda.T) / 2
    return TestFunction(Lambda, rng.standard_normal(d), sector, L_prime)


def minimize_oracle(
    f: TestFunction, *, tol: float = 1e-12, max_iter: int = 100
) -> Matrix:
    """The minimizer of `f` by damped Newton steps.

    `tol` bounds the gradient norm relative to 1 + ‖b‖.
    """
    z = np.linalg.solve(f.Lambda, -f.b)
    target = tol * (1.0 + float(np.linalg.norm(f.b)))
    for _ in range(max_iter):
        g = f.gradient(z)
        if np.linalg.norm(g) <= target:
            return z
        step = np.linalg.solve(f.hessian(z), g)
        slope = float(g @ step)
        t = 1.0
        # close to z* the values differ only by rounding, so no line search
        if slope > _FULL_STEP_DECREMENT:
            value = f.value(z)
            while f.value(z - t * step) > value - 1e-4 * t * slope and t > 1e-10:
                t /= 2
            if t <= 1e-10:
                t = 1.0
        z = z - t * step
    log.warning("Newton stopped at |grad| = %.3e", np.linalg.norm(f.gradient(z)))
    return z


@frozen(eq=False)
class SimulationTrace:
    """One run of an algorithm; row k holds the k-th iterate."""

    modes: Matrix = field(converter=_readonly)
    iterates: Matrix = field(converter=_readonly)
    gradients: Matrix = field(converter=_readonly)
    distances: Matrix = field(converter=_readonly)
    z_star: Matrix = field(converter=_readonly)
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.distances)


def _implicit_query(mode: ModeRealization, zeta: Matrix, f: TestFunction) -> Matrix:
    base = mode.C @ zeta

    def residual(z: Matrix) -> Matrix:
        return z - base - mode.D @ f.gradient(z)

    result = scipy.optimize.root(residual, base)
    if not result.success:
        raise ModelError(f"the implicit query step did not converge: {result.message}")
    return result.x


def deploy(
    closed_loop: SwitchedSystem,
    f: TestFunction,
    path: SwitchingPath,
    zeta0: ArrayLike | None = None,
    steps: int | None = None,
    *,
    z_star: ArrayLike | None = None,
) -> SimulationTrace:
    """Run ζ⁺ = Ã_s ζ + B̃_s ∇f(z), z = C̃_s ζ + D̃_s ∇f(z) along `path`.

    A loop built for scalar channels is lifted to the width of `f`.
    """
    if closed_loop.n_u == 1 and f.d > 1:
        closed_loop = closed_loop.kron(f.d)
    if closed_loop.n_u != f.d or closed_loop.n_y != f.d:
        raise ModelError(
            f"closed loop has channel widths ({closed_loop.n_u}, {closed_loop.n_y}),"
            f" the function has d={f.d}"
        )
    graph = closed_loop.graph
    if graph is not None and (graph.num_modes, graph.edges) != (
        path.graph.num_modes,
        path.graph.edges,
    ):
        raise ModelError("the path follows a different switching graph than the loop")
    if path.graph.num_modes > closed_loop.num_modes:
        raise ModelError(
            f"the path uses {path.graph.num_modes} modes,"
            f" the loop has {closed_loop.num_modes}"
        )
    steps = len(path) if steps is None else steps
    if steps > len(path):
        raise ValueError("the path is shorter than the requested number of steps")
    if z_star is None:
        z_star = minimize_oracle(f)
    z_star = np.asarray(z_star, dtype=np.float64)
    zeta = (
        np.zeros(closed_loop.n)
        if zeta0 is None
        else np.asarray(zeta0, dtype=np.float64).reshape(closed_loop.n)
    )

    iterates, gradients, distances = [], [], []
    diverged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for mode_index in path.modes[:steps]:
            mode = closed_loop.modes[mode_index]
            if np.any(mode.D != 0.0):
                z = _implicit_query(mode, zeta, f)
            else:
                z = mode.C @ zeta
            w = f.gradient(z)
            distance = float(np.linalg.norm(z - z_star))
            iterates.append(z)
            gradients.append(w)
            distances.append(distance)
            if not np.isfinite(distance) or distance > BLOW_UP:
                diverged = True
                break
            zeta = mode.A @ zeta + mode.B @ w

    if diverged:
        log.info("run diverged after %d steps", len(distances))
    k = len(distances)
    return SimulationTrace(
        modes=np.array(path.modes[:k], dtype=np.int64),
        iterates=np.array(iterates).reshape(k, f.d),
        gradients=np.array(gradients).reshape(k, f.d),
        distances=np.array(distances),
        z_star=z_star,
        diverged=diverged,
    )


def empirical_rate(
    trace: SimulationTrace, *, burn_in: float = 0.3, floor: float = DISTANCE_FLOOR
) -> float:
    """Fit log‖z_k - z*‖ by a line and return exp(slope).

    The fit ends where the distance first reaches the round-off level, the
    larger of `floor` and `RELATIVE_FLOOR` times the size of the problem,
    and skips the first `burn_in` fraction of what remains. A run that
    leaves fewer than two points reports 0; a diverged run reports inf.
    """
    if trace.diverged:
        return float("inf")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must lie in [0, 1)")
    distances = trace.distances
    if not len(distances):
        return 0.0
    scale = max(float(distances[0]), float(np.linalg.norm(trace.z_star)))
    cutoff = max(floor, RELATIVE_FLOOR * scale)
    below = np.flatnonzero(distances <= cutoff)
    end = int(below[0]) if below.size else len(distances)
    start = int(burn_in * end)
    if end - start < 2:
        return 0.0
    k = np.arange(start, end)
    slope, _ = np.polyfit(k, np.log(distances[start:end]), 1)
    return float(np.exp(slope))


def empirical_prefactor(trace: SimulationTrace, rho: float) -> float:
    """max_k ‖z_k - z*‖ / ρᵏ, the constant c in ‖z_k - z*‖ ≤ c ρᵏ."""
    k = np.arange(len(trace.distances))
    with np.errstate(over="ignore"):
        return float(np.max(trace.distances / float(rho) ** k))


def _single_mode(mode: ModeRealization) -> SwitchedSystem:
    return SwitchedSystem([mode], SwitchingGraph(1, [(0, 0)]))


def baseline_gd(sector: SectorSpec) -> SwitchedSystem:
    """Gradient descent with step 2/(m + L) as a controller y -> u."""
    alpha = 2.0 / (sector.m + sector.L)
    return _single_mode(ModeRealization([[1.0]], [[-alpha]], [[1.0]], [[0.0]]))


def baseline_tm(sector: SectorSpec) -> SwitchedSystem:
    """The triple momentum method as a controller y -> u.

    The state is (ξ_k, ξ_k - ξ_{k-1}).
    """
    rho = 1.0 - np.sqrt(sector.m / sector.L)
    alpha = (1.0 + rho) / sector.L
    beta = rho**2 / (2.0 - rho)
    gamma = rho**2 / ((1.0 + rho) * (2.0 - rho))
    return _single_mode(
        ModeRealization(
            [[1.0, beta], [0.0, beta]],
            [[-alpha], [-alpha]],
            [[1.0, gamma]],
            [[0.0]],
        )
    )


def random_path(
    graph: SwitchingGraph,
    steps: int,
    seed: int | np.random.Generator | None = None,
    *,
    start: int | None = None,
) -> SwitchingPath:
    """A uniformly random walk on `graph`."""
    rng = np.random.default_rng(seed)
    mode = int(rng.integers(graph.num_modes)) if start is None else start
    modes = [mode]
    while len(modes) < steps:
        successors = graph.successors(mode)
        if not successors:
            raise GraphError(f"the walk stalled in mode {mode + 1}", (mode,))
        mode = successors[int(rng.integers(len(successors)))]
        modes.append(mode)
    return SwitchingPath(modes[:steps], graph)


@frozen(eq=False)
class MonteCarloSummary:
    traces: tuple[SimulationTrace, ...] = field(converter=tuple)
    rates: tuple[float, ...] = field(converter=tuple)
    certified_rho: float | None = None

    @property
    def max_rate(self) -> float:
        return max(self.rates)

    @property
    def max_final_distance(self) -> float:
        return max(float(t.distances[-1]) for t in self.traces)

    @property
    def max_prefactor(self) -> float | None:
        if self.certified_rho is None:
            return None
        return max(empirical_prefactor(t, self.certified_rho) for t in self.traces)


def monte_carlo(
    closed_loop: SwitchedSystem,
    sector: SectorSpec,
    *,
    L_prime: float | None = None,
    d: int = 10,
    paths: int = 100,
    steps: int = 500,
    seed: int | None = 0,
    jobs: int | None = None,
    certified_rho: float | None = None,
    burn_in: float = 0.3,
) -> MonteCarloSummary:
    """Deploy on `paths` random functions, switching signals and initial states."""
    graph = closed_loop.require_graph()
    seeds: Sequence[np.random.SeedSequence] = np.random.SeedSequence(seed).spawn(paths)

    def one_run(seq: np.random.SeedSequence) -> SimulationTrace:
        rng = np.random.default_rng(seq)
        f = make_function(sector, L_prime, d, rng)
        path = random_path(graph, steps, rng)
        n = closed_loop.n * (d if closed_loop.n_u == 1 else 1)
        return deploy(closed_loop, f, path, rng.standard_normal(n))

    traces = run_sweep(seeds, one_run, jobs=jobs)
    rates = [
        empirical_rate(t, burn_in=burn_in)  # type: ignore[arg-type]
        for t in traces
    ]
    log.info("monte carlo over %d runs: max rate %.6f", paths, max(rates))
    return MonteCarloSummary(traces, rates, certified_rho)

"""The `switchopt` command line."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from attrs import field, frozen
from attrs.validators import ge, in_, optional

from ._alternation import run_alternation
from ._analysis import Diverged, RateCertificate, bisect_rate, find_regulation_witness
from ._config import BisectionConfig, LmiConfig
from ._errors import CertificationError, DivergedError, ModelError, SwitchoptError
from ._graphs import validate_graph
from ._gather import run_sweep
from ._io import (
    builtin_graph,
    builtin_plant,
    dump_certificate,
    dump_regulator,
    dump_synthesis,
    load_controller,
    load_synthesis,
    load_system,
    resolve_graph,
    resolve_plant,
    write_simulation_csv,
    write_trace_jsonl,
)
from ._regulation import solve_regulator
from ._simulate import baseline_gd, baseline_tm, monte_carlo
from ._synthesis import SynthesisResult, bisect_synthesis
from ._systems import SwitchedPlant, SwitchedSystem, star_controller
from ._transforms import FilterCoefficients, SectorSpec

__all__ = ["RunConfig", "main"]

log = logging.getLogger(__name__)

_DEFAULT_OUT = {
    "analyze": "certificate.json",
    "synthesize": "controller.json",
    "alternate": "alternation.json",
}
_BASELINES = {"gd": baseline_gd, "tm": baseline_tm}


def _floats(value: Sequence[float] | None) -> tuple[float, ...] | None:
    return None if value is None else tuple(float(v) for v in value)


def _names_a_file(spec: str) -> bool:
    """Bundled names carry neither a suffix nor a directory."""
    path = Path(spec)
    return bool(path.suffix) or len(path.parts) > 1


@frozen
class RunConfig:
    """Validated settings of one CLI invocation."""

    command: str
    model: str | None = None
    graph: str | None = None
    controller: str | None = None
    baseline: str | None = field(default=None, validator=optional(in_(_BASELINES)))
    m: float = 1.0
    L: tuple[float, ...] = field(default=(10.0,), converter=tuple)
    L_prime: float | None = None
    order: int | None = field(default=None, validator=optional(ge(0)))
    lam: tuple[float, ...] | None = field(default=None, converter=_floats)
    iters: int = field(default=3, validator=ge(1))
    common_storage: bool = False
    seed: int = 0
    paths: int = field(default=100, validator=ge(1))
    steps: int = field(default=500, validator=ge(1))
    dim: int = field(default=10, validator=ge(1))
    sweep_param: str = field(default="L", validator=in_(("L", "delay", "scenario")))
    sweep_from: float | None = None
    sweep_to: float | None = None
    points: int = field(default=10, validator=ge(1))
    csv: str | None = None
    out: str | None = None
    jobs: int | None = field(default=None, validator=optional(ge(1)))
    lmi: LmiConfig = LmiConfig()
    bisection: BisectionConfig = BisectionConfig()

    def __attrs_post_init__(self) -> None:
        if not self.L:
            raise ValueError("at least one --L is needed")
        for L in self.L:
            SectorSpec(self.m, L)
        if self.L_prime is not None and not self.m < self.L_prime <= min(self.L):
            raise ValueError(f"--Lprime must lie in ({self.m}, {min(self.L)}]")
        if self.controller is not None and not Path(self.controller).is_file():
            raise ModelError(f"{self.controller}: no such file")
        for spec in (self.model, self.graph):
            if spec is not None and _names_a_file(spec) and not Path(spec).is_file():
                raise ModelError(f"{spec}: no such file")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        lmi = LmiConfig(solver=args.solver)
        bisection = BisectionConfig(rho_tol=args.rho_tol)
        return cls(
            command=args.command,
            model=args.model,
            graph=args.graph,
            controller=args.controller,
            baseline=args.baseline,
            m=args.m,
            L=args.L,
            L_prime=args.Lprime,
            order=args.order,
            lam=args.lam,
            iters=args.iters,
            common_storage=args.common_storage,
            seed=args.seed,
            paths=args.paths,
            steps=args.steps,
            dim=args.dim,
            sweep_param=args.sweep_param,
            sweep_from=args.sweep_from,
            sweep_to=args.sweep_to,
            points=args.points,
            csv=args.csv,
            out=args.out,
            jobs=args.jobs,
            lmi=lmi,
            bisection=bisection,
        )

    @property
    def sector(self) -> SectorSpec:
        if len(self.L) != 1:
            raise ValueError(f"{self.command} takes a single --L")
        return SectorSpec(self.m, self.L[0])

    def order_or(self, default: int) -> int:
        return default if self.order is None else self.order

    def multiplier(self, default_order: int = 0) -> FilterCoefficients:
        if self.lam is not None:
            return FilterCoefficients(self.lam)
        return FilterCoefficients.identity(self.order_or(default_order))

    def output(self) -> Path:
        return Path(self.out or _DEFAULT_OUT[self.command])


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name.removesuffix(".json") + suffix)


def _plant(config: RunConfig, default: str | None = None) -> SwitchedPlant:
    spec = config.model or default
    if spec is None:
        raise ModelError("--model is required")
    plant = resolve_plant(spec)
    if config.graph is not None:
        plant = plant.with_graph(resolve_graph(config.graph))
    return plant


def _controller(config: RunConfig, sector: SectorSpec) -> SwitchedSystem | None:
    if config.controller is not None:
        return load_controller(config.controller)
    if config.baseline is not None:
        return _BASELINES[config.baseline](sector)
    return None


def _closed_loop(config: RunConfig, sector: SectorSpec) -> SwitchedSystem:
    """A plant closed by --controller or --baseline, or a closed-loop file."""
    controller = _controller(config, sector)
    if controller is None:
        if config.model is None or not Path(config.model).is_file():
            raise ModelError("a plant model needs --controller or --baseline")
        closed = load_system(config.model)
        if config.graph is not None:
            closed = closed.with_graph(resolve_graph(config.graph))
        return closed
    return star_controller(_plant(config), controller)


def _certified_rho(config: RunConfig) -> float | None:
    if config.controller is None:
        return None
    try:
        return load_synthesis(config.controller).rho
    except ModelError:
        return None


def _certificate_from(result: SynthesisResult) -> RateCertificate:
    witness = find_regulation_witness(result.closed_loop) if result.regulated else None
    return RateCertificate(
        rho=result.rho,
        lam=result.lam,
        storages=result.storages,
        witness=witness,
        margin=result.margin,
        common_storage=result.common_storage,
    )


def cmd_analyze(config: RunConfig) -> int:
    """Certify the rate of a closed loop."""
    sector = config.sector
    closed = _closed_loop(config, sector)
    cert = bisect_rate(
        closed,
        sector,
        nu_max=config.order_or(0),
        lam=None if config.lam is None else FilterCoefficients(config.lam),
        common_storage=config.common_storage,
        lmi=config.lmi,
        bisection=config.bisection,
    )
    if isinstance(cert, Diverged):
        raise DivergedError(cert.message)
    print(f"rho = {cert.rho:.6f}")
    print(f"lambda = {list(cert.lam.coefficients)}")
    dump_certificate(cert, config.output())
    return 0


def cmd_synthesize(config: RunConfig) -> int:
    """Synthesize a controller at a fixed multiplier."""
    sector = config.sector
    plant = _plant(config)
    sol = solve_regulator(plant)
    result = bisect_synthesis(
        plant,
        sol,
        sector,
        config.multiplier(),
        common_storage=config.common_storage,
        lmi=config.lmi,
        bisection=config.bisection,
    )
    if isinstance(result, Diverged):
        raise DivergedError(result.message)
    out = config.output()
    dump_synthesis(result, out)
    dump_certificate(_certificate_from(result), _sibling(out, ".cert.json"))
    dump_regulator(sol, _sibling(out, ".regulator.json"))
    print(f"rho = {result.rho:.6f}")
    print(f"order = {result.order}")
    print(f"certified = {result.certified}")
    return 0


def cmd_alternate(config: RunConfig) -> int:
    """Alternate synthesis and multiplier search."""
    result, trace = run_alternation(
        _plant(config),
        config.sector,
        nu_max=config.order_or(3),
        iter_max=config.iters,
        common_storage=config.common_storage,
        lmi=config.lmi,
        bisection=config.bisection,
    )
    out = config.output()
    dump_synthesis(result, out)
    write_trace_jsonl(trace, _sibling(out, ".trace.jsonl"))
    for record in trace.records:
        rho = "diverged" if record.rho is None else f"{record.rho:.6f}"
        print(f"{record.iteration} {record.phase}: rho = {rho}")
    print(f"rho = {result.rho:.6f}")
    print(f"lambda = {list(result.lam.coefficients)}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """Deploy a controller on random functions and paths."""
    sector = config.sector
    closed = _closed_loop(config, sector)
    summary = monte_carlo(
        closed,
        sector,
        L_prime=config.L_prime,
        d=config.dim,
        paths=config.paths,
        steps=config.steps,
        seed=config.seed,
        jobs=config.jobs,
        certified_rho=_certified_rho(config),
    )
    if config.csv is not None:
        directory = Path(config.csv)
        directory.mkdir(parents=True, exist_ok=True)
        for i, trace in enumerate(summary.traces):
            write_simulation_csv(trace, directory / f"run-{i + 1:03d}.csv")
    diverged = sum(t.diverged for t in summary.traces)
    print(f"runs = {len(summary.traces)}")
    print(f"diverged = {diverged}")
    print(f"max empirical rate = {summary.max_rate:.6f}")
    print(f"max final distance = {summary.max_final_distance:.3e}")
    if summary.certified_rho is not None:
        print(f"certified rho = {summary.certified_rho:.6f}")
        print(f"max prefactor = {summary.max_prefactor:.3e}")
    return 0


def _sweep_values(config: RunConfig) -> list[float]:
    if config.sweep_from is None or config.sweep_to is None:
        raise ValueError("--from and --to are required for a sweep")
    if config.sweep_param == "L":
        grid = np.linspace(config.sweep_from, config.sweep_to, config.points)
        return [float(v) for v in grid]
    return [float(v) for v in range(int(config.sweep_from), int(config.sweep_to) + 1)]


def _sweep_point(config: RunConfig, value: float, L: float) -> dict[str, Any]:
    start = time.perf_counter()
    if config.sweep_param == "L":
        plant = _plant(config)
    elif config.sweep_param == "delay":
        plant = builtin_plant(f"delay-{int(value)}")
    else:
        scenario = builtin_graph(f"scenario-{int(value)}")
        plant = _plant(config, "delay-3").with_graph(scenario)
    sector = SectorSpec(config.m, L)
    controller = _controller(config, sector)
    outcome: Any
    if controller is None:
        try:
            outcome = bisect_synthesis(
                plant,
                solve_regulator(plant),
                sector,
                config.multiplier(),
                common_storage=config.common_storage,
                lmi=config.lmi,
                bisection=config.bisection,
            )
        except CertificationError as exc:
            log.warning(
                "sweep point %s=%s L=%s: %s", config.sweep_param, value, L, exc
            )
            outcome = None
    else:
        outcome = bisect_rate(
            star_controller(plant, controller),
            sector,
            nu_max=config.order_or(0),
            common_storage=config.common_storage,
            lmi=config.lmi,
            bisection=config.bisection,
        )
    if outcome is None:
        rho = "uncertified"
    elif isinstance(outcome, Diverged):
        rho = "diverged"
    else:
        rho = repr(outcome.rho)
    log.info("sweep point %s=%s L=%s: %s", config.sweep_param, value, L, rho)
    return {
        "param": config.sweep_param,
        "value": value,
        "L": L,
        "rho": rho,
        "seconds": f"{time.perf_counter() - start:.3f}",
    }


def cmd_sweep(config: RunConfig) -> int:
    """Tabulate rates over a parameter grid."""
    values = _sweep_values(config)
    if config.sweep_param == "L":
        grid = [(v, v) for v in values]
    else:
        grid = [(v, L) for v in values for L in config.L]

    def point(args: tuple[float, float]) -> dict[str, Any]:
        return _sweep_point(config, *args)

    rows = run_sweep(grid, point, jobs=config.jobs, return_exceptions=True)
    for row in rows:
        if isinstance(row, BaseException):
            raise row
    fields = ["param", "value", "L", "rho", "seconds"]
    if config.csv is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)  # type: ignore[arg-type]
    else:
        with Path(config.csv).open("w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)  # type: ignore[arg-type]
        print(f"wrote {len(rows)} rows to {config.csv}")
    return 0


def cmd_graph_check(config: RunConfig) -> int:
    """Check that every mode can start an infinite path."""
    if config.graph is not None:
        graph = resolve_graph(config.graph)
    else:
        graph = _plant(config).graph
    diag = validate_graph(graph)
    print(f"modes = {graph.num_modes}, edges = {len(graph.edges)}")
    if not diag:
        print(f"invalid: {diag.message}")
        return ModelError.exit_code
    print("valid")
    return 0


_COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "alternate": cmd_alternate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "graph-check": cmd_graph_check,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="a model file or a bundled model name")
    common.add_argument("--graph", help="a graph file or a bundled graph name")
    common.add_argument("--controller", help="a controller or synthesis result file")
    common.add_argument("--baseline", choices=sorted(_BASELINES))
    common.add_argument("--m", type=float, default=1.0)
    common.add_argument("--L", type=float, nargs="+", default=[10.0])
    common.add_argument("--Lprime", type=float)
    common.add_argument("--order", type=int, help="the multiplier order ν_max")
    common.add_argument("--lambda", dest="lam", type=float, nargs="+")
    common.add_argument("--rho-tol", type=float, default=1e-4)
    common.add_argument("--common-storage", action="store_true")
    common.add_argument("--iters", type=int, default=3)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--paths", type=int, default=100)
    common.add_argument("--steps", type=int, default=500)
    common.add_argument("--dim", type=int, default=10)
    common.add_argument(
        "--sweep-param", choices=["L", "delay", "scenario"], default="L"
    )
    common.add_argument("--from", dest="sweep_from", type=float)
    common.add_argument("--to", dest="sweep_to", type=float)
    common.add_argument("--points", type=int, default=10)
    common.add_argument("--csv")
    common.add_argument("--out")
    common.add_argument("--jobs", type=int)
    common.add_argument("--solver", default="CLARABEL")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="switchopt",
        description="Certify and synthesize algorithms over switched networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    else:
        level = max(logging.WARNING - 10 * verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        config = RunConfig.from_args(args)
        return _COMMANDS[config.command](config)
    except SwitchoptError as exc:
        print(f"switchopt: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"switchopt: {exc}", file=sys.stderr)
        return ModelError.exit_code

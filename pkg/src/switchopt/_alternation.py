"""Alternate between controller synthesis and multiplier search."""

from __future__ import annotations

import logging
from typing import Literal

from attrs import evolve, field, frozen

from ._analysis import Diverged, bisect_rate
from ._config import BisectionConfig, LmiConfig
from ._errors import CertificationError, DivergedError
from ._graphs import require_valid
from ._regulation import solve_regulator
from ._synthesis import SynthesisResult, bisect_synthesis
from ._systems import SwitchedPlant
from ._transforms import FilterCoefficients, SectorSpec

__all__ = ["AlternationRecord", "AlternationTrace", "run_alternation"]

log = logging.getLogger(__name__)

IMPROVEMENT_TOL = 1e-4


@frozen
class AlternationRecord:
    iteration: int
    phase: Literal["synthesis", "analysis"]
    rho: float | None
    """The rate this phase reached, None if it diverged or was not re-certified."""
    lam: tuple[float, ...]
    order: int
    adopted: bool
    incumbent_rho: float | None


@frozen
class AlternationTrace:
    records: tuple[AlternationRecord, ...] = field(converter=tuple, default=())

    def __len__(self) -> int:
        return len(self.records)

    def incumbent_rates(self) -> list[float]:
        return [r.incumbent_rho for r in self.records if r.incumbent_rho is not None]


def run_alternation(
    plant: SwitchedPlant,
    sector: SectorSpec,
    *,
    nu_max: int = 3,
    iter_max: int = 3,
    common_storage: bool = False,
    lmi: LmiConfig | None = None,
    bisection: BisectionConfig | None = None,
) -> tuple[SynthesisResult, AlternationTrace]:
    """Synthesize at fixed λ, then re-fit λ on the closed loop, and repeat.

    Starts from the static multiplier λ = (1,). A phase's result replaces
    the incumbent only if its rate is no worse.
    """
    if iter_max < 1:
        raise ValueError("iter_max must be >= 1")
    require_valid(plant.graph)
    sol = solve_regulator(plant)

    lam = FilterCoefficients.identity()
    incumbent: SynthesisResult | None = None
    records: list[AlternationRecord] = []

    for iteration in range(1, iter_max + 1):
        start_rho = incumbent.rho if incumbent is not None else None
        log.info("alternation %d: synthesis with λ=%s", iteration, lam.coefficients)
        synth: SynthesisResult | Diverged
        try:
            synth = bisect_synthesis(
                plant,
                sol,
                sector,
                lam,
                common_storage=common_storage,
                lmi=lmi,
                bisection=bisection,
            )
        except CertificationError as exc:
            if incumbent is None:
                raise
            log.warning("alternation %d: %s, keeping the incumbent", iteration, exc)
            synth = Diverged(str(exc))
        if isinstance(synth, Diverged):
            if incumbent is None:
                raise DivergedError(f"synthesis diverged: {synth.message}")
            records.append(
                AlternationRecord(
                    iteration,
                    "synthesis",
                    None,
                    lam.coefficients,
                    0,
                    False,
                    incumbent.rho,
                )
            )
            break
        adopted = incumbent is None or synth.rho <= incumbent.rho
        if adopted:
            incumbent = synth
        assert incumbent is not None
        records.append(
            AlternationRecord(
                iteration,
                "synthesis",
                synth.rho,
                lam.coefficients,
                synth.order,
                adopted,
                incumbent.rho,
            )
        )

        log.info("alternation %d: multiplier search of order %d", iteration, nu_max)
        cert = bisect_rate(
            synth.closed_loop,
            sector,
            nu_max=nu_max,
            common_storage=common_storage,
            lmi=lmi,
            bisection=bisection,
        )
        if isinstance(cert, Diverged):
            records.append(
                AlternationRecord(
                    iteration,
                    "analysis",
                    None,
                    lam.coefficients,
                    synth.order,
                    False,
                    incumbent.rho,
                )
            )
        else:
            adopted = cert.rho <= incumbent.rho
            if adopted:
                incumbent = evolve(
                    synth,
                    rho=cert.rho,
                    lam=cert.lam,
                    margin=cert.margin,
                    storages=cert.storages,
                )
            lam = cert.lam
            records.append(
                AlternationRecord(
                    iteration,
                    "analysis",
                    cert.rho,
                    cert.lam.coefficients,
                    synth.order,
                    adopted,
                    incumbent.rho,
                )
            )

        if start_rho is not None and start_rho - incumbent.rho < IMPROVEMENT_TOL:
            log.info("alternation converged after %d iterations", iteration)
            break

    assert incumbent is not None
    return incumbent, AlternationTrace(records)

"""Rate certification and synthesis of algorithms over switched networks."""

from __future__ import annotations

import logging

from ._alternation import AlternationRecord, AlternationTrace, run_alternation
from ._analysis import (
    Diverged,
    RateCertificate,
    RegulationWitness,
    bisect_rate,
    feasible_at_rate,
    find_regulation_witness,
    rate_below_one,
    threshold_search,
)
from ._config import BisectionConfig, LmiConfig
from ._errors import (
    CertificationError,
    DivergedError,
    GraphError,
    ModelError,
    ReconstructionError,
    RegulationError,
    RegulatorInfeasibleError,
    SolverFailure,
    SwitchoptError,
    WellPosednessError,
)
from ._gather import gather_solves, run_sweep
from ._graphs import (
    GraphDiagnostic,
    SwitchingGraph,
    SwitchingPath,
    bounded_rate_graph,
    complete_graph,
    packet_drop_graph,
    product_graph,
    ring_graph,
    scenario_graph,
    validate_graph,
)
from ._lmi import LmiProblem, LmiSolution, LmiStatus, verify
from ._networks import build_delay_system, delay_plant, ring_network, trivial_network
from ._regulation import (
    RegulatorSolution,
    build_internal_model,
    close_loop,
    connect_plant_model,
    solve_regulator,
    verify_closed_loop_regulation,
)
from ._simulate import (
    SimulationTrace,
    TestFunction,
    baseline_gd,
    baseline_tm,
    deploy,
    empirical_prefactor,
    empirical_rate,
    make_function,
    minimize_oracle,
    monte_carlo,
    random_path,
)
from ._synthesis import (
    SynthesisResult,
    assemble_controller,
    bisect_synthesis,
    reconstruct,
    synth_feasible_at_rate,
    synthesizable_below_one,
)
from ._systems import (
    ModeRealization,
    PlantMode,
    SwitchedPlant,
    SwitchedSystem,
    kron_lift,
    series,
    star,
    star_controller,
)
from ._taskgroup import SolveGroup
from ._transforms import (
    FilterCoefficients,
    SectorSpec,
    check_admissible,
    dissipation_partial_sums,
    exp_weight_signals,
    filtered_loop,
    loop_signal_map,
    rho_weight,
    rho_weight_and_loop,
    zf_realization,
)

__all__ = [
    "AlternationRecord",
    "AlternationTrace",
    "BisectionConfig",
    "CertificationError",
    "Diverged",
    "DivergedError",
    "FilterCoefficients",
    "GraphDiagnostic",
    "GraphError",
    "LmiConfig",
    "LmiProblem",
    "LmiSolution",
    "LmiStatus",
    "ModeRealization",
    "ModelError",
    "PlantMode",
    "RateCertificate",
    "ReconstructionError",
    "RegulationError",
    "RegulationWitness",
    "RegulatorInfeasibleError",
    "RegulatorSolution",
    "SectorSpec",
    "SimulationTrace",
    "SolveGroup",
    "SolverFailure",
    "SwitchedPlant",
    "SwitchedSystem",
    "SwitchingGraph",
    "SwitchingPath",
    "SwitchoptError",
    "SynthesisResult",
    "TestFunction",
    "WellPosednessError",
    "assemble_controller",
    "baseline_gd",
    "baseline_tm",
    "bisect_rate",
    "bisect_synthesis",
    "bounded_rate_graph",
    "build_delay_system",
    "build_internal_model",
    "check_admissible",
    "close_loop",
    "complete_graph",
    "connect_plant_model",
    "delay_plant",
    "deploy",
    "dissipation_partial_sums",
    "empirical_prefactor",
    "empirical_rate",
    "exp_weight_signals",
    "feasible_at_rate",
    "filtered_loop",
    "find_regulation_witness",
    "gather_solves",
    "kron_lift",
    "loop_signal_map",
    "make_function",
    "minimize_oracle",
    "monte_carlo",
    "packet_drop_graph",
    "product_graph",
    "random_path",
    "rate_below_one",
    "reconstruct",
    "rho_weight",
    "rho_weight_and_loop",
    "ring_graph",
    "ring_network",
    "run_alternation",
    "run_sweep",
    "scenario_graph",
    "series",
    "solve_regulator",
    "star",
    "star_controller",
    "synth_feasible_at_rate",
    "synthesizable_below_one",
    "threshold_search",
    "trivial_network",
    "validate_graph",
    "verify",
    "verify_closed_loop_regulation",
    "zf_realization",
]

logging.getLogger(__name__).addHandler(logging.NullHandler())

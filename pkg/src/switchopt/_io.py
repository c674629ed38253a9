"""JSON and CSV persistence.

Mode indices are 1-based in files and 0-based in memory.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from collections.abc import Mapping
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np

from ._alternation import AlternationTrace
from ._analysis import RateCertificate, RegulationWitness
from ._errors import ModelError
from ._graphs import (
    SwitchingGraph,
    bounded_rate_graph,
    complete_graph,
    packet_drop_graph,
)
from ._networks import delay_plant
from ._regulation import RegulatorSolution
from ._simulate import SimulationTrace
from ._synthesis import SynthesisResult
from ._systems import Matrix, ModeRealization, PlantMode, SwitchedPlant, SwitchedSystem
from ._transforms import FilterCoefficients

__all__ = [
    "builtin_graph",
    "builtin_plant",
    "dump_certificate",
    "dump_graph",
    "dump_plant",
    "dump_regulator",
    "dump_synthesis",
    "dump_system",
    "graph_from_dict",
    "graph_to_dict",
    "load_certificate",
    "load_controller",
    "load_graph",
    "load_plant",
    "load_synthesis",
    "load_system",
    "plant_from_dict",
    "plant_to_dict",
    "resolve_graph",
    "resolve_plant",
    "system_from_dict",
    "system_to_dict",
    "write_simulation_csv",
    "write_trace_jsonl",
]

log = logging.getLogger(__name__)

_PLANT_BLOCKS = {
    "A": ("n", "n"),
    "B1": ("n", "d"),
    "B2": ("n", "nu"),
    "C1": ("d", "n"),
    "C2": ("ny", "n"),
    "D11": ("d", "d"),
    "D12": ("d", "nu"),
    "D21": ("ny", "d"),
    "D22": ("ny", "nu"),
}
_SYSTEM_BLOCKS = {
    "A": ("n", "n"),
    "B": ("n", "nu"),
    "C": ("ny", "n"),
    "D": ("ny", "nu"),
}
_DELAY_NAME = re.compile(r"delay-(\d+)(?:-rate-(\d+)|-(arbitrary))?")
_SCENARIO_NAME = re.compile(r"scenario-([1-4])")


def _matrix(value: Any, shape: tuple[int, int], what: str) -> Matrix:
    arr = np.array(value, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise ModelError(f"{what} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{what} has non-finite entries")
    return arr


def _label_to_json(label: Any) -> Any:
    if isinstance(label, tuple):
        return [_label_to_json(v) for v in label]
    return label


def _label_from_json(label: Any) -> Any:
    if isinstance(label, list):
        return tuple(_label_from_json(v) for v in label)
    return label


def graph_to_dict(graph: SwitchingGraph) -> dict[str, Any]:
    return {
        "num_modes": graph.num_modes,
        "edges": [[r + 1, rp + 1] for r, rp in graph.sorted_edges()],
        "labels": None
        if graph.labels is None
        else [_label_to_json(v) for v in graph.labels],
    }


def graph_from_dict(data: Mapping[str, Any]) -> SwitchingGraph:
    try:
        labels = data.get("labels")
        return SwitchingGraph(
            int(data["num_modes"]),
            [(int(r) - 1, int(rp) - 1) for r, rp in data["edges"]],
            None if labels is None else [_label_from_json(v) for v in labels],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed graph: {exc!r}") from exc


def plant_to_dict(plant: SwitchedPlant) -> dict[str, Any]:
    n, d, nu, ny = plant.dims
    return {
        "modes": [
            {name: getattr(mode, name).tolist() for name in _PLANT_BLOCKS}
            for mode in plant.modes
        ],
        "graph": graph_to_dict(plant.graph),
        "dims": {"n": n, "d": d, "nu": nu, "ny": ny},
    }


def plant_from_dict(data: Mapping[str, Any]) -> SwitchedPlant:
    try:
        dims = {key: int(data["dims"][key]) for key in ("n", "d", "nu", "ny")}
        modes = []
        for r, mode in enumerate(data["modes"]):
            blocks = {
                name: _matrix(
                    mode[name], (dims[rows], dims[cols]), f"mode {r + 1} block {name}"
                )
                for name, (rows, cols) in _PLANT_BLOCKS.items()
            }
            modes.append(PlantMode(**blocks))
        graph = graph_from_dict(data["graph"])
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed plant: missing or invalid {exc}") from exc
    return SwitchedPlant(modes, graph)


def system_to_dict(system: SwitchedSystem) -> dict[str, Any]:
    return {
        "modes": [
            {name: getattr(mode, name).tolist() for name in _SYSTEM_BLOCKS}
            for mode in system.modes
        ],
        "graph": None if system.graph is None else graph_to_dict(system.graph),
        "dims": {"n": system.n, "nu": system.n_u, "ny": system.n_y},
    }


def system_from_dict(data: Mapping[str, Any]) -> SwitchedSystem:
    try:
        dims = {key: int(data["dims"][key]) for key in ("n", "nu", "ny")}
        modes = [
            ModeRealization(
                *(
                    _matrix(
                        mode[name], (dims[rows], dims[cols]), f"mode {r + 1} {name}"
                    )
                    for name, (rows, cols) in _SYSTEM_BLOCKS.items()
                )
            )
            for r, mode in enumerate(data["modes"])
        ]
        graph_data = data.get("graph")
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed system: missing or invalid {exc}") from exc
    graph = None if graph_data is None else graph_from_dict(graph_data)
    return SwitchedSystem(modes, graph)


def _read_json(path: str | Path) -> Any:
    try:
        with Path(path).open(encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ModelError(f"{path}: {exc.strerror}") from exc


def _write_json(data: Any, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        json.dump(data, f, indent=1)
        f.write("\n")
    log.debug("wrote %s", path)


def load_plant(path: str | Path) -> SwitchedPlant:
    return plant_from_dict(_read_json(path))


def dump_plant(plant: SwitchedPlant, path: str | Path) -> None:
    _write_json(plant_to_dict(plant), path)


def load_system(path: str | Path) -> SwitchedSystem:
    return system_from_dict(_read_json(path))


def dump_system(system: SwitchedSystem, path: str | Path) -> None:
    _write_json(system_to_dict(system), path)


def load_graph(path: str | Path) -> SwitchingGraph:
    return graph_from_dict(_read_json(path))


def dump_graph(graph: SwitchingGraph, path: str | Path) -> None:
    _write_json(graph_to_dict(graph), path)


def _certificate_to_dict(cert: RateCertificate) -> dict[str, Any]:
    return {
        "rho": cert.rho,
        "lambda": list(cert.lam.coefficients),
        "storages": [s.tolist() for s in cert.storages],
        "witness": None
        if cert.witness is None
        else [t.tolist() for t in cert.witness.theta],
        "witness_residual": None if cert.witness is None else cert.witness.residual,
        "margin": cert.margin,
        "common_storage": cert.common_storage,
    }


def dump_certificate(cert: RateCertificate, path: str | Path) -> None:
    _write_json(_certificate_to_dict(cert), path)


def load_certificate(path: str | Path) -> RateCertificate:
    data = _read_json(path)
    try:
        witness = None
        if data.get("witness") is not None:
            residual = float(data.get("witness_residual") or 0.0)
            witness = RegulationWitness(data["witness"], residual)
        return RateCertificate(
            rho=float(data["rho"]),
            lam=FilterCoefficients(data["lambda"]),
            storages=data["storages"],
            witness=witness,
            margin=float(data["margin"]),
            common_storage=bool(data.get("common_storage", False)),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"{path}: malformed certificate ({exc!r})") from exc


def dump_regulator(sol: RegulatorSolution, path: str | Path) -> None:
    _write_json(
        {
            "Pi": [m.tolist() for m in sol.Pi],
            "Gamma": [m.tolist() for m in sol.Gamma],
            "Phi": [m.tolist() for m in sol.Phi],
            "residual": sol.residual,
        },
        path,
    )


def dump_synthesis(result: SynthesisResult, path: str | Path) -> None:
    _write_json(
        {
            "kind": "synthesis",
            "rho": result.rho,
            "lambda": list(result.lam.coefficients),
            "margin": result.margin,
            "storages": [s.tolist() for s in result.storages],
            "common_storage": result.common_storage,
            "regulated": result.regulated,
            "certified": result.certified,
            "subcontroller": system_to_dict(result.subcontroller),
            "controller": system_to_dict(result.controller),
            "closed_loop": system_to_dict(result.closed_loop),
        },
        path,
    )


def load_synthesis(path: str | Path) -> SynthesisResult:
    data = _read_json(path)
    if not isinstance(data, dict) or data.get("kind") != "synthesis":
        raise ModelError(f"{path}: not a synthesis result")
    try:
        return SynthesisResult(
            subcontroller=system_from_dict(data["subcontroller"]),
            controller=system_from_dict(data["controller"]),
            closed_loop=system_from_dict(data["closed_loop"]),
            rho=float(data["rho"]),
            lam=FilterCoefficients(data["lambda"]),
            margin=float(data["margin"]),
            storages=data["storages"],
            common_storage=bool(data["common_storage"]),
            regulated=bool(data["regulated"]),
            certified=data["certified"],
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"{path}: malformed synthesis result ({exc!r})") from exc


def load_controller(path: str | Path) -> SwitchedSystem:
    """The controller K_r of a synthesis result, or a bare system file."""
    data = _read_json(path)
    if isinstance(data, dict) and data.get("kind") == "synthesis":
        return system_from_dict(data["controller"])
    return system_from_dict(data)


def write_trace_jsonl(trace: AlternationTrace, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for record in trace.records:
            f.write(
                json.dumps(
                    {
                        "iteration": record.iteration,
                        "phase": record.phase,
                        "rho": record.rho,
                        "lambda": list(record.lam),
                        "order": record.order,
                        "adopted": record.adopted,
                        "incumbent_rho": record.incumbent_rho,
                    }
                )
                + "\n"
            )


def write_simulation_csv(
    trace: SimulationTrace, path: str | Path, *, include_z: bool = False
) -> None:
    """Columns k, mode (1-based), distance and optionally z_1..z_d."""
    d = trace.iterates.shape[1]
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        header = ["k", "mode", "distance"]
        if include_z:
            header += [f"z_{i + 1}" for i in range(d)]
        writer.writerow(header)
        for k, (mode, distance) in enumerate(
            zip(trace.modes, trace.distances, strict=True)
        ):
            row: list[Any] = [k, int(mode) + 1, repr(float(distance))]
            if include_z:
                row += [repr(float(v)) for v in trace.iterates[k]]
            writer.writerow(row)


def _bundled(name: str) -> Any:
    resource = files("switchopt").joinpath("data", f"{name}.json")
    if not resource.is_file():
        raise ModelError(f"no bundled model named {name!r}")
    return json.loads(resource.read_text(encoding="utf-8"))


def builtin_plant(name: str) -> SwitchedPlant:
    """A bundled network by name.

    `trivial` and `ring` are read from the package data. `delay-H` uses the
    packet-drop graph, `delay-H-rate-k` the bounded-rate graph and
    `delay-H-arbitrary` the complete graph over delays 0..H.
    """
    if name in ("trivial", "ring"):
        return plant_from_dict(_bundled(name))
    match = _DELAY_NAME.fullmatch(name)
    if match is None:
        raise ModelError(f"unknown model {name!r}")
    h = int(match[1])
    delays = list(range(h + 1))
    if match[2] is not None:
        graph = bounded_rate_graph(delays, int(match[2]))
    elif match[3] is not None:
        graph = complete_graph(h + 1, delays)
    elif h == 0:
        return delay_plant(0)
    else:
        graph = packet_drop_graph(h)
    return delay_plant(h, graph_before=graph)


def builtin_graph(name: str) -> SwitchingGraph:
    """`scenario-1` .. `scenario-4` from the package data."""
    if _SCENARIO_NAME.fullmatch(name) is None:
        raise ModelError(f"unknown graph {name!r}")
    return graph_from_dict(_bundled(name))


def resolve_plant(spec: str | Path) -> SwitchedPlant:
    """A plant file if `spec` names an existing path, else a bundled model."""
    if Path(spec).is_file():
        return load_plant(spec)
    return builtin_plant(str(spec))


def resolve_graph(spec: str | Path) -> SwitchingGraph:
    if Path(spec).is_file():
        return load_graph(spec)
    return builtin_graph(str(spec))

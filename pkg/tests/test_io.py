"""Model files, result files and bundled models."""

import csv
import json
from pathlib import Path

import numpy as np
from pytest import mark, raises

from switchopt import (
    AlternationRecord,
    AlternationTrace,
    FilterCoefficients,
    ModelError,
    RateCertificate,
    RegulationWitness,
    SectorSpec,
    SimulationTrace,
    SwitchedSystem,
    SynthesisResult,
    baseline_gd,
    delay_plant,
    ring_network,
    scenario_graph,
    trivial_network,
)
from switchopt._io import (
    builtin_graph,
    builtin_plant,
    dump_certificate,
    dump_graph,
    dump_plant,
    dump_synthesis,
    dump_system,
    load_certificate,
    load_controller,
    load_graph,
    load_plant,
    load_synthesis,
    load_system,
    resolve_plant,
    write_simulation_csv,
    write_trace_jsonl,
)

SECTOR = SectorSpec(1.0, 10.0)


def same_plant(a, b) -> bool:
    if a.graph != b.graph or a.num_modes != b.num_modes:
        return False
    return all(
        ma.realization.allclose(mb.realization)
        for ma, mb in zip(a.modes, b.modes, strict=True)
    )


def test_bundled_ring_matches_builder():
    assert same_plant(builtin_plant("ring"), ring_network())


def test_bundled_trivial_matches_builder():
    assert same_plant(builtin_plant("trivial"), trivial_network())


@mark.parametrize("scenario", [1, 2, 3, 4])
def test_bundled_scenarios(scenario: int):
    assert builtin_graph(f"scenario-{scenario}") == scenario_graph(scenario)


@mark.parametrize(
    "name, modes, edges",
    [
        ("delay-0", 1, 1),
        ("delay-3", 4, 6),
        ("delay-3-rate-1", 4, 10),
        ("delay-3-rate-2", 4, 14),
        ("delay-3-arbitrary", 4, 16),
    ],
)
def test_delay_names(name: str, modes: int, edges: int):
    plant = builtin_plant(name)
    assert plant.num_modes == modes
    assert len(plant.graph.edges) == edges


@mark.parametrize("name", ["ring2", "delay-x", "delay-3-rate-"])
def test_unknown_model(name: str):
    with raises(ModelError, match="unknown model"):
        builtin_plant(name)


def test_unknown_graph():
    with raises(ModelError, match="unknown graph"):
        builtin_graph("scenario-5")


def test_plant_file(tmp_path: Path):
    """Tuple labels of product graphs survive a file."""
    plant = delay_plant(1, 1)
    path = tmp_path / "plant.json"
    dump_plant(plant, path)
    data = json.loads(path.read_text())
    assert data["graph"]["edges"][0] == [1, 4]
    loaded = load_plant(path)
    assert same_plant(loaded, plant)
    assert loaded.graph.labels[1] == (0, 1)
    assert resolve_plant(path).num_modes == 4


def test_graph_file(tmp_path: Path):
    path = tmp_path / "graph.json"
    dump_graph(scenario_graph(3), path)
    assert load_graph(path) == scenario_graph(3)


def test_system_without_graph(tmp_path: Path):
    system = SwitchedSystem(baseline_gd(SECTOR).modes)
    path = tmp_path / "system.json"
    dump_system(system, path)
    loaded = load_system(path)
    assert loaded.graph is None
    assert loaded.modes[0].allclose(system.modes[0])


def test_malformed_files(tmp_path: Path):
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with raises(ModelError, match="not valid JSON"):
        load_plant(broken)
    with raises(ModelError):
        load_plant(tmp_path / "missing.json")

    data = {
        "modes": [{"A": [[1.0]], "B": [[1.0, 2.0]], "C": [[1.0]], "D": [[0.0]]}],
        "dims": {"n": 1, "nu": 1, "ny": 1},
    }
    shape = tmp_path / "shape.json"
    shape.write_text(json.dumps(data))
    with raises(ModelError, match="mode 1 B has shape"):
        load_system(shape)


def test_edges_out_of_range(tmp_path: Path):
    path = tmp_path / "graph.json"
    path.write_text(json.dumps({"num_modes": 2, "edges": [[1, 3]]}))
    with raises(ModelError, match="out of range"):
        load_graph(path)


def test_certificate_file(tmp_path: Path):
    cert = RateCertificate(
        rho=0.9,
        lam=FilterCoefficients((1.0, -0.2)),
        storages=[np.eye(2), 2 * np.eye(2)],
        witness=RegulationWitness([np.ones((2, 1))], 1e-12),
        margin=1e-3,
    )
    path = tmp_path / "cert.json"
    dump_certificate(cert, path)
    loaded = load_certificate(path)
    assert loaded.rho == 0.9
    assert loaded.lam == cert.lam
    assert np.array_equal(loaded.storages[1], 2 * np.eye(2))
    assert loaded.witness is not None
    assert loaded.witness.residual == 1e-12


def test_synthesis_file(tmp_path: Path):
    gd = baseline_gd(SECTOR)
    result = SynthesisResult(
        subcontroller=gd,
        controller=gd,
        closed_loop=gd,
        rho=0.82,
        lam=FilterCoefficients.identity(),
        margin=1e-4,
        storages=[np.eye(1)],
    )
    path = tmp_path / "controller.json"
    dump_synthesis(result, path)
    loaded = load_synthesis(path)
    assert loaded.rho == 0.82
    assert loaded.certified is None
    assert load_controller(path).modes[0].allclose(gd.modes[0])

    bare = tmp_path / "bare.json"
    dump_system(gd, bare)
    assert load_controller(bare).num_modes == 1
    with raises(ModelError, match="not a synthesis result"):
        load_synthesis(bare)


def test_trace_jsonl(tmp_path: Path):
    trace = AlternationTrace(
        [
            AlternationRecord(1, "synthesis", 0.9, (1.0,), 1, True, 0.9),
            AlternationRecord(1, "analysis", None, (1.0,), 1, False, 0.9),
        ]
    )
    path = tmp_path / "trace.jsonl"
    write_trace_jsonl(trace, path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [line["phase"] for line in lines] == ["synthesis", "analysis"]
    assert lines[1]["rho"] is None


def test_simulation_csv(tmp_path: Path):
    trace = SimulationTrace(
        modes=np.array([0, 1]),
        iterates=np.array([[1.0, 2.0], [0.5, 1.0]]),
        gradients=np.zeros((2, 2)),
        distances=np.array([2.0, 1.0]),
        z_star=np.zeros(2),
    )
    path = tmp_path / "run.csv"
    write_simulation_csv(trace, path, include_z=True)
    with path.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["k", "mode", "distance", "z_1", "z_2"]
    assert rows[2][:2] == ["1", "2"]
    assert float(rows[2][3]) == 0.5

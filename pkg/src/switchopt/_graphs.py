"""Switching graphs and admissible switching paths."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Sequence
from typing import Any

import networkx as nx
from attrs import field, frozen

from ._errors import GraphError

__all__ = [
    "GraphDiagnostic",
    "SwitchingGraph",
    "SwitchingPath",
    "bounded_rate_graph",
    "complete_graph",
    "packet_drop_graph",
    "product_graph",
    "require_valid",
    "ring_graph",
    "scenario_graph",
    "validate_graph",
]

log = logging.getLogger(__name__)


@frozen
class GraphDiagnostic:
    """The outcome of `validate_graph`."""

    valid: bool
    offending: tuple[int, ...] = ()
    """Vertices (0-based) from which no cycle can be reached."""

    def __bool__(self) -> bool:
        return self.valid

    @property
    def message(self) -> str:
        if self.valid:
            return "every vertex reaches a cycle"
        names = ", ".join(str(v + 1) for v in self.offending)
        return f"no cycle reachable from vertices {names}"


def _edge_set(edges: Iterable[tuple[int, int]]) -> frozenset[tuple[int, int]]:
    return frozenset((int(r), int(rp)) for r, rp in edges)


@frozen
class SwitchingGraph:
    """A finite directed graph of admissible mode transitions.

    Vertices are the modes `0..num_modes - 1`. Files and messages count
    modes from 1.
    """

    num_modes: int
    edges: frozenset[tuple[int, int]] = field(converter=_edge_set)
    labels: tuple[Any, ...] | None = field(
        default=None, converter=lambda v: None if v is None else tuple(v)
    )

    def __attrs_post_init__(self) -> None:
        if self.num_modes < 1:
            raise GraphError("a switching graph needs at least one mode")
        bad = sorted(
            {v for edge in self.edges for v in edge if not 0 <= v < self.num_modes}
        )
        if bad:
            raise GraphError(f"edge endpoints out of range: {bad}", bad)
        if self.labels is not None and len(self.labels) != self.num_modes:
            raise GraphError(
                f"{len(self.labels)} labels given for {self.num_modes} modes"
            )

    def successors(self, mode: int) -> list[int]:
        return sorted(rp for r, rp in self.edges if r == mode)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.DiGraph:
        digraph = nx.DiGraph()
        digraph.add_nodes_from(range(self.num_modes))
        digraph.add_edges_from(self.edges)
        return digraph

    @property
    def valid(self) -> bool:
        """Whether every vertex can start an infinite admissible path."""
        return validate_graph(self).valid


@frozen
class SwitchingPath:
    """A finite prefix s_0, s_1, ... of an admissible switching signal."""

    modes: tuple[int, ...] = field(converter=tuple)
    graph: SwitchingGraph

    def __attrs_post_init__(self) -> None:
        for k, (r, rp) in enumerate(itertools.pairwise(self.modes)):
            if (r, rp) not in self.graph.edges:
                raise GraphError(
                    f"transition {r + 1} -> {rp + 1} at step {k} is not an edge"
                )

    def __len__(self) -> int:
        return len(self.modes)


def validate_graph(g: SwitchingGraph) -> GraphDiagnostic:
    """Check that every vertex reaches a vertex lying on a cycle."""
    digraph = g.to_networkx()
    on_cycle: set[int] = set()
    for component in nx.strongly_connected_components(digraph):
        if len(component) > 1 or any(digraph.has_edge(v, v) for v in component):
            on_cycle |= component
    offending = tuple(
        v
        for v in range(g.num_modes)
        if v not in on_cycle and not (nx.descendants(digraph, v) & on_cycle)
    )
    if offending:
        log.debug("graph invalid, offending vertices %s", offending)
    return GraphDiagnostic(valid=not offending, offending=offending)


def require_valid(g: SwitchingGraph) -> None:
    """Raise `GraphError` naming the offending vertices of an invalid graph."""
    diag = validate_graph(g)
    if not diag:
        raise GraphError(diag.message, diag.offending)


def bounded_rate_graph(delay_values: Sequence[int], max_step: int) -> SwitchingGraph:
    """Delays that change by at most `max_step` per step, dwelling allowed."""
    if not delay_values:
        raise ValueError("delay_values must not be empty")
    if max_step < 1:
        raise ValueError("max_step must be >= 1")
    values = [int(v) for v in delay_values]
    if any(b <= a for a, b in itertools.pairwise(values)):
        raise ValueError("delay_values must be strictly increasing")
    edges = [
        (r, rp)
        for r, rp in itertools.product(range(len(values)), repeat=2)
        if abs(values[rp] - values[r]) <= max_step
    ]
    return SwitchingGraph(len(values), edges, values)


def packet_drop_graph(h_max: int, *, self_loop_at_zero: bool = False) -> SwitchingGraph:
    """Delays that grow by one on a drop and snap to 0 on a delivery.

    Vertex `d` carries delay `d`. There is no dwelling at delay 0 unless
    `self_loop_at_zero` is set.
    """
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    edges = [(d, d + 1) for d in range(h_max)]
    edges += [(d, 0) for d in range(1, h_max + 1)]
    if self_loop_at_zero:
        edges.append((0, 0))
    return SwitchingGraph(h_max + 1, edges, range(h_max + 1))


def ring_graph(n: int) -> SwitchingGraph:
    """r -> r + 1 (mod n) plus a self-loop at every vertex."""
    if n < 1:
        raise ValueError("n must be >= 1")
    edges = {(r, (r + 1) % n) for r in range(n)} | {(r, r) for r in range(n)}
    return SwitchingGraph(n, edges)


def complete_graph(n: int, labels: Sequence[Any] | None = None) -> SwitchingGraph:
    """Unrestricted switching between `n` modes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return SwitchingGraph(n, itertools.product(range(n), repeat=2), labels)


def product_graph(g1: SwitchingGraph, g2: SwitchingGraph) -> SwitchingGraph:
    """Two independent switching signals as one.

    Vertex `(r1, r2)` is numbered `r1 * g2.num_modes + r2`.
    """
    n2 = g2.num_modes
    edges = [
        (r1 * n2 + r2, rp1 * n2 + rp2)
        for (r1, rp1), (r2, rp2) in itertools.product(g1.edges, g2.edges)
    ]
    labels1 = g1.labels or tuple(range(g1.num_modes))
    labels2 = g2.labels or tuple(range(n2))
    labels = [(a, b) for a in labels1 for b in labels2]
    return SwitchingGraph(g1.num_modes * n2, edges, labels)


def scenario_graph(scenario: int, h_max: int = 3) -> SwitchingGraph:
    """The delay models compared for a fixed maximal delay.

    1. the delay changes by at most 1 per step,
    2. by at most 2 per step,
    3. it grows by 1 or snaps to 0 (packet drop),
    4. it is unrestricted.
    """
    delays = list(range(h_max + 1))
    match scenario:
        case 1:
            return bounded_rate_graph(delays, 1)
        case 2:
            return bounded_rate_graph(delays, 2)
        case 3:
            return packet_drop_graph(h_max)
        case 4:
            return complete_graph(h_max + 1, delays)
    raise ValueError(f"unknown scenario {scenario}, expected 1..4")

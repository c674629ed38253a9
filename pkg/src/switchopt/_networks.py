"""Builders for the delay, ring and trivial networks."""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from ._graphs import SwitchingGraph, packet_drop_graph, product_graph, ring_graph
from ._systems import (
    ModeRealization,
    PlantMode,
    SwitchedPlant,
    SwitchedSystem,
    block_assemble,
    const_tf,
    first_order_tf,
)

__all__ = [
    "RING_PARAMETERS",
    "build_delay_system",
    "delay_plant",
    "ring_network",
    "trivial_network",
]

RING_PARAMETERS: tuple[tuple[float, float, float, float], ...] = (
    # (a, b, c, e) for [[0, 1/(z - a)], [-c/(z - b), e]]
    (0.2, 0.0, 1.0, 0.0),
    (0.9, 0.2, 0.5, 3.0),
    (-0.5, 0.3, 0.5, 0.0),
    (-0.2, 1.2, 1.0, 3.0),
)


def build_delay_system(h_max: int) -> SwitchedSystem:
    """A shift register whose mode `r` delays its input by `r` steps.

    The graph is left unset.
    """
    if h_max < 0:
        raise ValueError("h_max must be >= 0")
    if h_max == 0:
        return SwitchedSystem([const_tf(1.0)])
    A = np.eye(h_max, k=-1)
    B = np.eye(h_max, 1)
    modes = [ModeRealization(A, B, np.zeros((1, h_max)), [[1.0]])]
    modes += [
        ModeRealization(A, B, np.eye(1, h_max, r - 1), [[0.0]])
        for r in range(1, h_max + 1)
    ]
    return SwitchedSystem(modes)


def _default_delay_graph(h: int) -> SwitchingGraph:
    if h == 0:
        return SwitchingGraph(1, [(0, 0)], [0])
    return packet_drop_graph(h)


def delay_plant(
    h_before: int,
    h_after: int = 0,
    graph_before: SwitchingGraph | None = None,
    graph_after: SwitchingGraph | None = None,
) -> SwitchedPlant:
    """Time-varying delays on the query (u -> z) and gradient (w -> y) paths.

    Each path defaults to a packet-drop graph. With both delays present the
    modes are the pairs `(r1, r2)` in lexicographic order and the graph is
    their product.
    """
    before = build_delay_system(h_before)
    after = build_delay_system(h_after)
    g1 = graph_before or _default_delay_graph(h_before)
    g2 = graph_after or _default_delay_graph(h_after)
    if g1.num_modes != before.num_modes or g2.num_modes != after.num_modes:
        raise ValueError("a delay graph must have one vertex per delay value")
    graph = g1 if h_after == 0 and graph_after is None else product_graph(g1, g2)

    n1, n2 = h_before, h_after
    modes = []
    for d1 in before.modes:
        for d2 in after.modes:
            modes.append(
                PlantMode(
                    A=block_diag(d1.A, d2.A),
                    B1=np.vstack([np.zeros((n1, 1)), d2.B]),
                    B2=np.vstack([d1.B, np.zeros((n2, 1))]),
                    C1=np.hstack([d1.C, np.zeros((1, n2))]),
                    C2=np.hstack([np.zeros((1, n1)), d2.C]),
                    D11=[[0.0]],
                    D12=d1.D,
                    D21=d2.D,
                    D22=[[0.0]],
                )
            )
    return SwitchedPlant(modes, graph)


def ring_network() -> SwitchedPlant:
    """Four networks visited in a ring, each able to dwell."""
    modes = []
    for a, b, c, e in RING_PARAMETERS:
        real = block_assemble(
            [
                [const_tf(0.0), first_order_tf(1.0, a)],
                [first_order_tf(-c, b), const_tf(e)],
            ]
        )
        modes.append(PlantMode.from_realization(real, n_w=1, n_z=1))
    return SwitchedPlant(modes, ring_graph(4))


def trivial_network() -> SwitchedPlant:
    """z = u and y = w, with no state."""
    mode = PlantMode(
        A=np.zeros((0, 0)),
        B1=np.zeros((0, 1)),
        B2=np.zeros((0, 1)),
        C1=np.zeros((1, 0)),
        C2=np.zeros((1, 0)),
        D11=[[0.0]],
        D12=[[1.0]],
        D21=[[1.0]],
        D22=[[0.0]],
    )
    return SwitchedPlant([mode], SwitchingGraph(1, [(0, 0)]))

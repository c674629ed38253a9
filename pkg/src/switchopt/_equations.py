"""Least-squares solution of mode- and edge-indexed linear matrix equations."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import scipy.linalg
from attrs import frozen

from ._graphs import SwitchingGraph
from ._systems import Matrix

__all__ = ["EdgeEquationSolution", "solve_edge_equations"]


@frozen
class EdgeEquationSolution:
    unknowns: list[Matrix]
    residual: float
    data_norm: float

    def acceptable(self, tol: float) -> bool:
        return self.residual <= tol * (1.0 + self.data_norm)


def solve_edge_equations(
    graph: SwitchingGraph,
    edge_lhs: Sequence[Matrix],
    shift: Matrix,
    mode_lhs: Sequence[Matrix],
    mode_rhs: Matrix,
) -> EdgeEquationSolution:
    """Find U_r (k x d) with E_r U_r = F U_r' on edges and H_r U_r = R on modes.

    `edge_lhs` holds E_r, `shift` is F, `mode_lhs` holds H_r and `mode_rhs`
    is R. The minimum-norm least-squares solution is returned.
    """
    N = graph.num_modes
    k = shift.shape[1]
    d = mode_rhs.shape[1]
    n_edge = shift.shape[0]
    n_mode = mode_rhs.shape[0]
    eye_d = np.eye(d)
    edges = graph.sorted_edges()

    M = np.zeros((len(edges) * n_edge * d + N * n_mode * d, N * k * d))
    rhs = np.zeros(M.shape[0])
    row = 0
    block = k * d
    for r, rp in edges:
        rows = slice(row, row + n_edge * d)
        M[rows, r * block : (r + 1) * block] += np.kron(eye_d, edge_lhs[r])
        M[rows, rp * block : (rp + 1) * block] -= np.kron(eye_d, shift)
        row += n_edge * d
    for r in range(N):
        rows = slice(row, row + n_mode * d)
        M[rows, r * block : (r + 1) * block] = np.kron(eye_d, mode_lhs[r])
        rhs[rows] = mode_rhs.reshape(-1, order="F")
        row += n_mode * d

    if M.shape[1] == 0:
        solution = np.zeros(0)
    else:
        solution = scipy.linalg.lstsq(M, rhs)[0]
    residual = float(np.linalg.norm(M @ solution - rhs))
    data_norm = float(np.linalg.norm(np.column_stack([M, rhs])))
    unknowns = [
        solution[r * block : (r + 1) * block].reshape((k, d), order="F")
        for r in range(N)
    ]
    return EdgeEquationSolution(unknowns, residual, data_norm)

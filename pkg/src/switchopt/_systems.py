"""State-space realizations, switched systems and their interconnections."""

from __future__ import annotations

from collections.abc import Sequence
from typing import TypeVar, overload

import numpy as np
from attrs import evolve, field, frozen
from numpy.typing import ArrayLike, NDArray

from ._errors import ModelError, WellPosednessError
from ._graphs import SwitchingGraph, SwitchingPath

__all__ = [
    "Matrix",
    "ModeRealization",
    "PlantMode",
    "SwitchedPlant",
    "SwitchedSystem",
    "block_assemble",
    "const_tf",
    "first_order_tf",
    "kron_lift",
    "series",
    "star",
    "star_controller",
]

Matrix = NDArray[np.float64]

# Algebraic loops whose matrix is worse conditioned than this are rejected.
_COND_LIMIT = 1e12


def _as_matrix(value: ArrayLike) -> Matrix:
    arr = np.array(value, dtype=np.float64, ndmin=2)
    if arr.ndim != 2:
        raise ModelError(f"expected a matrix, got an array of shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _frozen_copy(arr: Matrix, shape: tuple[int, int]) -> Matrix:
    out = np.array(arr, dtype=np.float64).reshape(shape)
    out.setflags(write=False)
    return out


def _input_rows(inputs: ArrayLike, width: int) -> Matrix:
    """Inputs as a (T, width) array; a flat sequence holds T * width values."""
    u = np.asarray(inputs, dtype=np.float64)
    if u.ndim == 2 or width == 0:
        return u.reshape(len(u), width)
    return u.reshape(-1, width)


def _stack_rows(rows: list[Matrix], width: int) -> Matrix:
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


@frozen(eq=False)
class ModeRealization:
    """One discrete-time mode: x⁺ = A x + B u, y = C x + D u.

    Empty blocks are accepted in any shape (for instance `[]`) and are
    reshaped from the dimensions implied by `D` and `A`.
    """

    A: Matrix = field(converter=_as_matrix)
    B: Matrix = field(converter=_as_matrix)
    C: Matrix = field(converter=_as_matrix)
    D: Matrix = field(converter=_as_matrix)

    def __attrs_post_init__(self) -> None:
        n = self.A.shape[0] if self.A.size else 0
        n_y, n_u = self.D.shape
        if self.A.size == 0:
            object.__setattr__(self, "A", _frozen_copy(self.A, (0, 0)))
        if self.B.size == 0:
            object.__setattr__(self, "B", _frozen_copy(self.B, (n, n_u)))
        if self.C.size == 0:
            object.__setattr__(self, "C", _frozen_copy(self.C, (n_y, n)))
        if self.A.shape != (n, n):
            raise ModelError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, n_u):
            raise ModelError(f"B has shape {self.B.shape}, expected {(n, n_u)}")
        if self.C.shape != (n_y, n):
            raise ModelError(f"C has shape {self.C.shape}, expected {(n_y, n)}")
        for name in ("A", "B", "C", "D"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ModelError(f"{name} has non-finite entries")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.D.shape[1]

    @property
    def n_y(self) -> int:
        return self.D.shape[0]

    @property
    def matrix(self) -> Matrix:
        """The packed [[A, B], [C, D]] block."""
        return np.block([[self.A, self.B], [self.C, self.D]])

    def step(self, x: ArrayLike, u: ArrayLike) -> tuple[Matrix, Matrix]:
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        return self.A @ x + self.B @ u, self.C @ x + self.D @ u

    def simulate(
        self, inputs: ArrayLike, x0: ArrayLike | None = None
    ) -> tuple[Matrix, Matrix]:
        """Run the recursion on a (T, n_u) input array.

        Returns the (T + 1, n) states and the (T, n_y) outputs.
        """
        u = _input_rows(inputs, self.n_u)
        x = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=np.float64)
        states = [x]
        outputs = []
        for u_k in u:
            x, y = self.step(x, u_k)
            states.append(x)
            outputs.append(y)
        return _stack_rows(states, self.n), _stack_rows(outputs, self.n_y)

    def kron(self, d: int) -> ModeRealization:
        """Replace every block by block ⊗ I_d."""
        if d < 1:
            raise ValueError("d must be >= 1")
        eye = np.eye(d)
        return ModeRealization(
            np.kron(self.A, eye),
            np.kron(self.B, eye),
            np.kron(self.C, eye),
            np.kron(self.D, eye),
        )

    def allclose(self, other: ModeRealization, atol: float = 1e-12) -> bool:
        return all(
            a.shape == b.shape and np.allclose(a, b, atol=atol, rtol=0)
            for a, b in zip(
                (self.A, self.B, self.C, self.D),
                (other.A, other.B, other.C, other.D),
                strict=True,
            )
        )


@frozen(eq=False)
class PlantMode:
    """One mode of a network with inputs (w, u) and outputs (z, y)."""

    A: Matrix = field(converter=_as_matrix)
    B1: Matrix = field(converter=_as_matrix)
    B2: Matrix = field(converter=_as_matrix)
    C1: Matrix = field(converter=_as_matrix)
    C2: Matrix = field(converter=_as_matrix)
    D11: Matrix = field(converter=_as_matrix)
    D12: Matrix = field(converter=_as_matrix)
    D21: Matrix = field(converter=_as_matrix)
    D22: Matrix = field(converter=_as_matrix)

    def __attrs_post_init__(self) -> None:
        n = self.A.shape[0] if self.A.size else 0
        n_z, n_w = self.D11.shape
        n_y, n_u = self.D22.shape
        expected = {
            "A": (n, n),
            "B1": (n, n_w),
            "B2": (n, n_u),
            "C1": (n_z, n),
            "C2": (n_y, n),
            "D12": (n_z, n_u),
            "D21": (n_y, n_w),
        }
        for name, shape in expected.items():
            value = getattr(self, name)
            if value.size == 0 and 0 in shape:
                object.__setattr__(self, name, _frozen_copy(value, shape))
            elif value.shape != shape:
                raise ModelError(f"{name} has shape {value.shape}, expected {shape}")
        for name in expected.keys() | {"D11", "D22"}:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ModelError(f"{name} has non-finite entries")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_w(self) -> int:
        return self.D11.shape[1]

    @property
    def n_z(self) -> int:
        return self.D11.shape[0]

    @property
    def n_u(self) -> int:
        return self.D22.shape[1]

    @property
    def n_y(self) -> int:
        return self.D22.shape[0]

    @property
    def realization(self) -> ModeRealization:
        """The mode as a single system from [w; u] to [z; y]."""
        return ModeRealization(
            self.A,
            np.hstack([self.B1, self.B2]),
            np.vstack([self.C1, self.C2]),
            np.block([[self.D11, self.D12], [self.D21, self.D22]]),
        )

    @classmethod
    def from_realization(
        cls, real: ModeRealization, n_w: int, n_z: int
    ) -> PlantMode:
        """Split a realization whose first `n_w` inputs and `n_z` outputs are w, z."""
        B, C, D = real.B, real.C, real.D
        return cls(
            real.A,
            B[:, :n_w],
            B[:, n_w:],
            C[:n_z],
            C[n_z:],
            D[:n_z, :n_w],
            D[:n_z, n_w:],
            D[n_z:, :n_w],
            D[n_z:, n_w:],
        )

    def kron(self, d: int) -> PlantMode:
        return PlantMode.from_realization(
            self.realization.kron(d), self.n_w * d, self.n_z * d
        )


def _dims(real: ModeRealization) -> tuple[int, int, int]:
    return real.n, real.n_u, real.n_y


@frozen(eq=False)
class SwitchedSystem:
    """Modes sharing one state, input and output dimension, plus their graph.

    The graph may be left unset by builders that produce bare modes.
    """

    modes: tuple[ModeRealization, ...] = field(converter=tuple)
    graph: SwitchingGraph | None = None

    def __attrs_post_init__(self) -> None:
        if not self.modes:
            raise ModelError("a switched system needs at least one mode")
        dims = {_dims(m) for m in self.modes}
        if len(dims) != 1:
            raise ModelError(f"modes disagree on (n, n_u, n_y): {sorted(dims)}")
        if self.graph is not None and self.graph.num_modes != len(self.modes):
            raise ModelError(
                f"{len(self.modes)} modes but the graph has {self.graph.num_modes}"
            )

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def n_u(self) -> int:
        return self.modes[0].n_u

    @property
    def n_y(self) -> int:
        return self.modes[0].n_y

    def with_graph(self, graph: SwitchingGraph) -> SwitchedSystem:
        return evolve(self, graph=graph)

    def require_graph(self) -> SwitchingGraph:
        if self.graph is None:
            raise ModelError("this system has no switching graph attached")
        return self.graph

    def kron(self, d: int) -> SwitchedSystem:
        return SwitchedSystem([m.kron(d) for m in self.modes], self.graph)

    def simulate(
        self, path: SwitchingPath, inputs: ArrayLike, x0: ArrayLike | None = None
    ) -> tuple[Matrix, Matrix]:
        """Run the switched recursion along `path` (one input row per step)."""
        u = _input_rows(inputs, self.n_u)
        if len(u) > len(path):
            raise ValueError("the path is shorter than the input sequence")
        x = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=np.float64)
        states = [x]
        outputs = []
        for mode, u_k in zip(path.modes, u, strict=False):
            x, y = self.modes[mode].step(x, u_k)
            states.append(x)
            outputs.append(y)
        return _stack_rows(states, self.n), _stack_rows(outputs, self.n_y)


@frozen(eq=False)
class SwitchedPlant:
    """A switched network P_r with oracle channel w -> z of width d."""

    modes: tuple[PlantMode, ...] = field(converter=tuple)
    graph: SwitchingGraph

    def __attrs_post_init__(self) -> None:
        if not self.modes:
            raise ModelError("a switched plant needs at least one mode")
        dims = {(m.n, m.n_w, m.n_z, m.n_u, m.n_y) for m in self.modes}
        if len(dims) != 1:
            raise ModelError(f"plant modes disagree on their dimensions: {dims}")
        first = self.modes[0]
        if first.n_w != first.n_z:
            raise ModelError(
                f"oracle channel widths differ: w has {first.n_w}, z has {first.n_z}"
            )
        if self.graph.num_modes != len(self.modes):
            raise ModelError(
                f"{len(self.modes)} modes but the graph has {self.graph.num_modes}"
            )

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(n, d, n_u, n_y)."""
        first = self.modes[0]
        return first.n, first.n_w, first.n_u, first.n_y

    def with_graph(self, graph: SwitchingGraph) -> SwitchedPlant:
        return evolve(self, graph=graph)

    def kron(self, d: int) -> SwitchedPlant:
        return SwitchedPlant([m.kron(d) for m in self.modes], self.graph)


def series(first: ModeRealization, second: ModeRealization) -> ModeRealization:
    """The cascade u -> first -> second -> y, state [second; first]."""
    if first.n_y != second.n_u:
        raise ModelError(
            f"cannot cascade: first has {first.n_y} outputs,"
            f" second has {second.n_u} inputs"
        )
    A = np.block(
        [
            [second.A, second.B @ first.C],
            [np.zeros((first.n, second.n)), first.A],
        ]
    )
    B = np.vstack([second.B @ first.D, first.B])
    C = np.hstack([second.C, second.D @ first.C])
    return ModeRealization(A, B, C, second.D @ first.D)


def star(
    outer: ModeRealization,
    inner: ModeRealization,
    n_loop_out: int,
    n_loop_in: int,
    *,
    mode: int = 0,
) -> ModeRealization:
    """Close the last `n_loop_out` outputs of `outer` through `inner`.

    `outer` maps [w; u] to [z; y] where u has width `n_loop_in` and y
    width `n_loop_out`. `inner` maps [y; v] to [u; ṽ]. The result maps
    [w; v] to [z; ṽ] with state [outer state; inner state].
    """
    n_o, n_i = outer.n, inner.n
    n_w = outer.n_u - n_loop_in
    n_z = outer.n_y - n_loop_out
    n_v = inner.n_u - n_loop_out
    if min(n_w, n_z, n_v, inner.n_y - n_loop_in) < 0:
        raise ModelError("loop channels are wider than the systems they close")

    Bw, Bu = outer.B[:, :n_w], outer.B[:, n_w:]
    Cz, Cy = outer.C[:n_z], outer.C[n_z:]
    Dzw, Dzu = outer.D[:n_z, :n_w], outer.D[:n_z, n_w:]
    Dyw, Dyu = outer.D[n_z:, :n_w], outer.D[n_z:, n_w:]
    By, Bv = inner.B[:, :n_loop_out], inner.B[:, n_loop_out:]
    Cu, Cv = inner.C[:n_loop_in], inner.C[n_loop_in:]
    Duy, Duv = inner.D[:n_loop_in, :n_loop_out], inner.D[:n_loop_in, n_loop_out:]
    Dvy, Dvv = inner.D[n_loop_in:, :n_loop_out], inner.D[n_loop_in:, n_loop_out:]

    loop = np.eye(n_loop_in) - Duy @ Dyu
    if n_loop_in and np.linalg.cond(loop) > _COND_LIMIT:
        raise WellPosednessError("ill-posed algebraic loop", mode)

    def zeros(rows: int, cols: int) -> Matrix:
        return np.zeros((rows, cols))

    # u and y as linear maps of [x_outer; x_inner; w; v].
    u_map = np.linalg.solve(
        loop, np.hstack([Duy @ Cy, Cu, Duy @ Dyw, Duv])
    ) if n_loop_in else zeros(0, n_o + n_i + n_w + n_v)
    y_map = np.hstack([Cy, zeros(n_loop_out, n_i), Dyw, zeros(n_loop_out, n_v)])
    y_map = y_map + Dyu @ u_map

    x_outer = np.hstack([outer.A, zeros(n_o, n_i), Bw, zeros(n_o, n_v)]) + Bu @ u_map
    x_inner = np.hstack([zeros(n_i, n_o), inner.A, zeros(n_i, n_w), Bv]) + By @ y_map
    z = np.hstack([Cz, zeros(n_z, n_i), Dzw, zeros(n_z, n_v)]) + Dzu @ u_map
    v = np.hstack([zeros(Cv.shape[0], n_o), Cv, zeros(Cv.shape[0], n_w), Dvv])
    v = v + Dvy @ y_map

    packed = np.vstack([x_outer, x_inner, z, v])
    N = n_o + n_i
    return ModeRealization(
        packed[:N, :N], packed[:N, N:], packed[N:, :N], packed[N:, N:]
    )


def star_controller(plant: SwitchedPlant, controller: SwitchedSystem) -> SwitchedSystem:
    """The closed loop P_r ⋆ K_r over w -> z, state [x; ξ].

    A single-mode controller is used in every plant mode.
    """
    _, _, n_u, n_y = plant.dims
    if controller.n_u != n_y or controller.n_y != n_u:
        raise ModelError(
            f"controller maps {controller.n_u} -> {controller.n_y},"
            f" the plant needs {n_y} -> {n_u}"
        )
    if controller.num_modes not in (1, plant.num_modes):
        raise ModelError(
            f"controller has {controller.num_modes} modes,"
            f" the plant has {plant.num_modes}"
        )
    modes = []
    for r, plant_mode in enumerate(plant.modes):
        k_mode = controller.modes[r if controller.num_modes > 1 else 0]
        modes.append(star(plant_mode.realization, k_mode, n_y, n_u, mode=r))
    return SwitchedSystem(modes, plant.graph)


def first_order_tf(gain: float, pole: float) -> ModeRealization:
    """gain / (z - pole)."""
    return ModeRealization([[pole]], [[1.0]], [[gain]], [[0.0]])


def const_tf(gain: float) -> ModeRealization:
    """A static gain with no state."""
    return ModeRealization(
        np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[gain]]
    )


def block_assemble(entries: Sequence[Sequence[ModeRealization]]) -> ModeRealization:
    """Wire a grid of SISO systems into one MIMO system.

    Entry `(i, j)` maps input `j` to output `i`. Entry states are stacked
    column by column.
    """
    rows = len(entries)
    cols = len(entries[0]) if rows else 0
    if not rows or any(len(row) != cols for row in entries):
        raise ModelError("block_assemble needs a non-empty rectangular grid")
    order = [(i, j) for j in range(cols) for i in range(rows)]
    for i, j in order:
        if (entries[i][j].n_u, entries[i][j].n_y) != (1, 1):
            raise ModelError(f"grid entry ({i + 1}, {j + 1}) is not SISO")
    n = sum(entries[i][j].n for i, j in order)
    A = np.zeros((n, n))
    B = np.zeros((n, cols))
    C = np.zeros((rows, n))
    D = np.zeros((rows, cols))
    offset = 0
    for i, j in order:
        e = entries[i][j]
        block = slice(offset, offset + e.n)
        A[block, block] = e.A
        B[block, j] = e.B[:, 0]
        C[i, block] = e.C[0]
        D[i, j] = e.D[0, 0]
        offset += e.n
    return ModeRealization(A, B, C, D)


_S = TypeVar("_S", SwitchedSystem, SwitchedPlant)


@overload
def kron_lift(sys: SwitchedSystem, d: int) -> SwitchedSystem: ...
@overload
def kron_lift(sys: SwitchedPlant, d: int) -> SwitchedPlant: ...
def kron_lift(sys: _S, d: int) -> _S:
    """Lift a scalar-channel model to oracle width `d`."""
    return sys.kron(d)

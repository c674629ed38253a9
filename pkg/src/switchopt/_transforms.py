"""Sector loop transformation, exponential weighting and Zames-Falb filters.

A gradient `w = ∇f(z)` of an m-strongly convex, L-smooth function is
turned into a passive relation between the loop signals

    p = L z - w,    q = w - m z,

and ρ-weighting multiplies every signal at time k by ρ^-k. The linear
side of the loop then maps q to p, and a causal FIR multiplier Ψ(λ) is
prepended on p.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence

import numpy as np
from attrs import field, frozen
from numpy.typing import ArrayLike

from ._errors import ModelError
from ._systems import Matrix, ModeRealization, SwitchedSystem, series

__all__ = [
    "ADMISSIBILITY_MARGIN",
    "FilterCoefficients",
    "SectorSpec",
    "check_admissible",
    "dissipation_partial_sums",
    "exp_weight_signals",
    "filtered_loop",
    "filtered_loop_basis",
    "inverse_loop_signal_map",
    "loop_signal_map",
    "rho_weight",
    "rho_weight_and_loop",
    "zf_realization",
]

log = logging.getLogger(__name__)

ADMISSIBILITY_MARGIN = 1e-9


def _check_rho(rho: float) -> None:
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")


@frozen
class SectorSpec:
    """Gradients of m-strongly convex functions with L-Lipschitz gradients."""

    m: float
    L: float

    def __attrs_post_init__(self) -> None:
        if not 0.0 < self.m < self.L < np.inf:
            raise ValueError(f"need 0 < m < L < inf, got m={self.m}, L={self.L}")

    @property
    def condition_number(self) -> float:
        return self.L / self.m


def _as_coefficients(value: Sequence[float] | ArrayLike) -> tuple[float, ...]:
    coeffs = tuple(float(v) for v in np.ravel(np.asarray(value, dtype=np.float64)))
    if not coeffs:
        raise ValueError("a filter needs at least the coefficient λ_0")
    return coeffs


@frozen
class FilterCoefficients:
    """Taps λ_0 .. λ_ν of a causal FIR multiplier, with λ_ν <= 0 for ν >= 1."""

    coefficients: tuple[float, ...] = field(converter=_as_coefficients)

    def __attrs_post_init__(self) -> None:
        if any(c > 0.0 for c in self.coefficients[1:]):
            raise ValueError(f"filter tail must be non-positive: {self.coefficients}")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("filter coefficients must be finite")

    @classmethod
    def identity(cls, order: int = 0) -> FilterCoefficients:
        if order < 0:
            raise ValueError("order must be >= 0")
        return cls((1.0,) + (0.0,) * order)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __len__(self) -> int:
        return len(self.coefficients)

    def as_array(self) -> Matrix:
        return np.array(self.coefficients)

    def weighted_sum(self, rho: float) -> float:
        """Σ ρ^-ν λ_ν."""
        powers = float(rho) ** -np.arange(len(self.coefficients))
        return float(np.dot(powers, self.coefficients))


def check_admissible(
    lam: FilterCoefficients | Sequence[float],
    rho: float,
    margin: float = ADMISSIBILITY_MARGIN,
) -> bool:
    """Whether `lam` is a valid multiplier for signals weighted by ρ."""
    _check_rho(rho)
    coeffs = np.asarray(
        lam.coefficients if isinstance(lam, FilterCoefficients) else lam, dtype=float
    )
    if np.any(coeffs[1:] > 0.0):
        return False
    powers = float(rho) ** -np.arange(len(coeffs))
    return bool(np.dot(powers, coeffs) >= margin)


def _fir(coeffs: Sequence[float] | Matrix, d: int) -> ModeRealization:
    taps = np.asarray(coeffs, dtype=np.float64)
    order = len(taps) - 1
    real = ModeRealization(
        np.eye(order, k=-1),
        np.eye(order, 1),
        taps[1:].reshape(1, order),
        [[taps[0]]],
    )
    return real if d == 1 else real.kron(d)


def zf_realization(lam: FilterCoefficients, d: int = 1) -> ModeRealization:
    """The shift-register realization of Ψ(λ), acting on `d` channels.

    Only the output blocks depend on λ.
    """
    return _fir(lam.coefficients, d)


def loop_signal_map(
    w: ArrayLike, z: ArrayLike, sector: SectorSpec
) -> tuple[Matrix, Matrix]:
    """(w, z) -> (p, q) with p = L z - w and q = w - m z."""
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return sector.L * z - w, w - sector.m * z


def inverse_loop_signal_map(
    p: ArrayLike, q: ArrayLike, sector: SectorSpec
) -> tuple[Matrix, Matrix]:
    """(p, q) -> (w, z)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    z = (p + q) / (sector.L - sector.m)
    return q + sector.m * z, z


def exp_weight_signals(seq: ArrayLike, rho: float) -> Matrix:
    """Multiply element `k` of a sequence by ρ^-k."""
    _check_rho(rho)
    arr = np.asarray(seq, dtype=np.float64)
    weights = float(rho) ** -np.arange(len(arr), dtype=np.float64)
    return arr * weights.reshape((-1,) + (1,) * (arr.ndim - 1))


def _require_strictly_proper(sys: SwitchedSystem) -> None:
    for r, mode in enumerate(sys.modes):
        if np.any(mode.D != 0.0):
            raise ModelError(
                f"the algorithm has direct feedthrough in mode {r + 1};"
                " rates are certified for D = 0 only"
            )


def rho_weight(sys: SwitchedSystem, rho: float) -> SwitchedSystem:
    """Scale the state update by ρ^-1."""
    _check_rho(rho)
    return SwitchedSystem(
        [ModeRealization(m.A / rho, m.B / rho, m.C, m.D) for m in sys.modes],
        sys.graph,
    )


def rho_weight_and_loop(
    sys: SwitchedSystem, sector: SectorSpec, rho: float
) -> SwitchedSystem:
    """The loop-transformed system q -> p, weighted by ρ.

    Â = (Ã + m B̃C̃)/ρ, B̂ = B̃/ρ, Ĉ = (L - m)C̃ and D̂ = -I.
    """
    _check_rho(rho)
    _require_strictly_proper(sys)
    m, L = sector.m, sector.L
    modes = [
        ModeRealization(
            (mode.A + m * mode.B @ mode.C) / rho,
            mode.B / rho,
            (L - m) * mode.C,
            -np.eye(mode.n_y),
        )
        for mode in sys.modes
    ]
    return SwitchedSystem(modes, sys.graph)


def filtered_loop(sys_hat: SwitchedSystem, lam: FilterCoefficients) -> SwitchedSystem:
    """Ψ(λ) placed after every mode, state [filter; plant]."""
    fir = zf_realization(lam, sys_hat.n_y)
    return SwitchedSystem([series(mode, fir) for mode in sys_hat.modes], sys_hat.graph)


def filtered_loop_basis(
    sys_hat: SwitchedSystem, order: int
) -> list[tuple[Matrix, Matrix, list[Matrix], list[Matrix]]]:
    """The filtered loop split into λ-free and λ-linear parts.

    For every mode returns `(A, B, Cs, Ds)` such that the cascade with
    coefficients λ has C = Σ λ_i Cs[i] and D = Σ λ_i Ds[i]. A and B do not
    depend on λ because D̂ = -I.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    d = sys_hat.n_y
    basis = np.eye(order + 1)
    out = []
    for mode in sys_hat.modes:
        parts = [series(mode, _fir(e, d)) for e in basis]
        out.append(
            (parts[0].A, parts[0].B, [p.C for p in parts], [p.D for p in parts])
        )
    return out


def dissipation_partial_sums(
    gradient: Callable[[Matrix], Matrix],
    z: ArrayLike,
    sector: SectorSpec,
    rho: float,
    lam: FilterCoefficients,
) -> Matrix:
    """Running sums of q̄_kᵀ (Ψ(λ) p̄)_k along the iterates `z`.

    `gradient` must vanish at the origin. For admissible λ every partial
    sum is non-negative.
    """
    z = np.asarray(z, dtype=np.float64)
    z = z.reshape(len(z), -1)
    w = np.array([np.ravel(gradient(z_k)) for z_k in z])
    p, q = loop_signal_map(w, z, sector)
    p_bar = exp_weight_signals(p, rho)
    q_bar = exp_weight_signals(q, rho)
    filtered = np.zeros_like(p_bar)
    for nu, coeff in enumerate(lam.coefficients):
        if nu == 0:
            filtered += coeff * p_bar
        elif nu < len(p_bar):
            filtered[nu:] += coeff * p_bar[:-nu]
    return np.cumsum(np.einsum("ki,ki->k", q_bar, filtered))

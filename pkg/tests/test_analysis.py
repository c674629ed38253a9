"""Rate certification of closed loops."""

import numpy as np
from pytest import mark, raises

from switchopt import (
    BisectionConfig,
    Diverged,
    FilterCoefficients,
    ModelError,
    ModeRealization,
    RateCertificate,
    RegulationError,
    SectorSpec,
    SwitchedSystem,
    SwitchingGraph,
    baseline_gd,
    baseline_tm,
    bisect_rate,
    delay_plant,
    feasible_at_rate,
    find_regulation_witness,
    kron_lift,
    rate_below_one,
    star_controller,
    threshold_search,
    trivial_network,
)

SECTOR = SectorSpec(1.0, 10.0)
GD_RATE = 9 / 11
SELF_LOOP = SwitchingGraph(1, [(0, 0)])


def gd(alpha: float) -> SwitchedSystem:
    mode = ModeRealization([[1.0]], [[-alpha]], [[1.0]], [[0.0]])
    return SwitchedSystem([mode], SELF_LOOP)


def test_gradient_descent_witness():
    witness = find_regulation_witness(baseline_gd(SECTOR))
    assert np.allclose(witness.theta[0], 1.0)
    assert witness.residual < 1e-12


def test_missing_witness():
    """An output blind to the state cannot track a constant query."""
    blind = SwitchedSystem(
        [ModeRealization([[1.0]], [[1.0]], [[0.0]], [[0.0]])], SELF_LOOP
    )
    with raises(RegulationError):
        find_regulation_witness(blind)


def test_witness_requires_strictly_proper_loop():
    loop = SwitchedSystem(
        [ModeRealization([[1.0]], [[1.0]], [[1.0]], [[0.1]])], SELF_LOOP
    )
    with raises(ModelError, match="feedthrough"):
        find_regulation_witness(loop)


@mark.parametrize("rho, feasible", [(0.9, True), (0.7, False)])
def test_feasible_at_rate_gradient_descent(rho: float, feasible: bool):
    check = feasible_at_rate(baseline_gd(SECTOR), SECTOR, rho)
    assert check.feasible is feasible


def test_feasibility_is_monotone():
    loop = baseline_gd(SECTOR)
    for rho in np.linspace(0.84, 1.0, 5):
        assert feasible_at_rate(loop, SECTOR, float(rho)).feasible


def test_inadmissible_multiplier_is_rejected_early():
    check = feasible_at_rate(
        baseline_gd(SECTOR), SECTOR, 0.5, lam=FilterCoefficients((1.0, -1.0))
    )
    assert not check.feasible
    assert check.solution.solver is None


def test_bisect_gradient_descent():
    """The certified rate of tuned GD is (L - m)/(L + m)."""
    cert = bisect_rate(baseline_gd(SECTOR), SECTOR)
    assert isinstance(cert, RateCertificate)
    assert abs(cert.rho - GD_RATE) < 1e-3
    assert cert.lam.order == 0
    assert abs(cert.lam.coefficients[0] - 1.0) < 1e-6
    assert len(cert.storages) == 1
    assert np.linalg.eigvalsh(cert.storages[0]).min() > 0


def test_bisect_respects_tolerance():
    cert = bisect_rate(
        baseline_gd(SECTOR), SECTOR, bisection=BisectionConfig(rho_tol=1e-2)
    )
    assert isinstance(cert, RateCertificate)
    assert GD_RATE - 1e-3 <= cert.rho <= GD_RATE + 2e-2


def test_common_storage_single_mode():
    cert = bisect_rate(baseline_gd(SECTOR), SECTOR, common_storage=True)
    assert isinstance(cert, RateCertificate)
    assert cert.common_storage
    assert abs(cert.rho - GD_RATE) < 1e-3


def test_lifted_rate_is_unchanged():
    """Certificates do not depend on the oracle dimension."""
    cert = bisect_rate(kron_lift(baseline_gd(SECTOR), 2), SECTOR)
    assert isinstance(cert, RateCertificate)
    assert abs(cert.rho - GD_RATE) < 1e-3


def test_diverging_step_size():
    """GD with step 1/4 overshoots on L = 10 and is not certified."""
    result = bisect_rate(gd(0.25), SECTOR)
    assert isinstance(result, Diverged)
    assert not result
    assert not rate_below_one(gd(0.25), SECTOR)
    assert rate_below_one(baseline_gd(SECTOR), SECTOR)


def test_triple_momentum_with_free_multiplier():
    loop = star_controller(trivial_network(), baseline_tm(SECTOR))
    cert = bisect_rate(loop, SECTOR, nu_max=3)
    assert isinstance(cert, RateCertificate)
    assert cert.rho <= 1 - np.sqrt(0.1) + 0.02
    assert abs(cert.lam.coefficients[0] - 1.0) < 1e-6
    assert all(c <= 0 for c in cert.lam.coefficients[1:])


def test_delayed_gradient_descent():
    """A small step keeps GD convergent under a delay of at most one."""
    sector = SectorSpec(1.0, 2.0)
    loop = star_controller(delay_plant(1), gd(0.05))
    cert = bisect_rate(loop, sector)
    assert isinstance(cert, RateCertificate)
    assert cert.rho < 1.0
    assert len(cert.storages) == 2


def test_threshold_search():
    assert abs(threshold_search(lambda L: L < 3.0, 1.0, 5.0, tol=1e-3) - 3.0) < 1e-3
    assert threshold_search(lambda L: True, 1.0, 5.0) is None
    with raises(ValueError):
        threshold_search(lambda L: False, 1.0, 5.0)


def test_gradient_descent_has_no_threshold():
    """Tuned GD converges for every condition number."""

    def certified(L: float) -> bool:
        sector = SectorSpec(1.0, L)
        return rate_below_one(baseline_gd(sector), sector)

    assert threshold_search(certified, 1.5, 50.0) is None

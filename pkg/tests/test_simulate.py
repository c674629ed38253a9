"""Test functions, deployment and empirical rates."""

import numpy as np
from pytest import mark, raises

import switchopt
from switchopt import (
    GraphError,
    ModelError,
    ModeRealization,
    SectorSpec,
    SimulationTrace,
    SwitchedSystem,
    SwitchingGraph,
    SwitchingPath,
    TestFunction,
    baseline_gd,
    baseline_tm,
    bounded_rate_graph,
    delay_plant,
    deploy,
    empirical_prefactor,
    empirical_rate,
    make_function,
    minimize_oracle,
    monte_carlo,
    packet_drop_graph,
    random_path,
    ring_graph,
    star_controller,
    trivial_network,
)

SECTOR = SectorSpec(1.0, 10.0)
SELF_LOOP = SwitchingGraph(1, [(0, 0)])


def quadratic(
    diag: list[float], sector: SectorSpec = SECTOR, b: list[float] | None = None
) -> TestFunction:
    b = np.zeros(len(diag)) if b is None else np.asarray(b, dtype=float)
    return TestFunction(np.diag(diag), b, sector, sector.L)


def geometric_trace(ratio: float, steps: int = 50) -> SimulationTrace:
    distances = ratio ** np.arange(steps)
    return SimulationTrace(
        modes=np.zeros(steps, dtype=np.int64),
        iterates=distances.reshape(-1, 1),
        gradients=distances.reshape(-1, 1),
        distances=distances,
        z_star=np.zeros(1),
    )


def test_gradient_vanishes_at_origin():
    f = make_function(SECTOR, d=4, seed=0)
    f = TestFunction(f.Lambda, np.zeros(4), SECTOR, f.L_prime)
    assert np.allclose(f.gradient(np.zeros(4)), 0.0)


def test_value_at_origin():
    sector = SectorSpec(1.0, 2.0)
    f = TestFunction(1.2 * np.eye(2), np.zeros(2), sector, 1.6)
    assert np.isclose(f.value(np.zeros(2)), 0.4 * np.log(4))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    f = make_function(SECTOR, d=3, seed=rng)
    h = 1e-6
    for _ in range(20):
        z = rng.normal(size=3)
        numeric = np.array(
            [(f.value(z + h * e) - f.value(z - h * e)) / (2 * h) for e in np.eye(3)]
        )
        exact = f.gradient(z)
        assert np.linalg.norm(numeric - exact) <= 1e-6 * max(1.0, np.linalg.norm(exact))


def test_curvature_lies_in_the_sector():
    rng = np.random.default_rng(6)
    f = make_function(SECTOR, d=5, seed=rng)
    for _ in range(10):
        eigs = np.linalg.eigvalsh(f.hessian(rng.normal(size=5) * 3))
        assert eigs.min() >= SECTOR.m - 1e-9
        assert eigs.max() <= SECTOR.L + 1e-9


def test_make_function_spectrum():
    f = make_function(SECTOR, L_prime=4.0, d=6, seed=1)
    eigs = np.linalg.eigvalsh(f.Lambda)
    assert eigs.min() >= 1.0 - 1e-9
    assert eigs.max() <= 4.0 + 1e-9
    assert make_function(SECTOR, seed=1).L_prime == 5.5
    with raises(ValueError):
        make_function(SECTOR, L_prime=12.0)
    with raises(ValueError, match="must lie in"):
        make_function(SECTOR, L_prime=1.0)


def test_minimize_pure_quadratic():
    f = quadratic([2.0, 5.0], b=[1.0, -1.0])
    assert np.allclose(minimize_oracle(f), [-0.5, 0.2])
    assert np.allclose(minimize_oracle(quadratic([2.0, 5.0])), 0.0)


def test_minimize_oracle_is_public():
    assert "minimize_oracle" in switchopt.__all__


def test_minimize_generic_function(caplog):
    f = make_function(SECTOR, d=8, seed=3)
    z_star = minimize_oracle(f)
    assert np.linalg.norm(f.gradient(z_star)) <= 1e-12 * (1 + np.linalg.norm(f.b))
    assert "Newton stopped" not in caplog.text


def test_deploy_gradient_descent_on_quadratic():
    """On f = ½z², GD contracts by 1 - α per step."""
    alpha = 0.3
    loop = SwitchedSystem([ModeRealization([[1.0]], [[-alpha]], [[1.0]], [[0.0]])])
    path = SwitchingPath([0] * 20, SELF_LOOP)
    trace = deploy(loop.with_graph(SELF_LOOP), quadratic([1.0]), path, [1.0])
    assert np.allclose(trace.iterates.ravel(), (1 - alpha) ** np.arange(20))
    assert not trace.diverged


def test_deploy_triple_momentum_matches_recursion():
    sector = SectorSpec(1.0, 4.0)
    curvature = 4.0
    f = quadratic([curvature], sector)
    loop = star_controller(trivial_network(), baseline_tm(sector))
    trace = deploy(loop, f, SwitchingPath([0] * 30, SELF_LOOP), [1.0, 0.0])

    alpha, beta, gamma = 0.375, 1 / 6, 1 / 9
    xi_prev, xi = 1.0, 1.0
    expected = []
    for _ in range(30):
        y = (1 + gamma) * xi - gamma * xi_prev
        expected.append(y)
        xi_prev, xi = xi, (1 + beta) * xi - beta * xi_prev - alpha * curvature * y
    assert np.allclose(trace.iterates.ravel(), expected)


def test_deploy_with_constant_delay():
    """Holding the largest delay is gradient descent on stale queries."""
    sector = SectorSpec(1.0, 3.0)
    f = quadratic([2.0], sector, b=[1.0])
    alpha = 0.1
    plant = delay_plant(2, graph_before=bounded_rate_graph([0, 1, 2], 1))
    gd = SwitchedSystem([ModeRealization([[1.0]], [[-alpha]], [[1.0]], [[0.0]])])
    loop = star_controller(plant, gd)
    path = SwitchingPath([2] * 40, plant.graph)
    trace = deploy(loop, f, path, [0.0, 0.0, 1.0])

    xi = [0.0, 0.0, 1.0]
    for k in range(40):
        xi.append(xi[k + 2] - alpha * (2.0 * xi[k] + 1.0))
    assert np.allclose(trace.iterates.ravel(), xi[:40])


def test_deploy_rejects_a_foreign_path():
    loop = star_controller(trivial_network(), baseline_gd(SECTOR))
    foreign = SwitchingPath([0, 1, 0], SwitchingGraph(2, [(0, 1), (1, 0)]))
    with raises(ModelError, match="different switching graph"):
        deploy(loop, quadratic([1.0]), foreign)


def test_deploy_detects_divergence():
    loop = SwitchedSystem([ModeRealization([[1.0]], [[-0.5]], [[1.0]], [[0.0]])])
    path = SwitchingPath([0] * 200, SELF_LOOP)
    trace = deploy(loop.with_graph(SELF_LOOP), quadratic([10.0]), path, [1.0])
    assert trace.diverged
    assert len(trace) < 200
    assert empirical_rate(trace) == float("inf")


def test_deploy_lifts_scalar_loops():
    f = make_function(SECTOR, d=3, seed=2)
    path = random_path(SELF_LOOP, 300, seed=0)
    trace = deploy(baseline_gd(SECTOR), f, path)
    assert trace.iterates.shape == (300, 3)
    assert trace.distances[-1] < 1e-8


def test_empirical_rate_of_geometric_decay():
    assert abs(empirical_rate(geometric_trace(0.9)) - 0.9) < 1e-6


def test_empirical_rate_below_floor():
    assert empirical_rate(geometric_trace(1e-14, steps=10)) == 0.0


def test_empirical_rate_stops_at_round_off():
    """A plateau at the accuracy of z* does not flatten the fitted rate."""
    steps = 300
    distances = np.maximum(1e3 * 0.8 ** np.arange(steps), 1e-10)
    trace = SimulationTrace(
        modes=np.zeros(steps, dtype=np.int64),
        iterates=distances.reshape(-1, 1),
        gradients=distances.reshape(-1, 1),
        distances=distances,
        z_star=np.array([1e3]),
    )
    assert abs(empirical_rate(trace) - 0.8) < 1e-6


def test_empirical_rate_gradient_descent():
    """The worst quadratic makes GD contract at exactly (L - m)/(L + m)."""
    f = quadratic([1.0, 10.0])
    path = SwitchingPath([0] * 100, SELF_LOOP)
    trace = deploy(baseline_gd(SECTOR), f, path, [1.0, 1.0])
    assert abs(empirical_rate(trace) - 9 / 11) < 1e-3
    assert np.isclose(empirical_prefactor(trace, 9 / 11), np.sqrt(2))


def test_baseline_gd():
    mode = baseline_gd(SECTOR).modes[0]
    assert np.allclose(mode.matrix, [[1.0, -2 / 11], [1.0, 0.0]])


def test_baseline_tm():
    mode = baseline_tm(SectorSpec(1.0, 4.0)).modes[0]
    assert np.allclose(mode.A, [[1.0, 1 / 6], [0.0, 1 / 6]])
    assert np.allclose(mode.B, [[-0.375], [-0.375]])
    assert np.allclose(mode.C, [[1.0, 1 / 9]])


def test_random_path_on_self_loop():
    assert random_path(SELF_LOOP, 5, seed=0).modes == (0,) * 5


def test_random_path_covers_ring():
    graph = ring_graph(4)
    path = random_path(graph, 10_000, seed=0)
    seen = set(zip(path.modes, path.modes[1:]))
    assert seen == graph.edges


@mark.parametrize("seed", [0, 1, 2])
def test_random_path_follows_packet_drops(seed: int):
    graph = packet_drop_graph(3)
    path = random_path(graph, 200, seed=seed, start=0)
    assert path.modes[0] == 0
    assert all(edge in graph.edges for edge in zip(path.modes, path.modes[1:]))


def test_random_path_stalls():
    graph = SwitchingGraph(2, [(0, 1), (0, 0)])
    with raises(GraphError, match="stalled in mode 2"):
        random_path(graph, 3, seed=0, start=1)


def test_monte_carlo_respects_certificate():
    loop = baseline_gd(SECTOR)
    summary = monte_carlo(
        loop, SECTOR, d=3, paths=4, steps=120, seed=7, certified_rho=9 / 11
    )
    assert len(summary.traces) == 4
    assert summary.max_rate <= 9 / 11 + 0.01
    assert np.isfinite(summary.max_prefactor)
    again = monte_carlo(loop, SECTOR, d=3, paths=4, steps=120, seed=7)
    assert again.rates == summary.rates
    assert again.max_prefactor is None


def test_gradient_descent_rates_on_random_functions():
    """Converged runs report their contraction, never a flat 1."""
    summary = monte_carlo(baseline_gd(SECTOR), SECTOR, d=3, paths=3, steps=500, seed=4)
    for rate in summary.rates:
        assert 0.05 < rate <= 9 / 11 + 0.01
    assert summary.max_final_distance < 1e-9

"""Controller synthesis: the weighted plant, the LMI and reconstruction."""

import numpy as np
from pytest import raises

from switchopt import (
    CertificationError,
    FilterCoefficients,
    ModeRealization,
    RateCertificate,
    ReconstructionError,
    SectorSpec,
    SwitchedSystem,
    SynthesisResult,
    assemble_controller,
    baseline_gd,
    bisect_rate,
    bisect_synthesis,
    close_loop,
    connect_plant_model,
    delay_plant,
    reconstruct,
    rho_weight_and_loop,
    ring_network,
    solve_regulator,
    star,
    synth_feasible_at_rate,
    synthesizable_below_one,
    trivial_network,
)
from switchopt._analysis import RateCheck
from switchopt._lmi import LmiSolution, LmiStatus
from switchopt._synthesis import (
    VARIABLE_BOUND,
    SynthesisVariables,
    delta_plant,
    synth_cascade,
)

SECTOR = SectorSpec(1.0, 10.0)


def impulse_response(real: ModeRealization, length: int) -> np.ndarray:
    u = np.zeros((length, real.n_u))
    u[0] = 1.0
    return real.simulate(u)[1].ravel()


def static(gains: list[list[float]]) -> SwitchedSystem:
    return SwitchedSystem([ModeRealization([], [], [], gains)])


def test_delta_plant_without_feedthrough():
    """With D11 = 0 the substitution only shifts A and scales by ρ."""
    plant = ring_network()
    connected = connect_plant_model(plant, solve_regulator(plant))
    rho, m, L = 0.9, SECTOR.m, SECTOR.L
    weighted = delta_plant(connected, SECTOR, rho)
    for mode, orig in zip(weighted.modes, connected.modes, strict=True):
        assert np.allclose(mode.A, (orig.A + m * orig.B1 @ orig.C1) / rho)
        assert np.allclose(mode.B1, orig.B1 / rho)
        assert np.allclose(mode.C1, (L - m) * orig.C1)
        assert np.allclose(mode.D11, -1.0)
        assert np.all(np.isfinite(mode.realization.matrix))


def test_delta_plant_matches_analysis_transform():
    """Closing the weighted plant equals weighting the closed loop."""
    plant = trivial_network()
    sol = solve_regulator(plant)
    sub = static([[-0.2], [0.0]])
    rho = 0.9
    direct = rho_weight_and_loop(close_loop(plant, sol, sub), SECTOR, rho).modes[0]
    weighted = delta_plant(connect_plant_model(plant, sol), SECTOR, rho).modes[0]
    via_delta = star(weighted.realization, sub.modes[0], 1, 2)
    assert np.allclose(impulse_response(via_delta, 12), impulse_response(direct, 12))


def test_synth_cascade_identity_filter():
    plant = trivial_network()
    connected = connect_plant_model(plant, solve_regulator(plant))
    weighted = delta_plant(connected, SECTOR, 0.9)
    cascade = synth_cascade(weighted, FilterCoefficients.identity(2))
    assert cascade.dims[0] == weighted.dims[0] + 2
    sub = static([[-0.2], [0.0]])
    filtered = star(cascade.modes[0].realization, sub.modes[0], 1, 2)
    plain = star(weighted.modes[0].realization, sub.modes[0], 1, 2)
    assert np.allclose(impulse_response(filtered, 10), impulse_response(plain, 10))


def test_synth_cascade_is_convolution():
    plant = trivial_network()
    connected = connect_plant_model(plant, solve_regulator(plant))
    weighted = delta_plant(connected, SECTOR, 0.9)
    lam = FilterCoefficients((1.0, -0.4, -0.1))
    sub = static([[-0.2], [0.0]])
    cascade = synth_cascade(weighted, lam)
    filtered = star(cascade.modes[0].realization, sub.modes[0], 1, 2)
    plain = star(weighted.modes[0].realization, sub.modes[0], 1, 2)
    expected = np.convolve(impulse_response(plain, 10), lam.as_array())[:10]
    assert np.allclose(impulse_response(filtered, 10), expected)


def test_assemble_controller_recovers_gradient_descent():
    """An integrating internal model with ũ1 = -α ỹ is gradient descent."""
    plant = trivial_network()
    sol = solve_regulator(plant)
    alpha = 2 / 11
    controller, closed = assemble_controller(plant, sol, static([[-alpha], [0.0]]))
    (mode,) = controller.modes
    assert mode.allclose(baseline_gd(SECTOR).modes[0])
    assert closed.modes[0].allclose(baseline_gd(SECTOR).modes[0])


def test_synth_feasible_trivial_network():
    plant = trivial_network()
    sol = solve_regulator(plant)
    lam = FilterCoefficients.identity()
    check = synth_feasible_at_rate(plant, sol, SECTOR, 0.85, lam)
    assert check.feasible
    assert check.variables is not None
    assert len(check.variables.M) == 1
    boxed = [check.variables.X, check.variables.Y, check.variables.S]
    for value in [*boxed, *check.variables.M, *check.variables.A]:
        assert np.max(np.abs(value)) <= VARIABLE_BOUND * (1 + 1e-6)


def test_synth_rejects_inadmissible_multiplier():
    plant = trivial_network()
    check = synth_feasible_at_rate(
        plant, solve_regulator(plant), SECTOR, 0.5, FilterCoefficients((1.0, -1.0))
    )
    assert not check.feasible


def scalar_variables(s: float) -> SynthesisVariables:
    eye = np.eye(1)
    return SynthesisVariables(
        A=[eye],
        B=[eye],
        C=[np.zeros((2, 1))],
        D=[np.zeros((2, 1))],
        M=[np.eye(2)],
        X=eye,
        Y=eye,
        S=s * eye,
    )


def test_reconstruct_singular_transformation():
    """𝒮 = 𝒴𝒳 leaves no invertible 𝒰."""
    plant = trivial_network()
    sol = solve_regulator(plant)
    cascade = synth_cascade(
        delta_plant(connect_plant_model(plant, sol), SECTOR, 0.9),
        FilterCoefficients.identity(),
    )
    with raises(ReconstructionError):
        reconstruct(scalar_variables(1.0), cascade, 0.9)
    sub = reconstruct(scalar_variables(2.0), cascade, 0.9)
    assert sub.n == 1
    assert np.all(np.isfinite(sub.modes[0].matrix))


def test_bisect_synthesis_trivial_network():
    """Synthesis does at least as well as tuned gradient descent."""
    plant = trivial_network()
    result = bisect_synthesis(plant, solve_regulator(plant), SECTOR)
    assert isinstance(result, SynthesisResult)
    assert result.rho <= 9 / 11 + 0.01
    assert result.regulated
    assert result.certified
    assert result.closed_loop.n == 1 + result.order


def test_synthesizable_below_one():
    plant = trivial_network()
    assert synthesizable_below_one(plant, solve_regulator(plant), SECTOR)


def test_synthesized_controller_is_recertified():
    """Analysis of the assembled closed loop reaches the synthesized rate."""
    plant = delay_plant(0)
    sector = SectorSpec(1.0, 2.0)
    result = bisect_synthesis(plant, solve_regulator(plant), sector)
    assert isinstance(result, SynthesisResult)
    assert result.certified
    cert = bisect_rate(result.closed_loop, sector, lam=result.lam)
    assert isinstance(cert, RateCertificate)
    assert cert.rho <= result.rho + 1e-3


def test_failed_recertification_raises(monkeypatch):
    def refuse(closed_loop, sector, rho, **kwargs):
        return RateCheck(rho, LmiSolution(LmiStatus.INFEASIBLE))

    monkeypatch.setattr("switchopt._synthesis.feasible_at_rate", refuse)
    plant = trivial_network()
    with raises(CertificationError) as exc_info:
        bisect_synthesis(plant, solve_regulator(plant), SECTOR)
    assert exc_info.value.rho <= 9 / 11 + 0.01
    assert exc_info.value.exit_code == 5
    sol = solve_regulator(plant)
    result = bisect_synthesis(plant, sol, SECTOR, cross_certify=False)
    assert isinstance(result, SynthesisResult)
    assert result.certified is None

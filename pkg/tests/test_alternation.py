"""Alternating synthesis and multiplier search."""

import itertools

from pytest import MonkeyPatch, raises

from switchopt import (
    AlternationTrace,
    CertificationError,
    Diverged,
    DivergedError,
    SectorSpec,
    SynthesisResult,
    run_alternation,
    trivial_network,
)
from switchopt import _alternation

SECTOR = SectorSpec(1.0, 10.0)


def test_single_iteration():
    """One iteration is a synthesis followed by one multiplier search."""
    result, trace = run_alternation(trivial_network(), SECTOR, nu_max=1, iter_max=1)
    assert isinstance(result, SynthesisResult)
    assert isinstance(trace, AlternationTrace)
    assert [r.phase for r in trace.records] == ["synthesis", "analysis"]
    synthesis = trace.records[0]
    assert synthesis.lam == (1.0,)
    assert synthesis.adopted
    assert result.rho <= synthesis.rho


def test_incumbent_never_worsens():
    result, trace = run_alternation(trivial_network(), SECTOR, nu_max=1, iter_max=3)
    rates = trace.incumbent_rates()
    assert all(b <= a for a, b in itertools.pairwise(rates))
    assert result.rho == rates[-1]
    assert result.rho <= 9 / 11 + 0.01


def test_iteration_count_is_validated():
    with raises(ValueError):
        run_alternation(trivial_network(), SECTOR, iter_max=0)


def test_first_synthesis_diverging(monkeypatch: MonkeyPatch):
    monkeypatch.setattr(
        _alternation, "bisect_synthesis", lambda *a, **kw: Diverged("infeasible")
    )
    with raises(DivergedError, match="infeasible"):
        run_alternation(trivial_network(), SECTOR)


def test_failed_recertification_keeps_the_incumbent(monkeypatch: MonkeyPatch):
    real = _alternation.bisect_synthesis
    calls = []

    def flaky(*args, **kwargs):
        calls.append(args)
        if len(calls) > 1:
            raise CertificationError("could not re-certify", 0.5)
        return real(*args, **kwargs)

    monkeypatch.setattr(_alternation, "bisect_synthesis", flaky)
    result, trace = run_alternation(trivial_network(), SECTOR, nu_max=1, iter_max=3)
    last = trace.records[-1]
    assert (last.iteration, last.phase, last.rho) == (2, "synthesis", None)
    assert result.rho == trace.incumbent_rates()[-1]


def test_first_synthesis_uncertified(monkeypatch: MonkeyPatch):
    def refuse(*args, **kwargs):
        raise CertificationError("could not re-certify", 0.5)

    monkeypatch.setattr(_alternation, "bisect_synthesis", refuse)
    with raises(CertificationError):
        run_alternation(trivial_network(), SECTOR)

import sys
import threading
import time

from pytest import mark, raises

from switchopt import gather_solves, run_sweep
from switchopt._taskgroup import SolveGroup

if sys.version_info < (3, 11):
    from exceptiongroup import ExceptionGroup


async def test_empty():
    """An empty gather works."""
    assert await gather_solves() == ()


async def test_simple_gather():
    """Results come back in call order."""

    def slow() -> int:
        time.sleep(0.02)
        return 1

    def fast() -> int:
        return 2

    assert await gather_solves(slow, fast) == (1, 2)


async def test_gather_runs_in_threads():
    """Blocking calls do not run on the event loop thread."""
    main = threading.get_ident()

    def ident() -> int:
        return threading.get_ident()

    (ident_1,) = await gather_solves(ident)
    assert ident_1 != main


async def test_gather_with_error():
    """An error surfaces as an ExceptionGroup."""

    def ok() -> int:
        return 1

    def error() -> None:
        raise ValueError()

    with raises(ExceptionGroup) as exc_info:
        await gather_solves(ok, error)

    assert repr(exc_info.value.exceptions[0]) == "ValueError()"


async def test_with_error_return_excs():
    """With return_exceptions the error takes the place of the result."""
    err = ValueError()

    def ok() -> int:
        return 1

    def error() -> None:
        raise err

    assert await gather_solves(ok, error, return_exceptions=True) == (1, err)


@mark.parametrize("limit", [1, 2])
async def test_concurrency_limit(limit: int):
    """No more than `concurrency_limit` solves run at once."""
    running = 0
    peak = 0
    lock = threading.Lock()

    def solve() -> None:
        nonlocal running, peak
        with lock:
            running += 1
            peak = max(peak, running)
        time.sleep(0.02)
        with lock:
            running -= 1

    await gather_solves(*[solve] * 5, concurrency_limit=limit)
    assert peak <= limit


def test_run_sweep():
    """run_sweep maps a function over points from synchronous code."""
    assert run_sweep([1, 2, 3], lambda x: x * x, jobs=2) == [1, 4, 9]


def test_run_sweep_exceptions():
    """run_sweep can collect exceptions."""

    def invert(x: float) -> float:
        return 1 / x

    results = run_sweep([1.0, 0.0], invert, return_exceptions=True)
    assert results[0] == 1.0
    assert isinstance(results[1], ZeroDivisionError)


async def test_gather_schedules_through_create_solve(monkeypatch):
    """Every call is handed to SolveGroup.create_solve, errors included."""
    scheduled = []
    original = SolveGroup.create_solve

    def spy(self, fn, /, *args, **kwargs):
        scheduled.append(fn)
        return original(self, fn, *args, **kwargs)

    monkeypatch.setattr(SolveGroup, "create_solve", spy)

    def ok() -> int:
        return 1

    def error() -> None:
        raise KeyError("x")

    results = await gather_solves(ok, error, return_exceptions=True)
    assert len(scheduled) == 2
    assert results[0] == 1
    assert isinstance(results[1], KeyError)

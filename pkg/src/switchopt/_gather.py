"""Run independent solves concurrently."""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable, Iterable
from functools import partial
from typing import Any, Literal, TypeVar, overload

from ._taskgroup import SolveGroup

__all__ = ["gather_solves", "run_sweep"]

log = logging.getLogger(__name__)

_T = TypeVar("_T")
_P = TypeVar("_P")


@overload
async def gather_solves(
    *calls: Callable[[], _T],
    return_exceptions: Literal[False] = False,
    concurrency_limit: int | None = None,
) -> tuple[_T, ...]: ...


@overload
async def gather_solves(
    *calls: Callable[[], _T],
    return_exceptions: bool,
    concurrency_limit: int | None = None,
) -> tuple[_T | BaseException, ...]: ...


async def gather_solves(
    *calls: Callable[[], Any],
    return_exceptions: bool = False,
    concurrency_limit: int | None = None,
) -> tuple:
    """Run blocking zero-argument callables in threads, results in call order.

    Args:
        concurrency_limit: When provided, limit the number of parallel solves to
            this number.

    * If a call fails the pending ones are cancelled and an ExceptionGroup
      bubbles out, unless `return_exceptions` is set, in which case the
      exception takes the place of the result.
    * Results are returned as a tuple.
    """
    if not calls:
        return ()

    async with SolveGroup(concurrency_limit=concurrency_limit) as group:
        subtasks = [
            group.create_solve(_capture, call)
            if return_exceptions
            else group.create_solve(call)
            for call in calls
        ]

    return tuple([await f for f in subtasks])


def _capture(call: Callable[[], _T]) -> _T | BaseException:
    """Adapt a raised exception into the return value."""
    try:
        return call()
    except Exception as exc:
        return exc


def run_sweep(
    points: Iterable[_P],
    fn: Callable[[_P], _T],
    *,
    jobs: int | None = None,
    return_exceptions: bool = False,
) -> list[_T | BaseException]:
    """Evaluate `fn` at every point, `jobs` at a time, from synchronous code."""
    calls = [partial(fn, point) for point in points]
    log.debug("sweeping %d points with jobs=%s", len(calls), jobs)
    results = asyncio.run(
        gather_solves(
            *calls, return_exceptions=return_exceptions, concurrency_limit=jobs
        )
    )
    return list(results)

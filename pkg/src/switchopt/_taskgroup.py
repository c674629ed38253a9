from __future__ import annotations

import sys
from asyncio import Semaphore, to_thread
from collections.abc import Callable
from contextvars import Context
from typing import TYPE_CHECKING, Any, TypeVar

if TYPE_CHECKING:
    from asyncio import Task, _CoroutineLike


if sys.version_info < (3, 11):
    from taskgroup import TaskGroup as _TaskGroup
else:
    from asyncio.taskgroups import TaskGroup as _TaskGroup

__all__ = ["SolveGroup"]

T = TypeVar("T")


class SolveGroup(_TaskGroup):
    """A task group that runs blocking solver calls in worker threads.

    A failing solve cancels the solves that have not started yet and the
    error surfaces as an `ExceptionGroup`, like in any task group.
    """

    def __init__(self, *, concurrency_limit: int | None = None) -> None:
        """
        Args:
            concurrency_limit: When provided, use a semaphore to limit the number of
                solves that run in parallel.
        """
        _TaskGroup.__init__(self)
        if concurrency_limit is not None and concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        self._semaphore = (
            None if concurrency_limit is None else Semaphore(concurrency_limit)
        )

    def create_task(
        self,
        coro: _CoroutineLike[T],
        *,
        name: str | None = None,
        context: Context | None = None,
    ) -> Task[T]:
        return super().create_task(
            coro if self._semaphore is None else _wrap_coro(coro, self._semaphore),
            name=name,
            context=context,
        )

    def create_solve(
        self,
        fn: Callable[..., T],
        /,
        *args: Any,
        name: str | None = None,
        **kwargs: Any,
    ) -> Task[T]:
        """Schedule `fn(*args, **kwargs)` on a worker thread."""
        return self.create_task(to_thread(fn, *args, **kwargs), name=name)


async def _wrap_coro(coro: _CoroutineLike[T], semaphore: Semaphore) -> T:
    async with semaphore:
        return await coro

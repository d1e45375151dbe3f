import asyncio
from typing import Any, Callable

from temporalio import activity
from temporalio.exceptions import ApplicationError

from photonstats.errors import PhotonStatsError


async def run_stage(stage: str, fn: Callable[..., Any], *args: Any) -> Any:
    """Run a CPU-bound pipeline stage off the event loop.

    Analysis errors are deterministic, so they fail the activity for good;
    OSError (storage hiccups) propagates untouched and Temporal retries it.
    """
    try:
        return await asyncio.to_thread(fn, *args)
    except PhotonStatsError as e:
        activity.logger.error(f"❌ {stage} failed: {type(e).__name__}: {e}")
        raise ApplicationError(f"{stage}: {e}", type=type(e).__name__, non_retryable=True) from e

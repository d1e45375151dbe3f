from typing import Any, Dict

from temporalio import activity

from activities.stage_runner import run_stage
from photonstats.config import environment, load_config
from photonstats.pipeline import open_context, run_trace_stage
from photonstats.trace import WindowPolicy


def _trace(request: Dict[str, Any]) -> Dict[str, Any]:
    config = load_config(request["config"])
    ctx = open_context(request["tags_path"], config, request["outdir"], environment().threads)
    override = request.get("windows_override")
    policy = None
    if override:
        policy = WindowPolicy(grey_max_per_ms=override["grey_max_per_ms"],
                              bright_min_per_ms=override["bright_min_per_ms"])
    summary = run_trace_stage(ctx, policy)
    return {**summary, "review_windows": config.analysis.review_windows}


@activity.defn
async def analyze_trace(request: Dict[str, Any]) -> Dict[str, Any]:
    """Bin the trace, fit the two-state histogram and post-select photons"""
    activity.logger.info(f"📈 Intensity trace analysis of {request['tags_path']}")
    result = await run_stage("trace", _trace, request)
    fractions = result["fractions"]
    activity.logger.info(
        f"Post-selection: bright {fractions['bright']:.3f}, grey {fractions['grey']:.3f}, "
        f"discarded {fractions['discarded']:.3f}")
    return result

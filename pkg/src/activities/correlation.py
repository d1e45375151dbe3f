from typing import Any, Dict

from temporalio import activity

from activities.stage_runner import run_stage
from photonstats.config import environment, load_config
from photonstats.pipeline import open_context, run_correlation_stage


def _correlations(request: Dict[str, Any]) -> Dict[str, Any]:
    config = load_config(request["config"])
    ctx = open_context(request["tags_path"], config, request["outdir"], environment().threads,
                       reuse_windows=True)
    return run_correlation_stage(ctx)


@activity.defn
async def analyze_correlations(request: Dict[str, Any]) -> Dict[str, Any]:
    """Log-binned g2 and pulsed ACF for all photons and each state"""
    activity.logger.info("🔗 Correlating photon streams")
    result = await run_stage("correlations", _correlations, request)
    for name in ("all", "bright", "grey"):
        activity.logger.info(f"g2_{name}(0) = {result[name]['g2_zero']:.3f}")
    return result

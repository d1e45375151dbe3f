from typing import Any, Dict

from temporalio import activity

from activities.stage_runner import run_stage
from photonstats.config import environment, load_config
from photonstats.pipeline import open_context, run_lifetime_stage


def _lifetimes(request: Dict[str, Any]) -> Dict[str, Any]:
    config = load_config(request["config"])
    ctx = open_context(request["tags_path"], config, request["outdir"], environment().threads,
                       reuse_windows=True)
    return run_lifetime_stage(ctx)


@activity.defn
async def analyze_lifetimes(request: Dict[str, Any]) -> Dict[str, Any]:
    """Fit bright and grey state decays"""
    activity.logger.info("⏱️ Fitting state lifetimes")
    result = await run_stage("lifetimes", _lifetimes, request)
    activity.logger.info(f"tau_X = {result['bright']['tau_ns']:.2f} ns, tau_X- = {result['grey']['tau_ns']:.2f} ns")
    return result

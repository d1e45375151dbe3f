from pathlib import Path
from typing import Any, Dict

from temporalio import activity

from activities.stage_runner import run_stage
from photonstats.config import environment, load_config
from photonstats.pipeline import simulate_to_file


@activity.defn
async def simulate_tags(request: Dict[str, Any]) -> Dict[str, Any]:
    """Generate the tag file named in the request from its configuration"""
    tags_path = request["tags_path"]
    activity.logger.info(f"🎲 Simulating {request['config']} into {tags_path}")

    if Path(tags_path).exists() and not request.get("overwrite", False):
        # a retried activity finds its own output from the first attempt
        activity.logger.info("Tag file already present, keeping it")
        return {"tags_path": tags_path, "reused": True}

    config = await run_stage("simulation", load_config, request["config"])
    summary = await run_stage("simulation", simulate_to_file, config, tags_path, environment().threads)
    activity.logger.info(f"Simulated {summary['tag_count']} tags at {summary['mean_rate_per_ms']:.1f} counts/ms")
    return {**summary, "reused": False}

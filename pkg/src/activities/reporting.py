from typing import Any, Dict

from temporalio import activity

from activities.stage_runner import run_stage
from photonstats.config import load_config
from photonstats.pipeline import run_report_stage


def _report(request: Dict[str, Any]) -> Dict[str, Any]:
    report = run_report_stage(request["outdir"], load_config(request["config"]))
    return report.to_dict()


@activity.defn
async def assemble_report(request: Dict[str, Any]) -> Dict[str, Any]:
    """Yield table and Auger times from the stage outputs"""
    activity.logger.info("📋 Assembling yield report")
    report = await run_stage("report", _report, request)
    if report["flags"]:
        activity.logger.warning(f"⚠️ Consistency flags: {', '.join(report['flags'])}")
    return report

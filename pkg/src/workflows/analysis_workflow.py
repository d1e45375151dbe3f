from datetime import timedelta
from typing import Any, Dict, Optional
import asyncio
from temporalio import workflow
from temporalio.common import RetryPolicy
from temporalio.exceptions import ActivityError

with workflow.unsafe.imports_passed_through():
    from activities.simulation import simulate_tags
    from activities.trace_analysis import analyze_trace
    from activities.decay_fitting import analyze_lifetimes
    from activities.correlation import analyze_correlations
    from activities.reporting import assemble_report

# analysis stages are CPU bound but deterministic; retries only cover storage hiccups
ANALYSIS_RETRY = RetryPolicy(
    initial_interval=timedelta(seconds=2),
    maximum_attempts=3,
    backoff_coefficient=2.0,
)
SIMULATION_RETRY = RetryPolicy(
    initial_interval=timedelta(seconds=5),
    maximum_attempts=0,  # a long simulation is too expensive to lose to a transient failure
    backoff_coefficient=2.0,
    maximum_interval=timedelta(minutes=2),
)


@workflow.defn
class PhotonAnalysisWorkflow:
    """Simulate (optionally), post-select and analyze one time-tag file."""

    def __init__(self) -> None:
        self.current_step = ""
        self.step_results: Dict[str, Any] = {}
        self.failed_steps: Dict[str, str] = {}
        self.windows_approved = False
        self.windows_override: Optional[Dict[str, float]] = None

    @workflow.signal
    async def approve_windows(self) -> None:
        """Accept the fitted state windows"""
        workflow.logger.info("✅ State windows approved")
        self.windows_approved = True

    @workflow.signal
    async def override_windows(self, grey_max_per_ms: float, bright_min_per_ms: float) -> None:
        """Replace the fitted windows with manual thresholds (counts/ms)"""
        workflow.logger.info(f"✏️ Windows overridden: grey <= {grey_max_per_ms}, bright >= {bright_min_per_ms} counts/ms")
        self.windows_override = {"grey_max_per_ms": grey_max_per_ms, "bright_min_per_ms": bright_min_per_ms}

    @workflow.query
    def get_status(self) -> Dict[str, Any]:
        """Current step, finished stages, windows and report summary for dashboards"""
        trace = self.step_results.get("trace", {})
        report = self.step_results.get("report")
        return {
            "current_step": self.current_step,
            "completed_steps": list(self.step_results.keys()),
            "failed_steps": dict(self.failed_steps),
            "workflow_id": workflow.info().workflow_id,
            "awaiting_review": self.current_step == "awaiting_window_review",
            "windows": trace.get("windows"),
            "fractions": trace.get("fractions"),
            "report": None if report is None else {
                key: report.get(key) for key in ("tau_X_ns", "tau_X-_ns", "Q_X-", "Q_2X", "Q_2X-",
                                                 "tau_A-_ns", "tau_A+_ns", "flags")
            },
        }

    async def _stage(self, name: str, activity_fn, request: Dict[str, Any],
                     timeout: timedelta, retry: RetryPolicy = ANALYSIS_RETRY) -> Optional[Dict[str, Any]]:
        """Run one activity; a failed stage is recorded and the workflow carries on."""
        workflow.logger.info(f"🔄 Starting step: {name}")
        try:
            result = await workflow.execute_activity(
                activity_fn, request, start_to_close_timeout=timeout, retry_policy=retry)
        except ActivityError as e:
            cause = e.cause if e.cause is not None else e
            workflow.logger.warning(f"❌ Step {name} failed: {cause}")
            self.failed_steps[name] = str(cause)
            return None
        self.failed_steps.pop(name, None)
        self.step_results[name] = result
        return result

    @workflow.run
    async def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """
        request: tags_path, config (preset name or YAML path), outdir, simulate (bool)
        """
        workflow.logger.info(f"🚀 Starting photon analysis for: {request['tags_path']}")

        if request.get("simulate"):
            self.current_step = "simulation"
            if await self._stage("simulation", simulate_tags, request,
                                 timedelta(minutes=30), SIMULATION_RETRY) is None:
                self.current_step = "failed"
                return {"workflow_status": "failed", "failed_steps": self.failed_steps}

        self.current_step = "trace"
        trace = await self._stage("trace", analyze_trace, request, timedelta(minutes=10))

        if trace is not None and trace.get("review_windows"):
            self.current_step = "awaiting_window_review"
            workflow.logger.info("🔒 Awaiting review of the state windows")
            await workflow.wait_condition(lambda: self.windows_approved or self.windows_override is not None)
            if self.windows_override is not None:
                self.current_step = "trace"
                await self._stage("trace", analyze_trace,
                                  {**request, "windows_override": self.windows_override}, timedelta(minutes=10))

        # both stages only read the tag file and windows.json
        self.current_step = "lifetimes_and_correlations"
        await asyncio.gather(
            self._stage("lifetimes", analyze_lifetimes, request, timedelta(minutes=10)),
            self._stage("correlations", analyze_correlations, request, timedelta(minutes=30)),
        )

        self.current_step = "report"
        if not self.failed_steps:
            await self._stage("report", assemble_report, request, timedelta(minutes=2))
        else:
            workflow.logger.warning("Report skipped - earlier stages failed")

        self.current_step = "completed" if not self.failed_steps else "completed_with_failures"
        return {
            **self.step_results,
            "failed_steps": self.failed_steps,
            "workflow_status": self.current_step,
        }

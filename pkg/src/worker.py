import asyncio
from temporalio.client import Client
from temporalio.worker import Worker

from photonstats.config import environment

# Import workflow and activities
from workflows.analysis_workflow import PhotonAnalysisWorkflow
from activities.simulation import simulate_tags
from activities.trace_analysis import analyze_trace
from activities.decay_fitting import analyze_lifetimes
from activities.correlation import analyze_correlations
from activities.reporting import assemble_report


async def main():
    """Start the Temporal worker"""
    env = environment()

    client = await Client.connect(env.temporal_address)

    worker = Worker(
        client,
        task_queue=env.task_queue,
        workflows=[PhotonAnalysisWorkflow],
        activities=[
            simulate_tags,
            analyze_trace,
            analyze_lifetimes,
            analyze_correlations,
            assemble_report,
        ],
        # lifetimes and correlations of one file run side by side
        max_concurrent_activities=4,
    )

    print("🚀 Photon analysis worker started!")
    print(f"Task queue: {env.task_queue} on {env.temporal_address}")
    print("Press Ctrl+C to stop...")

    await worker.run()


if __name__ == "__main__":
    asyncio.run(main())

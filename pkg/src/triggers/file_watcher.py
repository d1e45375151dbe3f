import asyncio
import time
from pathlib import Path
from watchdog.observers import Observer
from watchdog.events import FileSystemEventHandler
from temporalio.client import Client

from photonstats.config import environment
from workflows.analysis_workflow import PhotonAnalysisWorkflow

TAG_SUFFIXES = (".ttag", ".csv")
DEFAULT_CONFIG = "dr1"


# This part is not durable - if the watcher process crashes, new files are not picked up.
# The durable part is the analysis workflow, which assumes the trigger to start will work.
class TagFileHandler(FileSystemEventHandler):
    def __init__(self, temporal_client, loop, config=DEFAULT_CONFIG):
        self.temporal_client = temporal_client
        self.loop = loop
        self.config = config
        self.env = environment()

    def on_created(self, event):
        if not event.is_directory and event.src_path.endswith(TAG_SUFFIXES):
            print(f"New tag file detected: {event.src_path}")
            asyncio.run_coroutine_threadsafe(
                self.trigger_workflow(event.src_path),
                self.loop
            )

    def analysis_request(self, file_path):
        stem = Path(file_path).stem
        return {
            "tags_path": file_path,
            "config": self.config,
            "outdir": str(Path(self.env.results_dir) / stem),
            "simulate": False,
        }

    async def trigger_workflow(self, file_path):
        """Start an analysis workflow for a new tag file"""
        workflow_id = f"photon-analysis-{int(time.time())}-{Path(file_path).stem}"

        await self.temporal_client.start_workflow(
            PhotonAnalysisWorkflow.run,
            self.analysis_request(file_path),
            id=workflow_id,
            task_queue=self.env.task_queue
        )
        print(f"Started workflow: {workflow_id}")


async def start_file_watcher(config=DEFAULT_CONFIG):
    """Watch the tag directory and analyze every new file"""
    env = environment()
    client = await Client.connect(env.temporal_address)
    loop = asyncio.get_running_loop()

    Path(env.tags_dir).mkdir(parents=True, exist_ok=True)
    event_handler = TagFileHandler(client, loop, config)
    observer = Observer()
    observer.schedule(event_handler, env.tags_dir, recursive=True)
    observer.start()

    print(f"File watcher started. Drop .ttag or .csv tag files in {env.tags_dir}/ to trigger analyses...")

    try:
        while True:
            await asyncio.sleep(1)
    except KeyboardInterrupt:
        observer.stop()
    observer.join()


if __name__ == "__main__":
    asyncio.run(start_file_watcher())

import asyncio
from types import SimpleNamespace

from triggers.file_watcher import TagFileHandler


class RecordingClient:
    def __init__(self):
        self.started = []

    async def start_workflow(self, run, request, id, task_queue):
        self.started.append((request, id, task_queue))


def test_request_points_at_results_directory(monkeypatch):
    monkeypatch.setenv("PHOTONSTATS_RESULTS_DIR", "/data/results")
    handler = TagFileHandler(RecordingClient(), loop=None, config="dr2")
    assert handler.analysis_request("/data/tags/dot7.ttag") == {
        "tags_path": "/data/tags/dot7.ttag",
        "config": "dr2",
        "outdir": "/data/results/dot7",
        "simulate": False,
    }


def test_new_tag_file_starts_a_workflow(monkeypatch):
    monkeypatch.setenv("PHOTONSTATS_TASK_QUEUE", "photon-test")
    client = RecordingClient()
    handler = TagFileHandler(client, loop=None)
    asyncio.run(handler.trigger_workflow("/data/tags/dot7.csv"))
    (request, workflow_id, queue), = client.started
    assert request["config"] == "dr1"
    assert workflow_id.startswith("photon-analysis-") and workflow_id.endswith("-dot7")
    assert queue == "photon-test"


def test_other_files_are_ignored():
    handler = TagFileHandler(RecordingClient(), loop=None)
    # no loop: scheduling a workflow here would fail
    handler.on_created(SimpleNamespace(is_directory=False, src_path="/data/tags/notes.txt"))
    handler.on_created(SimpleNamespace(is_directory=True, src_path="/data/tags/run.csv"))

import streamlit as st
import asyncio
import time
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Add src to path for imports
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from temporalio.client import Client  # noqa: E402
from photonstats.config import environment  # noqa: E402
from photonstats.errors import MissingInputError  # noqa: E402
from photonstats.pipeline import load_report, read_json  # noqa: E402
from photonstats.report import render_table  # noqa: E402
from workflows.analysis_workflow import PhotonAnalysisWorkflow  # noqa: E402

ENV = environment()

# Page config
st.set_page_config(
    page_title="Photon Post-Selection Dashboard",
    page_icon="🔬",
    layout="wide",
    initial_sidebar_state="expanded"
)

st.markdown("# Photon Post-Selection Dashboard")
st.caption("Intensity states, lifetimes, antibunching and Auger yields per emitter")

# Sidebar: tag file upload and results directories
st.sidebar.markdown("### Tag Files")
uploaded_file = st.sidebar.file_uploader(
    "Drop a .ttag or .csv tag file",
    type=['ttag', 'csv'],
    help="Saved to the watched tag directory; the file watcher starts an analysis workflow",
)
if uploaded_file is not None:
    os.makedirs(ENV.tags_dir, exist_ok=True)
    file_path = os.path.join(ENV.tags_dir, uploaded_file.name)
    with open(file_path, "wb") as f:
        f.write(uploaded_file.getbuffer())
    st.sidebar.success(f"File saved to {file_path}")

results_root = Path(ENV.results_dir)
analysis_dirs = sorted(p for p in results_root.iterdir() if p.is_dir()) if results_root.exists() else []

st.sidebar.markdown("---")
auto_refresh = st.sidebar.checkbox("Auto-refresh every 2 seconds", value=False)


async def get_temporal_client():
    """Get Temporal client connection"""
    try:
        return await Client.connect(ENV.temporal_address)
    except Exception as e:
        st.error(f"Cannot connect to Temporal server: {e}")
        return None


async def query_workflow_status(workflow_id: str):
    """Query the status of a photon analysis workflow"""
    client = await get_temporal_client()
    if not client:
        return None
    try:
        handle = client.get_workflow_handle(workflow_id)
        description = await handle.describe()
        if description.status.name in ["CANCELLED", "TERMINATED", "FAILED", "TIMED_OUT"]:
            return {"current_step": "cancelled"}
        return await handle.query(PhotonAnalysisWorkflow.get_status)
    except Exception as e:
        st.error(f"Error querying workflow {workflow_id}: {e}")
        return None


async def send_window_decision(workflow_id: str, override=None):
    """Approve the fitted windows or send manual thresholds"""
    client = await get_temporal_client()
    if not client:
        return False
    try:
        handle = client.get_workflow_handle(workflow_id)
        if override is None:
            await handle.signal(PhotonAnalysisWorkflow.approve_windows)
        else:
            await handle.signal(PhotonAnalysisWorkflow.override_windows, args=list(override))
        return True
    except Exception as e:
        st.error(f"Error signalling workflow: {e}")
        return False


# Yield table over every finished analysis
st.markdown("### Yield Table")
reports = []
for directory in analysis_dirs:
    try:
        reports.append((directory.name, load_report(directory)))
    except MissingInputError:
        continue
if reports:
    st.code(render_table(reports), language=None)
else:
    st.info(f"No finished analyses under {results_root}/")

# Curves of one analysis
if analysis_dirs:
    st.markdown("### Analysis Outputs")
    chosen = st.selectbox("Analysis directory", [d.name for d in analysis_dirs])
    directory = results_root / chosen

    stages_file = directory / "stages.json"
    if stages_file.exists():
        stages = read_json(stages_file)
        st.dataframe(pd.DataFrame(stages).T[["status"]], use_container_width=True)

    col1, col2 = st.columns(2)
    with col1:
        if (directory / "histogram.csv").exists():
            st.markdown("**Intensity histogram** (occurrences vs counts per bin)")
            st.bar_chart(pd.read_csv(directory / "histogram.csv").set_index("counts_per_bin"))
        decays = {name: directory / f"decay_{name}.csv" for name in ("bright", "grey", "all")}
        available = {name: path for name, path in decays.items() if path.exists()}
        if available:
            st.markdown("**PL decay** (counts vs ns)")
            frame = pd.concat({name: pd.read_csv(path).set_index("t_ns")["counts"]
                               for name, path in available.items()}, axis=1)
            st.line_chart(frame)
    with col2:
        curves = {name: directory / f"g2_{name}.csv" for name in ("all", "bright", "grey")}
        available = {name: path for name, path in curves.items() if path.exists()}
        if available:
            st.markdown("**g2(tau)** vs log10 lag (ps)")
            frame = pd.concat({name: pd.read_csv(path).assign(log_lag=lambda d: np.log10(d["lag_ps"]).round(3))
                               .set_index("log_lag")["g2"] for name, path in available.items()}, axis=1)
            st.line_chart(frame)
        peaks = directory / "acf_bright_peaks.csv"
        if peaks.exists():
            st.markdown("**Pulsed ACF peaks** (bright state, normalized)")
            st.bar_chart(pd.read_csv(peaks).set_index("peak_index"))

# Workflow monitoring and window review
st.markdown("---")
st.markdown("### Workflow Monitoring")
workflow_id = st.text_input("Workflow ID", placeholder="e.g., photon-analysis-1234567890-dr1")

if workflow_id:
    status = asyncio.run(query_workflow_status(workflow_id))
    if status:
        c1, c2 = st.columns(2)
        c1.metric("Current Step", status.get("current_step", "unknown"))
        c2.metric("Completed Steps", len(status.get("completed_steps", [])))
        for step, reason in (status.get("failed_steps") or {}).items():
            st.error(f"❌ {step}: {reason}")

        if status.get("awaiting_review"):
            st.warning("🔒 AWAITING WINDOW REVIEW")
            windows = status.get("windows") or {}
            fractions = status.get("fractions") or {}
            st.json({"windows": windows, "fractions": fractions})
            if st.button("Approve Windows", type="primary"):
                if asyncio.run(send_window_decision(workflow_id)):
                    st.success("Windows approved")
                    st.rerun()
            grey_max = st.number_input("Grey max (counts/ms)", value=float(windows.get("grey_max_per_ms", 40.0)))
            bright_min = st.number_input("Bright min (counts/ms)", value=float(windows.get("bright_min_per_ms", 70.0)))
            if st.button("Override Windows"):
                if asyncio.run(send_window_decision(workflow_id, (grey_max, bright_min))):
                    st.success("Manual windows sent")
                    st.rerun()

        if status.get("report"):
            st.markdown("**Report summary**")
            st.json(status["report"])
    else:
        st.error("Workflow not found or not accessible. Please verify the workflow ID.")

# Auto-refresh
if auto_refresh:
    time.sleep(2)
    st.rerun()

"""Analysis stages shared by the command line and the Temporal activities.

Each stage reads what it needs from the tag file and the output directory,
writes its own files there and returns a JSON-able summary. A stage that
fails still leaves every file it managed to write.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
import threading
import time
from typing import Any, Dict, Optional, Union

import numpy as np

from photonstats.config import RunConfig
from photonstats.correlate import (
    CorrelationCurve,
    PulsedACF,
    cross_g2,
    g2_zero_with_ci,
    plateau_g2,
    pulsed_acf,
)
from photonstats.errors import (
    FitError,
    InsufficientStatisticsError,
    MissingInputError,
    PhotonStatsError,
)
from photonstats.lifetime import ExpFit, decay_histogram, fit_monoexp
from photonstats.report import YieldReport, build_report
from photonstats.simulate import poissonian_reference_stream, simulate_stream
from photonstats.timetags import TimeTagStream, read_tags, write_tags, write_tags_csv
from photonstats.trace import (
    IntensityHistogram,
    IntensityTrace,
    PostSelection,
    StateWindows,
    WindowPolicy,
    bin_counts,
    fit_two_poisson,
    post_select,
    select_windows,
    state_occupancy,
)

logger = logging.getLogger(__name__)

STAGES = ("trace", "lifetimes", "correlations", "report")
NOT_MONO_EXPONENTIAL = 2.0  # reduced chi-square above which a decay is flagged

PathLike = Union[str, Path]


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: PathLike, data: Dict[str, Any]) -> None:
    with open(path, "w") as f:
        f.write(json.dumps(_plain(data), sort_keys=True, indent=2) + "\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        # only the file name: stages.json must not depend on where the run was written
        raise MissingInputError(f"{path.name} not found")
    with open(path) as f:
        return json.load(f)


def simulate_to_file(config: RunConfig, out: PathLike, threads: int = 1) -> Dict[str, Any]:
    """Simulate the configured acquisition and write it (CSV if the suffix says so)."""
    acq = config.acquisition
    if config.is_reference:
        stream = poissonian_reference_stream(config.emitter.poisson_rate, acq.duration_s, acq.seed,
                                             config.excitation.rep_period_ps, config.detector.split_ratio)
    else:
        stream = simulate_stream(config.emitter_model(), config.detector_model(), acq.duration_s, acq.seed,
                                 threads=threads)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".csv":
        write_tags_csv(stream, out)
    else:
        write_tags(stream, out)
    return {"tags_path": str(out), "tag_count": len(stream), "mean_rate_per_ms": stream.mean_rate(),
            "duration_s": acq.duration_s, "seed": acq.seed, "source": stream.source}


@dataclass
class AnalysisContext:
    """One tag file loaded and binned, plus its post-selection once windows exist."""

    config: RunConfig
    outdir: Path
    stream: TimeTagStream
    trace: IntensityTrace
    threads: int = 1
    windows: Optional[StateWindows] = None
    selection: Optional[PostSelection] = None

    @property
    def rep_period_ps(self) -> int:
        return self.stream.rep_period_ps or self.config.excitation.rep_period_ps

    def select(self, windows: StateWindows) -> PostSelection:
        self.windows = windows
        self.selection = post_select(self.stream, self.trace, windows)
        return self.selection

    def require_selection(self) -> PostSelection:
        if self.selection is None:
            raise MissingInputError("no state windows: the trace stage did not produce a post-selection")
        return self.selection


def open_context(tags_path: PathLike, config: RunConfig, outdir: PathLike, threads: int = 1,
                 reuse_windows: bool = False) -> AnalysisContext:
    """Read and bin a tag file; with ``reuse_windows`` apply the windows saved by the trace stage."""
    stream = read_tags(tags_path)
    if stream.rep_period_ps and stream.rep_period_ps != config.excitation.rep_period_ps:
        logger.warning("file rep period %d ps overrides configured %d ps",
                       stream.rep_period_ps, config.excitation.rep_period_ps)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = AnalysisContext(config, outdir, stream, bin_counts(stream, config.analysis.bin_width_us), threads)
    if reuse_windows:
        saved = outdir / "windows.json"
        if saved.exists():
            w = read_json(saved)
            ctx.select(StateWindows(w["upper_grey"], w["lower_bright"], w["bin_width_us"]))
    return ctx


def run_trace_stage(ctx: AnalysisContext, policy: Optional[WindowPolicy] = None) -> Dict[str, Any]:
    """Trace and histogram CSVs, two-Poisson fit, windows and post-selection."""
    policy = policy or ctx.config.window_policy()
    out = ctx.outdir
    histogram = IntensityHistogram.from_trace(ctx.trace)
    ctx.trace.to_frame().to_csv(out / "trace.csv", index=False)
    histogram.to_frame().to_csv(out / "histogram.csv", index=False)

    mixture, mixture_error = None, None
    try:
        mixture = fit_two_poisson(histogram)
    except PhotonStatsError as e:
        mixture_error = e
        logger.warning("mixture fit failed: %s", e)
    write_json(out / "mixture.json", mixture.to_dict() if mixture else
               {"error": type(mixture_error).__name__, "message": str(mixture_error)})
    if mixture is None and not policy.manual:
        raise mixture_error

    windows = select_windows(mixture, policy, ctx.trace.bin_width_us)
    write_json(out / "windows.json", windows.to_dict())
    selection = ctx.select(windows)
    ctx.trace.to_frame(selection.bin_classes).to_csv(out / "trace.csv", index=False)

    summary = {
        "windows": windows.to_dict(),
        "fractions": dict(zip(("bright", "grey", "discarded"), selection.fractions)),
        "occupancy": state_occupancy(selection.bin_classes),
        "intensities_per_ms": {"bright": selection.bright_stream.mean_rate(),
                               "grey": selection.grey_stream.mean_rate()},
        "bins": len(ctx.trace),
        "photons": len(ctx.stream),
        "mixture": mixture.to_dict() if mixture else None,
    }
    write_json(out / "selection.json", summary)
    if mixture_error is not None:
        # manual windows let post-selection go ahead, the stage still reports the failed fit
        raise mixture_error
    return summary


def _fit_or_error(curve, window) -> Dict[str, Any]:
    try:
        fit = fit_monoexp(curve, tuple(window) if window else None)
    except FitError as e:
        return {"error": type(e).__name__, "message": str(e)}
    result = fit.to_dict()
    result["mono_exponential"] = fit.reduced_chi_square <= NOT_MONO_EXPONENTIAL
    return result


def run_lifetime_stage(ctx: AnalysisContext) -> Dict[str, Any]:
    """Decay histograms and mono-exponential fits for all, bright and grey photons."""
    settings = ctx.config.analysis.lifetime
    rep = ctx.rep_period_ps
    results: Dict[str, Any] = {}

    curve = decay_histogram(ctx.stream, rep, settings.bin_width_ns)
    curve.to_frame().to_csv(ctx.outdir / "decay_all.csv", index=False)
    results["all"] = _fit_or_error(curve, None)

    if ctx.selection is None:
        write_json(ctx.outdir / "lifetimes.json", results)
    selection = ctx.require_selection()
    for name, stream, window in (("bright", selection.bright_stream, settings.bright_window_ns),
                                 ("grey", selection.grey_stream, settings.grey_window_ns)):
        curve = decay_histogram(stream, rep, settings.bin_width_ns)
        curve.to_frame().to_csv(ctx.outdir / f"decay_{name}.csv", index=False)
        results[name] = _fit_or_error(curve, window)
    write_json(ctx.outdir / "lifetimes.json", results)

    failed = [n for n in ("bright", "grey") if "error" in results[n]]
    if failed:
        raise FitError(f"lifetime fit failed for {', '.join(failed)}: "
                       + "; ".join(results[n]["message"] for n in failed))
    logger.info("lifetimes: bright %.2f ns, grey %.2f ns", results["bright"]["tau_ns"], results["grey"]["tau_ns"])
    return results


def _write_curve_outputs(outdir: Path, name: str, curve: Optional[CorrelationCurve],
                         acf: Optional[PulsedACF]) -> None:
    if curve is not None:
        curve.to_frame().to_csv(outdir / f"g2_{name}.csv", index=False)
    if acf is not None:
        acf.peaks_frame().to_csv(outdir / f"acf_{name}_peaks.csv", index=False)
        acf.fine_frame().to_csv(outdir / f"acf_{name}_fine.csv", index=False)


def _correlate_one(ctx: AnalysisContext, name: str, stream: TimeTagStream) -> Dict[str, Any]:
    analysis = ctx.config.analysis
    curve, acf = None, None
    try:
        curve = cross_g2(stream, ctx.config.correlation_config(ctx.threads))
        long_delay = plateau_g2(curve, *analysis.pulsed.plateau_ps)
        try:
            acf = pulsed_acf(stream, ctx.rep_period_ps, long_delay, ctx.config.pulsed_config(ctx.threads))
        except InsufficientStatisticsError as e:
            acf = e.partial
            raise
        g2_zero, (lo, hi) = g2_zero_with_ci(acf)
        return {"g2_zero": g2_zero, "g2_zero_ci": [lo, hi], "long_delay_g2": long_delay,
                "flatness_plateau": curve.plateau(*analysis.flatness_ps),
                "zero_peak_counts": acf.zero_counts, "side_peak_mean": acf.side_mean,
                "zero_peak_spill": acf.spill.counts, "peak_decay_ps": acf.spill.decay_ps,
                "photons": len(stream)}
    finally:
        _write_curve_outputs(ctx.outdir, name, curve, acf)


def run_correlation_stage(ctx: AnalysisContext) -> Dict[str, Any]:
    """Log-binned g2 and pulsed ACF for all photons and for each post-selected state."""
    jobs = [("all", ctx.stream)]
    if ctx.selection is not None:
        jobs += [("bright", ctx.selection.bright_stream), ("grey", ctx.selection.grey_stream)]
    results: Dict[str, Any] = {}
    first_error: Optional[PhotonStatsError] = None
    for name, stream in jobs:
        try:
            results[name] = _correlate_one(ctx, name, stream)
        except PhotonStatsError as e:
            logger.warning("correlation of %s photons failed: %s", name, e)
            results[name] = {"error": type(e).__name__, "message": str(e)}
            first_error = first_error or e
    write_json(ctx.outdir / "correlations.json", results)
    if first_error is not None:
        raise first_error
    if ctx.selection is None:
        raise MissingInputError("no post-selection: only all-photon correlations were computed")
    return results


def _section(data: Dict[str, Any], name: str, source: str) -> Dict[str, Any]:
    entry = data.get(name)
    if not entry or "error" in entry:
        raise MissingInputError(f"{source} has no usable '{name}' result")
    return entry


def run_report_stage(outdir: PathLike, config: RunConfig) -> YieldReport:
    """Assemble report.json / report.csv from the files the other stages wrote."""
    outdir = Path(outdir)
    selection = read_json(outdir / "selection.json")
    lifetimes = read_json(outdir / "lifetimes.json")
    correlations = read_json(outdir / "correlations.json")
    analysis = config.analysis

    def acf(name):
        return PulsedACF.measured(_section(correlations, name, "correlations.json")["g2_zero"])

    fractions = selection["fractions"]
    intensities = selection["intensities_per_ms"]
    report = build_report(
        ExpFit.measured(_section(lifetimes, "bright", "lifetimes.json")["tau_ns"]),
        ExpFit.measured(_section(lifetimes, "grey", "lifetimes.json")["tau_ns"]),
        acf("bright"), acf("grey"), acf("all"),
        (fractions["bright"], fractions["grey"], fractions["discarded"]),
        config.excitation.mean_excitations,
        q_x_assumed=analysis.q_x_assumed,
        intensities=(intensities["bright"], intensities["grey"]),
        substream_plateaus={name: correlations[name]["flatness_plateau"]
                            for name in ("bright", "grey")
                            if correlations[name].get("flatness_plateau") is not None},
        quote_trion_percent=analysis.quote_trion_percent,
        notes=analysis.notes,
        q_trion_quoted=analysis.q_trion_quoted,
    )
    with open(outdir / "report.json", "w") as f:
        f.write(report.to_json())
    report.to_frame().assign(emitter=config.name).to_csv(outdir / "report.csv", index=False)
    return report


def load_report(directory: PathLike) -> Dict[str, Any]:
    return read_json(Path(directory) / "report.json")


class StageLog:
    """Per-stage status, persisted to stages.json after every change."""

    def __init__(self, outdir: PathLike):
        self.path = Path(outdir) / "stages.json"
        self.stages: Dict[str, Dict[str, Any]] = {name: {"status": "pending"} for name in STAGES}
        self._lock = threading.Lock()

    def record(self, name: str, status: str, error: Optional[BaseException] = None, **extra) -> None:
        entry = {"status": status, **extra}
        if error is not None:
            entry.update(error=type(error).__name__, message=str(error))
        with self._lock:
            self.stages[name] = entry
            write_json(self.path, self.stages)

    @property
    def failed(self) -> list:
        return [name for name, entry in self.stages.items() if entry["status"] != "completed"]

    def run(self, name: str, fn, *args, **kwargs):
        started = time.monotonic()
        try:
            result = fn(*args, **kwargs)
        except PhotonStatsError as e:
            logger.error("stage %s failed after %.1f s: %s", name, time.monotonic() - started, e)
            self.record(name, "skipped" if isinstance(e, MissingInputError) else "failed", e)
            return None
        logger.info("stage %s completed in %.1f s", name, time.monotonic() - started)
        self.record(name, "completed")
        return result


def run_analysis(tags_path: PathLike, config: RunConfig, outdir: PathLike, threads: int = 1) -> StageLog:
    """All stages in order; lifetimes and correlations run side by side when threads > 1.

    Tag-file errors propagate; analysis failures are recorded in the stage log.
    """
    ctx = open_context(tags_path, config, outdir, threads)
    log = StageLog(outdir)
    log.run("trace", run_trace_stage, ctx)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            lifetimes = pool.submit(log.run, "lifetimes", run_lifetime_stage, ctx)
            correlations = pool.submit(log.run, "correlations", run_correlation_stage, ctx)
            lifetimes.result(), correlations.result()
    else:
        log.run("lifetimes", run_lifetime_stage, ctx)
        log.run("correlations", run_correlation_stage, ctx)
    log.run("report", run_report_stage, outdir, config)
    return log

import json

import numpy as np
import pytest

from photonstats.config import config_from_dict
from photonstats.timetags import TimeTagStream

REP_PS = 400_000


def make_stream(channels, times, rep_period_ps=REP_PS, duration_ps=None):
    times = np.asarray(times, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(times.max()) if times.size else 0
    return TimeTagStream(np.asarray(channels, dtype=np.uint8), times, rep_period_ps, duration_ps)


def random_stream(rng, n_tags, span_ps, rep_period_ps=REP_PS):
    times = np.sort(rng.integers(0, span_ps, n_tags))
    channels = rng.integers(1, 3, n_tags)
    return make_stream(channels, times, rep_period_ps, span_ps).sorted()


def brute_force_counts(a, b, edges):
    """O(N^2) pair enumeration: pairs with b - a in [edges[k], edges[k+1])."""
    delays = np.subtract.outer(np.asarray(b, dtype=np.int64), np.asarray(a, dtype=np.int64)).ravel()
    at_least = np.array([np.count_nonzero(delays >= e) for e in edges])
    return at_least[:-1] - at_least[1:]


@pytest.fixture
def rng():
    return np.random.default_rng(20140601)


@pytest.fixture
def poisson_config():
    """Short coherent-source run: flat g2, no intensity states."""
    return config_from_dict({
        "emitter": {"poisson_rate": 100_000.0},
        "acquisition": {"duration_s": 2.0, "seed": 7},
        "analysis": {"correlator": {"align_to_pulses": False}},
    }, name="poisson")


@pytest.fixture
def dr1_short_config():
    return config_from_dict({
        "emitter": {"tau_x": 65.0, "tau_a_minus": 18.3, "tau_a_plus": 4.9,
                    "dwell_bright_ms": 10.0, "dwell_grey_ms": 2.0},
        "acquisition": {"duration_s": 1.5, "seed": 11},
        "analysis": {"windows": {"grey_max_per_ms": 40.0, "bright_min_per_ms": 70.0}},
    }, name="dr1-short")


def write_stage_outputs(outdir, tau_x=65.0, tau_trion=11.6, g2=(0.12, 0.32, 0.14),
                        intensities=(86.0, 30.0), fractions=(0.765, 0.065, 0.17)):
    """The three JSON files the report stage reads, with hand-picked measurements."""
    outdir.mkdir(parents=True, exist_ok=True)
    selection = {
        "fractions": dict(zip(("bright", "grey", "discarded"), fractions)),
        "intensities_per_ms": {"bright": intensities[0], "grey": intensities[1]},
    }
    lifetimes = {"bright": {"tau_ns": tau_x}, "grey": {"tau_ns": tau_trion}}
    correlations = {name: {"g2_zero": value, "flatness_plateau": 1.0}
                    for name, value in zip(("bright", "grey", "all"), g2)}
    for name, data in (("selection", selection), ("lifetimes", lifetimes), ("correlations", correlations)):
        (outdir / f"{name}.json").write_text(json.dumps(data))
    return outdir


@pytest.fixture
def dr1_stage_outputs(tmp_path):
    return write_stage_outputs(tmp_path / "dr1")

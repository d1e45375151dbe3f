"""Intensity binning, two-state histogram fit and photon post-selection."""
from dataclasses import dataclass
import logging
import math
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from photonstats.errors import (
    DegenerateSeparationError,
    StreamMismatchError,
    UnimodalHistogramError,
)
from photonstats.timetags import LiveMask, TimeTagStream

logger = logging.getLogger(__name__)

DEFAULT_BIN_US = 250.0
BRIGHT, GREY, DISCARDED = 0, 1, -1
CLASS_NAMES = {BRIGHT: "bright", GREY: "grey", DISCARDED: "discarded"}

EM_TOLERANCE = 1e-9
EM_MAX_ITERATIONS = 500


@dataclass(frozen=True)
class IntensityTrace:
    bin_width_us: float
    counts: np.ndarray
    origin_ps: int = 0

    @property
    def bin_ps(self) -> int:
        return int(round(self.bin_width_us * 1e6))

    @property
    def bin_ms(self) -> float:
        return self.bin_width_us * 1e-3

    def __len__(self) -> int:
        return int(self.counts.size)

    def to_frame(self, classes: Optional[np.ndarray] = None) -> pd.DataFrame:
        frame = pd.DataFrame({"bin_index": np.arange(self.counts.size), "counts": self.counts})
        if classes is not None:
            frame["state"] = [CLASS_NAMES[int(c)] for c in classes]
        return frame


@dataclass(frozen=True)
class IntensityHistogram:
    values: np.ndarray
    occurrences: np.ndarray
    bin_width_us: float = DEFAULT_BIN_US

    @classmethod
    def from_trace(cls, trace: IntensityTrace) -> "IntensityHistogram":
        occurrences = np.bincount(trace.counts) if len(trace) else np.zeros(1, dtype=np.int64)
        return cls(np.arange(occurrences.size), occurrences, trace.bin_width_us)

    @property
    def total(self) -> int:
        return int(self.occurrences.sum())

    def percentile(self, q: float) -> int:
        cdf = np.cumsum(self.occurrences) / self.total
        return int(self.values[np.searchsorted(cdf, q)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"counts_per_bin": self.values, "occurrences": self.occurrences})


@dataclass(frozen=True)
class PoissonMixture:
    weight_grey: float
    mean_grey: float
    weight_bright: float
    mean_bright: float
    bin_width_us: float = DEFAULT_BIN_US
    log_likelihood: float = math.nan
    chi_square: float = math.nan
    iterations: int = 0

    def posterior_grey(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts)
        log_g = math.log(self.weight_grey) + stats.poisson.logpmf(counts, self.mean_grey)
        log_b = math.log(self.weight_bright) + stats.poisson.logpmf(counts, self.mean_bright)
        return 1.0 / (1.0 + np.exp(log_b - log_g))

    def per_ms(self, counts_per_bin: float) -> float:
        return counts_per_bin / (self.bin_width_us * 1e-3)

    @property
    def intensity_grey(self) -> float:
        return self.per_ms(self.mean_grey)

    @property
    def intensity_bright(self) -> float:
        return self.per_ms(self.mean_bright)

    def to_dict(self) -> dict:
        return {
            "weight_grey": self.weight_grey, "mean_grey": self.mean_grey,
            "weight_bright": self.weight_bright, "mean_bright": self.mean_bright,
            "intensity_grey_per_ms": self.intensity_grey, "intensity_bright_per_ms": self.intensity_bright,
            "bin_width_us": self.bin_width_us, "log_likelihood": self.log_likelihood,
            "chi_square": self.chi_square, "iterations": self.iterations,
        }


@dataclass(frozen=True)
class WindowPolicy:
    """Posterior threshold policy, or manual thresholds in counts/ms."""

    posterior: float = 0.99
    grey_max_per_ms: Optional[float] = None
    bright_min_per_ms: Optional[float] = None

    @property
    def manual(self) -> bool:
        return self.grey_max_per_ms is not None and self.bright_min_per_ms is not None


@dataclass(frozen=True)
class StateWindows:
    """grey: counts <= upper_grey, bright: counts >= lower_bright (counts/bin)."""

    upper_grey: float
    lower_bright: float
    bin_width_us: float = DEFAULT_BIN_US

    def __post_init__(self):
        if not self.upper_grey < self.lower_bright:
            raise DegenerateSeparationError(
                f"grey window [0, {self.upper_grey}] overlaps bright window [{self.lower_bright}, inf)")

    def classify(self, counts: np.ndarray) -> np.ndarray:
        classes = np.full(np.shape(counts), DISCARDED, dtype=np.int8)
        classes[counts <= self.upper_grey] = GREY
        classes[counts >= self.lower_bright] = BRIGHT
        return classes

    @property
    def grey_max_per_ms(self) -> float:
        return self.upper_grey / (self.bin_width_us * 1e-3)

    @property
    def bright_min_per_ms(self) -> float:
        return self.lower_bright / (self.bin_width_us * 1e-3)

    def to_dict(self) -> dict:
        return {"upper_grey": self.upper_grey, "lower_bright": self.lower_bright,
                "bin_width_us": self.bin_width_us, "grey_max_per_ms": self.grey_max_per_ms,
                "bright_min_per_ms": self.bright_min_per_ms}


@dataclass(frozen=True)
class PostSelection:
    bright_stream: TimeTagStream
    grey_stream: TimeTagStream
    fractions: Tuple[float, float, float]  # bright, grey, discarded
    bin_classes: np.ndarray
    photon_classes: np.ndarray

    @property
    def occupancy(self) -> Tuple[float, float, float]:
        shares = state_occupancy(self.bin_classes)
        return shares["bright"], shares["grey"], shares["discarded"]

    def purity(self, truth: np.ndarray) -> float:
        """Share of non-discarded photons whose class matches the simulator label."""
        assigned = self.photon_classes != DISCARDED
        if not assigned.any():
            return math.nan
        return float(np.mean(self.photon_classes[assigned] == truth[assigned]))


def state_occupancy(bin_classes: np.ndarray) -> dict:
    """Fraction of bins (time) spent in each class."""
    n = max(np.size(bin_classes), 1)
    return {CLASS_NAMES[c]: float(np.count_nonzero(bin_classes == c)) / n for c in (BRIGHT, GREY, DISCARDED)}


def bin_counts(stream: TimeTagStream, bin_width_us: float = DEFAULT_BIN_US) -> IntensityTrace:
    """Counts per bin over both channels; the trailing partial bin is dropped."""
    bin_ps = int(round(bin_width_us * 1e6))
    if bin_ps < 1:
        raise StreamMismatchError(f"bin width {bin_width_us} us is below the 1 ps tag resolution")
    n_bins = stream.duration_ps // bin_ps
    index = stream.times // bin_ps
    counts = np.bincount(index[index < n_bins], minlength=n_bins).astype(np.int64)
    return IntensityTrace(bin_width_us, counts)


def _poisson_logpmf(values: np.ndarray, means: np.ndarray) -> np.ndarray:
    return stats.poisson.logpmf(values[:, None], means[None, :])


def fit_two_poisson(hist: IntensityHistogram) -> PoissonMixture:
    """Maximum-likelihood two-component Poisson mixture by expectation-maximisation."""
    populated = hist.occurrences > 0
    if np.count_nonzero(populated) < 2:
        raise UnimodalHistogramError("histogram has fewer than two distinct values")
    c = hist.values[populated].astype(float)
    h = hist.occurrences[populated].astype(float)
    n = h.sum()

    means = np.array([hist.percentile(0.10), hist.percentile(0.90)], dtype=float)
    if means[0] == means[1]:
        means[1] += 1.0
    means = np.maximum(means, 0.5)
    weights = np.array([0.5, 0.5])
    log_lik, iterations = -math.inf, 0
    for iterations in range(1, EM_MAX_ITERATIONS + 1):
        joint = _poisson_logpmf(c, means) + np.log(weights)
        norm = np.logaddexp(joint[:, 0], joint[:, 1])
        resp = np.exp(joint - norm[:, None])
        new_log_lik = float(np.sum(h * norm))
        mass = (h[:, None] * resp).sum(axis=0)
        weights = mass / n
        means = np.maximum((h[:, None] * resp * c[:, None]).sum(axis=0) / np.maximum(mass, 1e-300), 1e-9)
        improved = (new_log_lik - log_lik) / n
        log_lik = new_log_lik
        if improved < EM_TOLERANCE:
            break

    order = np.argsort(means)
    means, weights = means[order], weights[order]
    single = float(np.sum(h * stats.poisson.logpmf(c, np.sum(h * c) / n)))
    if means[1] - means[0] < 1.0:
        raise UnimodalHistogramError(f"modes at {means[0]:.2f} and {means[1]:.2f} counts/bin are not separated")
    if weights.min() < 1e-3 or log_lik - single < math.log(n):
        raise UnimodalHistogramError("a second Poisson component does not improve the fit")

    expected = n * np.exp(np.logaddexp(*(_poisson_logpmf(c, means) + np.log(weights)).T))
    outside = (c <= means[0] + 2 * math.sqrt(means[0])) | (c >= means[1] - 2 * math.sqrt(means[1]))
    dof = max(int(np.count_nonzero(outside)) - 3, 1)
    chi_square = float(np.sum(((h - expected) ** 2 / expected)[outside]) / dof)

    mixture = PoissonMixture(float(weights[0]), float(means[0]), float(weights[1]), float(means[1]),
                             hist.bin_width_us, log_lik, chi_square, iterations)
    logger.info("two-Poisson fit: grey %.2f (w=%.3f), bright %.2f (w=%.3f) counts/bin after %d iterations",
                mixture.mean_grey, mixture.weight_grey, mixture.mean_bright, mixture.weight_bright, iterations)
    return mixture


def select_windows(mixture: Optional[PoissonMixture], policy: WindowPolicy = WindowPolicy(),
                   bin_width_us: Optional[float] = None) -> StateWindows:
    if bin_width_us is None:
        if mixture is None:
            raise DegenerateSeparationError("no mixture and no bin width to place windows")
        bin_width_us = mixture.bin_width_us
    bin_ms = bin_width_us * 1e-3
    if policy.manual:
        return StateWindows(policy.grey_max_per_ms * bin_ms, policy.bright_min_per_ms * bin_ms, bin_width_us)
    if mixture is None:
        raise DegenerateSeparationError("posterior windows need a bimodal mixture fit")

    top = int(math.ceil(mixture.mean_bright + 10 * math.sqrt(mixture.mean_bright) + 10))
    counts = np.arange(top + 1)
    grey = mixture.posterior_grey(counts)
    grey_ok = np.flatnonzero(grey > policy.posterior)
    bright_ok = np.flatnonzero(1.0 - grey > policy.posterior)
    if grey_ok.size == 0 or bright_ok.size == 0:
        raise DegenerateSeparationError(f"state posteriors never exceed {policy.posterior}")
    upper_grey, lower_bright = int(grey_ok.max()), int(bright_ok.min())
    if upper_grey >= lower_bright:
        raise DegenerateSeparationError(f"posterior windows overlap ({upper_grey} >= {lower_bright})")
    return StateWindows(float(upper_grey), float(lower_bright), bin_width_us)


def post_select(stream: TimeTagStream, trace: IntensityTrace, windows: StateWindows) -> PostSelection:
    """Assign every photon the class of the bin it falls in."""
    bin_ps = trace.bin_ps
    if trace.origin_ps != 0 or len(trace) != stream.duration_ps // bin_ps:
        raise StreamMismatchError(
            f"trace of {len(trace)} bins at origin {trace.origin_ps} does not match a "
            f"{stream.duration_ps} ps stream")
    bin_classes = windows.classify(trace.counts)
    index = (stream.times - trace.origin_ps) // bin_ps
    photon_classes = np.full(len(stream), DISCARDED, dtype=np.int8)
    inside = index < len(trace)
    photon_classes[inside] = bin_classes[index[inside]]

    if len(stream):
        fractions = tuple(float(np.count_nonzero(photon_classes == c)) / len(stream)
                          for c in (BRIGHT, GREY, DISCARDED))
    else:
        n = max(len(trace), 1)
        fractions = tuple(float(np.count_nonzero(bin_classes == c)) / n for c in (BRIGHT, GREY, DISCARDED))

    def substream(cls: int) -> TimeTagStream:
        live = LiveMask(bin_ps, bin_classes == cls, trace.origin_ps)
        return stream.subset(photon_classes == cls, live=live)

    selection = PostSelection(substream(BRIGHT), substream(GREY), fractions, bin_classes, photon_classes)
    logger.info("post-selection: bright %.3f, grey %.3f, discarded %.3f of photons", *fractions)
    return selection

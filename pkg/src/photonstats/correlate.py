"""Cross-channel photon correlation: log-binned g2(tau) and the pulsed ACF.

Coincidences are counted exactly with sorted-array searches, in chunks of
the start channel; chunk results are integers, so any thread count gives
identical output.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, signal, stats

from photonstats.errors import InsufficientStatisticsError, StreamMismatchError
from photonstats.timetags import LiveMask, TimeTagStream

logger = logging.getLogger(__name__)

CHUNK_TAGS = 1 << 18
MIN_COINCIDENCES = 100


@dataclass(frozen=True)
class CorrelationConfig:
    start_ps: int = 100_000  # 100 ns
    stop_ps: int = 100_000_000_000  # 100 ms
    bins_per_decade: int = 16
    threads: int = 1
    # snap edges to half-integer multiples of this period so every bin holds whole peaks
    align_ps: int = 0

    def edges(self) -> np.ndarray:
        decades = math.log10(self.stop_ps / self.start_ps)
        n = max(int(round(decades * self.bins_per_decade)), 1)
        edges = np.logspace(math.log10(self.start_ps), math.log10(self.stop_ps), n + 1)
        if self.align_ps > 0:
            edges = (np.floor(edges / self.align_ps) + 0.5) * self.align_ps
        return np.unique(np.rint(edges).astype(np.int64))


@dataclass(frozen=True)
class PulsedConfig:
    periods: int = 8
    resolution_ps: int = 1000
    threads: int = 1


@dataclass(frozen=True)
class CorrelationCurve:
    edges: np.ndarray
    coincidences: np.ndarray
    expected: np.ndarray

    @property
    def lags(self) -> np.ndarray:
        return np.sqrt(self.edges[:-1].astype(float) * self.edges[1:])

    @property
    def g2(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.expected > 0, self.coincidences / self.expected, np.nan)

    @property
    def sigma(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.expected > 0, np.sqrt(self.coincidences) / self.expected, np.nan)

    def plateau(self, lo_ps: float, hi_ps: float) -> float:
        """Ratio estimate of g2 over lag bins lying inside [lo_ps, hi_ps]."""
        inside = (self.edges[:-1] >= lo_ps) & (self.edges[1:] <= hi_ps)
        expected = self.expected[inside].sum()
        return float(self.coincidences[inside].sum() / expected) if expected > 0 else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lag_ps": self.lags, "g2": self.g2, "sigma": self.sigma})


@dataclass(frozen=True)
class PeakSpill:
    """Neighbour-peak tails that fall inside a +-rep/2 integration window."""
    fraction: float = 0.0  # share of a peak's area that lands in other windows
    counts: float = 0.0  # side-peak counts spilled into any one window
    background: float = 0.0  # flat counts per window
    decay_ps: float = math.nan

    def zero_estimate(self, counts: float) -> float:
        """Zero-peak counts with the neighbour spill removed and its own lost tails restored."""
        peak = (counts - self.counts - self.background) / (1.0 - self.fraction)
        return max(peak + self.background, 0.0)


@dataclass(frozen=True)
class PulsedACF:
    rep_period_ps: int
    periods: int
    resolution_ps: int
    fine_counts: np.ndarray
    peak_counts: np.ndarray  # peaks -periods..periods
    long_delay_g2: float
    normalization: float
    g2_zero: float
    spill: PeakSpill = PeakSpill()

    @classmethod
    def measured(cls, g2_zero: float, rep_period_ps: int = 400_000) -> "PulsedACF":
        """An externally measured g2(0) with no histogram behind it."""
        return cls(rep_period_ps, 0, 0, np.zeros(0, np.int64), np.zeros(1, np.int64), math.nan, math.nan, g2_zero)

    @property
    def peak_index(self) -> np.ndarray:
        return np.arange(-self.periods, self.periods + 1)

    @property
    def zero_counts(self) -> int:
        return int(self.peak_counts[self.periods])

    @property
    def side_mean(self) -> float:
        side = np.delete(self.peak_counts, self.periods)
        return float(side.mean()) if side.size else math.nan

    def peaks_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"peak_index": self.peak_index,
                             "integral_normalized": self.peak_counts * self.normalization})

    def fine_frame(self) -> pd.DataFrame:
        half = (self.periods + 0.5) * self.rep_period_ps
        delay = -half + (np.arange(self.fine_counts.size) + 0.5) * self.resolution_ps
        return pd.DataFrame({"delay_ps": delay, "counts": self.fine_counts})


def _chunks(n: int, size: Optional[int] = None):
    size = size or CHUNK_TAGS
    return [(start, min(start + size, n)) for start in range(0, n, size)]


def _map_chunks(fn, n: int, threads: int):
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(fn, _chunks(n)))


def coincidence_counts(a: np.ndarray, b: np.ndarray, edges: np.ndarray, threads: int = 1) -> np.ndarray:
    """Number of pairs with (b - a) in [edges[k], edges[k+1]) for sorted a, b."""
    edges = np.asarray(edges, dtype=np.int64)

    def below_each_edge(bounds):
        chunk = a[bounds[0]:bounds[1]]
        return np.array([np.searchsorted(b, chunk + e, side="left").sum() for e in edges], dtype=np.int64)

    if a.size == 0 or b.size == 0:
        return np.zeros(edges.size - 1, dtype=np.int64)
    cumulative = np.sum(_map_chunks(below_each_edge, a.size, threads), axis=0)
    return np.diff(cumulative)


def pair_delays(a: np.ndarray, b: np.ndarray, half_window: int, threads: int = 1) -> np.ndarray:
    """All delays b - a within [-half_window, half_window), in start-tag order."""

    def delays(bounds):
        chunk = a[bounds[0]:bounds[1]]
        lo = np.searchsorted(b, chunk - half_window, side="left")
        hi = np.searchsorted(b, chunk + half_window, side="left")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        first = np.cumsum(counts) - counts
        within = np.arange(total) - np.repeat(first, counts)
        return b[np.repeat(lo, counts) + within] - np.repeat(chunk, counts)

    if a.size == 0 or b.size == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(_map_chunks(delays, a.size, threads))


def _overlap_integral(edges: np.ndarray, duration_ps: int, live: Optional[LiveMask]) -> np.ndarray:
    """Integral over each lag bin of the measure of {t : t and t + tau both live}."""
    tau = edges.astype(float)
    if live is None:
        t = np.clip(tau, 0.0, float(duration_ps))
        cumulative = duration_ps * t - 0.5 * t * t
        return np.diff(cumulative)
    w = float(live.bin_ps)
    m = live.mask.astype(float)
    span = min(int(math.ceil(tau.max() / w)) + 2, m.size)
    full = signal.fftconvolve(m, m[::-1], mode="full")
    c = np.zeros(span + 1)
    c[:span] = np.rint(full[m.size - 1:m.size - 1 + span])
    # knots of the piecewise-linear overlap A(j w) = w c_j, cumulative integral at each knot
    knots = np.concatenate(([0.0], np.cumsum(0.5 * w * w * (c[:-1] + c[1:]))))
    j = np.minimum((tau // w).astype(int), span - 1)
    f = np.clip(tau / w - j, 0.0, 1.0)
    cumulative = knots[j] + w * w * (c[j] * f + 0.5 * (c[j + 1] - c[j]) * f * f)
    return np.diff(cumulative)


def log_g2(stream_a: TimeTagStream, stream_b: TimeTagStream,
           config: CorrelationConfig = CorrelationConfig(),
           live: Optional[LiveMask] = None) -> CorrelationCurve:
    """g2 on log-spaced positive lags; the live mask (if any) sets rates and overlap."""
    if len(stream_a) == 0 or len(stream_b) == 0:
        raise InsufficientStatisticsError("cannot correlate an empty stream")
    live = live if live is not None else stream_a.live
    live_ps = live.live_ps if live is not None else min(stream_a.duration_ps, stream_b.duration_ps)
    if live_ps <= 0:
        raise StreamMismatchError("streams have no overlapping live time")
    edges = config.edges()
    counts = coincidence_counts(stream_a.times, stream_b.times, edges, config.threads)
    rate_a, rate_b = len(stream_a) / live_ps, len(stream_b) / live_ps
    expected = rate_a * rate_b * _overlap_integral(edges, min(stream_a.duration_ps, stream_b.duration_ps), live)
    return CorrelationCurve(edges, counts, expected)


def cross_g2(stream: TimeTagStream, config: CorrelationConfig = CorrelationConfig()) -> CorrelationCurve:
    """HBT correlation of channel 1 (start) against channel 2 (stop)."""
    return log_g2(stream.channel_stream(1), stream.channel_stream(2), config, stream.live)


def pulsed_acf(stream: TimeTagStream, rep_period_ps: int, long_delay_g2: float,
               config: PulsedConfig = PulsedConfig()) -> PulsedACF:
    """Cross-channel delay histogram over +-periods and its per-peak integrals."""
    if rep_period_ps <= 0:
        raise StreamMismatchError("rep_period must be > 0")
    k_max = config.periods
    half = (2 * k_max + 1) * rep_period_ps // 2
    delays = pair_delays(stream.channel(1), stream.channel(2), half, config.threads)

    peak = np.floor_divide(delays + rep_period_ps // 2, rep_period_ps)
    peak_counts = np.bincount(peak + k_max, minlength=2 * k_max + 1)[:2 * k_max + 1].astype(np.int64)
    n_fine = int(math.ceil(2 * half / config.resolution_ps))
    fine_counts = np.bincount((delays + half) // config.resolution_ps, minlength=n_fine)[:n_fine].astype(np.int64)

    side = np.delete(peak_counts, k_max).mean()
    normalization = long_delay_g2 / side if side > 0 else math.nan
    if delays.size < MIN_COINCIDENCES:
        acf = PulsedACF(rep_period_ps, k_max, config.resolution_ps, fine_counts, peak_counts,
                        long_delay_g2, normalization, peak_counts[k_max] * normalization)
        raise InsufficientStatisticsError(f"only {delays.size} coincidences in +-{k_max} periods", partial=acf)
    spill = side_peak_spill(delays, peak, rep_period_ps, 2 * k_max, config.resolution_ps)
    acf = PulsedACF(rep_period_ps, k_max, config.resolution_ps, fine_counts, peak_counts, long_delay_g2,
                    normalization, spill.zero_estimate(peak_counts[k_max]) * normalization, spill)
    logger.info("pulsed ACF: %d coincidences, zero peak %d (%.1f spilled), side mean %.1f, g2(0) = %.3f",
                delays.size, acf.zero_counts, spill.counts, side, acf.g2_zero)
    return acf


def side_peak_spill(delays: np.ndarray, peak: np.ndarray, rep_period_ps: int, n_side: int,
                    resolution_ps: int) -> PeakSpill:
    """Fit the folded side-peak profile and return how much of each peak leaves its window.

    A side peak is taken as A exp(-|x|/lambda) repeated every period on a
    flat floor. The image sum is fitted (weighted non-negative least squares
    for A and the floor, bounded search for lambda); the tails of all
    neighbours together put exp(-rep/(2 lambda)) of one peak area into any
    window.
    """
    side = peak != 0
    if np.count_nonzero(side) < MIN_COINCIDENCES or n_side == 0:
        return PeakSpill()
    n_fold = max(rep_period_ps // resolution_ps, 8)
    offset = delays[side] - peak[side] * rep_period_ps + rep_period_ps // 2
    y = np.bincount(offset * n_fold // rep_period_ps, minlength=n_fold)[:n_fold].astype(float)
    distance = np.abs((np.arange(n_fold) + 0.5) * rep_period_ps / n_fold - rep_period_ps / 2)
    weights = 1.0 / np.sqrt(np.maximum(y, 1.0))

    def images(decay):
        wrapped = np.exp(-distance / decay) + np.exp(-(rep_period_ps - distance) / decay)
        return wrapped / -np.expm1(-rep_period_ps / decay)

    def solve(log_decay):
        design = np.stack([images(math.exp(log_decay)), np.ones(n_fold)], axis=1)
        return optimize.nnls(design * weights[:, None], y * weights)

    best = optimize.minimize_scalar(lambda v: solve(v)[1], method="bounded",
                                    bounds=(math.log(resolution_ps), math.log(rep_period_ps / 2)))
    decay = math.exp(best.x)
    (amplitude, floor), _ = solve(best.x)
    fraction = math.exp(-rep_period_ps / (2 * decay))
    peak_area = amplitude * images(decay).sum() / n_side
    return PeakSpill(fraction, fraction * peak_area, floor * n_fold / n_side, decay)


def g2_zero_with_ci(acf: PulsedACF, level: float = 0.6827) -> Tuple[float, Tuple[float, float]]:
    """g2(0) with a central Poisson (Garwood) interval on the zero-peak counts."""
    n = acf.zero_counts
    tail = (1.0 - level) / 2.0
    lo = 0.0 if n == 0 else stats.chi2.ppf(tail, 2 * n) / 2.0
    # the zero-count upper limit uses the one-sided level, 1 - tail
    hi = stats.chi2.ppf(1.0 - tail, 2 * n + 2) / 2.0
    return acf.g2_zero, (float(acf.spill.zero_estimate(lo) * acf.normalization),
                         float(acf.spill.zero_estimate(hi) * acf.normalization))


def plateau_g2(curve: CorrelationCurve, lo_ps: float, hi_ps: float) -> float:
    """Mean g2 over a lag window; the pulsed-ACF normalisation target."""
    value = curve.plateau(lo_ps, hi_ps)
    if math.isnan(value):
        raise InsufficientStatisticsError(f"no lag bins inside [{lo_ps}, {hi_ps}] ps")
    return value

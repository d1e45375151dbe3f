import math

import numpy as np
import pytest

from photonstats import correlate
from photonstats.correlate import (
    CorrelationConfig,
    PulsedACF,
    coincidence_counts,
    cross_g2,
    g2_zero_with_ci,
    log_g2,
    pair_delays,
    plateau_g2,
    pulsed_acf,
)
from photonstats.errors import InsufficientStatisticsError
from photonstats.simulate import poissonian_reference_stream
from photonstats.timetags import LiveMask

from conftest import REP_PS, brute_force_counts, make_stream, random_stream

SMALL = CorrelationConfig(start_ps=1_000, stop_ps=100_000_000, bins_per_decade=4)


@pytest.fixture(scope="module")
def poisson_stream():
    return poissonian_reference_stream(1e5, 4.0, seed=7)


def single_photon_source(rng, tau_ns, n_pulses=2_000_000, emission=0.2):
    pulses = np.flatnonzero(rng.random(n_pulses) < emission)
    times = pulses * REP_PS + np.rint(rng.exponential(tau_ns * 1000, pulses.size)).astype(np.int64)
    order = np.argsort(times, kind="stable")
    channels = rng.integers(1, 3, pulses.size)[order]
    return make_stream(channels, times[order], REP_PS, n_pulses * REP_PS)


def brute_force_peaks(a, b, rep, periods):
    half = (2 * periods + 1) * rep // 2
    delays = np.subtract.outer(b, a).ravel()
    delays = delays[(delays >= -half) & (delays < half)]
    peaks = np.floor_divide(delays + rep // 2, rep) + periods
    return np.bincount(peaks, minlength=2 * periods + 1)[:2 * periods + 1]


class TestOracleEquivalence:
    def test_log_binned_counts_match_pair_enumeration(self, rng):
        edges = SMALL.edges()
        for _ in range(50):
            stream = random_stream(rng, int(rng.integers(10, 1500)), 10 ** 8)
            a, b = stream.channel(1), stream.channel(2)
            assert np.array_equal(coincidence_counts(a, b, edges), brute_force_counts(a, b, edges))

    def test_exchange_mirrors_lags(self, rng):
        stream = random_stream(rng, 800, 10 ** 7)
        a, b = stream.channel(1), stream.channel(2)
        edges = SMALL.edges()
        negative = -edges[::-1] + 1  # (b - a) in (-e2, -e1]  <=>  (a - b) in [e1, e2)
        assert np.array_equal(coincidence_counts(b, a, edges), brute_force_counts(a, b, negative)[::-1])

    def test_acf_peaks_match_pair_enumeration(self, rng):
        rep, periods = 10_000, 3
        config = correlate.PulsedConfig(periods=periods, resolution_ps=100)
        for _ in range(50):
            stream = random_stream(rng, int(rng.integers(200, 1500)), 10 ** 7, rep_period_ps=rep)
            try:
                acf = pulsed_acf(stream, rep, 1.0, config)
            except InsufficientStatisticsError as e:
                acf = e.partial
            expected = brute_force_peaks(stream.channel(1), stream.channel(2), rep, periods)
            assert np.array_equal(acf.peak_counts, expected)
            assert acf.fine_counts.sum() == expected.sum()

    def test_chunked_threads_match_sequential(self, rng, monkeypatch):
        stream = random_stream(rng, 5000, 10 ** 8)
        a, b = stream.channel(1), stream.channel(2)
        edges = SMALL.edges()
        sequential = coincidence_counts(a, b, edges)
        delays = np.sort(pair_delays(a, b, 50_000))
        monkeypatch.setattr(correlate, "CHUNK_TAGS", 97)
        assert np.array_equal(coincidence_counts(a, b, edges, threads=4), sequential)
        assert np.array_equal(np.sort(pair_delays(a, b, 50_000, threads=4)), delays)


class TestLogG2:
    def test_poisson_reference_is_flat(self, poisson_stream):
        curve = cross_g2(poisson_stream)
        # sqrt(N) sigma understates wide long-lag bins, whose pair counts are correlated
        deviation = np.abs(curve.g2 - 1.0)
        assert np.all(deviation < 5 * curve.sigma + 0.005)
        short = curve.lags < 1e8
        assert np.mean(deviation[short] < 3 * curve.sigma[short]) >= 0.9
        assert plateau_g2(curve, 1e6, 1e10) == pytest.approx(1.0, abs=0.005)

    def test_independent_sources_are_uncorrelated(self):
        first = poissonian_reference_stream(5e4, 4.0, seed=1)
        second = poissonian_reference_stream(5e4, 4.0, seed=2)
        curve = log_g2(first.channel_stream(1), second.channel_stream(2))
        assert curve.plateau(1e6, 1e10) == pytest.approx(1.0, abs=0.01)

    def test_live_mask_keeps_selected_bins_flat(self, poisson_stream, rng):
        bin_ps = 250_000_000
        n_bins = poisson_stream.duration_ps // bin_ps
        selected = rng.random(n_bins) < 0.3
        index = poisson_stream.times // bin_ps
        inside = index < n_bins
        keep = np.zeros(len(poisson_stream), dtype=bool)
        keep[inside] = selected[index[inside]]
        substream = poisson_stream.subset(keep, live=LiveMask(bin_ps, selected))
        curve = cross_g2(substream)
        assert curve.plateau(1e6, 1e10) == pytest.approx(1.0, abs=0.02)
        long_lags = curve.lags > 1e9
        assert np.nanmean(curve.g2[long_lags]) == pytest.approx(1.0, abs=0.05)

    def test_telegraph_stream_bunches(self, rng):
        # 1 ms bins alternating between 86 and 30 counts/ms, 92 % / 8 % of the time
        bin_ps, n_bins = 10 ** 9, 4000
        bright = rng.random(n_bins) < 0.92
        counts = rng.poisson(np.where(bright, 86.0, 30.0))
        times = np.sort(np.concatenate([
            rng.integers(k * bin_ps, (k + 1) * bin_ps, c) for k, c in enumerate(counts)]))
        stream = make_stream(rng.integers(1, 3, times.size), times, duration_ps=n_bins * bin_ps)
        curve = cross_g2(stream, CorrelationConfig(start_ps=1_000_000, stop_ps=10 ** 11, bins_per_decade=8))
        expected = (0.92 * 86 ** 2 + 0.08 * 30 ** 2) / (0.92 * 86 + 0.08 * 30) ** 2
        assert curve.plateau(1e6, 1e8) == pytest.approx(expected, abs=0.01)
        assert curve.plateau(2e9, 1e11) == pytest.approx(1.0, abs=0.01)

    def test_empty_stream(self):
        empty = make_stream([], [], duration_ps=10 ** 9)
        with pytest.raises(InsufficientStatisticsError):
            log_g2(empty, empty)

    def test_edges_aligned_to_pulses(self):
        edges = CorrelationConfig(align_ps=400_000).edges()
        assert np.all(edges % 400_000 == 200_000)
        assert np.all(np.diff(edges) > 0)

    def test_curve_frame_columns(self, poisson_stream):
        frame = cross_g2(poisson_stream, SMALL).to_frame()
        assert frame.columns.tolist() == ["lag_ps", "g2", "sigma"]

    def test_plateau_without_bins(self, poisson_stream):
        with pytest.raises(InsufficientStatisticsError):
            plateau_g2(cross_g2(poisson_stream, SMALL), 1e12, 1e13)


class TestPulsedACF:
    def test_poisson_reference_has_no_antibunching(self, poisson_stream):
        acf = pulsed_acf(poisson_stream, 400_000, 1.0)
        assert acf.g2_zero == pytest.approx(1.0, abs=4 / math.sqrt(acf.zero_counts) + 0.01)
        assert acf.side_mean * acf.normalization == pytest.approx(1.0)

    def test_normalisation_follows_long_delay_value(self, poisson_stream):
        acf = pulsed_acf(poisson_stream, 400_000, 1.2)
        assert acf.side_mean * acf.normalization == pytest.approx(1.2)
        assert acf.peaks_frame().columns.tolist() == ["peak_index", "integral_normalized"]
        assert acf.peaks_frame()["peak_index"].tolist() == list(range(-8, 9))
        assert acf.fine_frame().columns.tolist() == ["delay_ps", "counts"]

    def test_too_few_coincidences_carry_partial(self):
        stream = make_stream([1, 2, 1, 2], [0, 1_000, 800_000, 801_000], duration_ps=10 ** 6)
        with pytest.raises(InsufficientStatisticsError) as info:
            pulsed_acf(stream, 400_000, 1.0)
        assert isinstance(info.value.partial, PulsedACF)
        assert info.value.partial.zero_counts == 2

    def test_neighbour_tails_are_removed_from_the_zero_peak(self, rng):
        # one photon per pulse: every zero-window pair is a neighbour tail
        acf = pulsed_acf(single_photon_source(rng, 65.0), REP_PS, 1.0)
        spilled = math.exp(-200 / 65)
        assert acf.zero_counts / acf.side_mean == pytest.approx(spilled, abs=0.005)
        assert acf.spill.fraction == pytest.approx(spilled, rel=0.1)
        assert acf.spill.decay_ps == pytest.approx(65_000, rel=0.05)
        assert acf.g2_zero == pytest.approx(0.0, abs=0.01)
        value, (lo, hi) = g2_zero_with_ci(acf)
        assert lo <= value <= hi

    def test_short_lifetime_needs_no_correction(self, rng):
        acf = pulsed_acf(single_photon_source(rng, 11.6), REP_PS, 1.0)
        assert acf.spill.fraction < 1e-4
        assert acf.g2_zero == pytest.approx(acf.zero_counts * acf.normalization, abs=1e-3)


class TestConfidenceInterval:
    @staticmethod
    def acf(zero, side):
        peaks = np.full(17, side, dtype=np.int64)
        peaks[8] = zero
        normalization = 1.0 / side
        return PulsedACF(400_000, 8, 1000, np.zeros(1, np.int64), peaks, 1.0, normalization, zero * normalization)

    def test_zero_counts(self):
        value, (lo, hi) = g2_zero_with_ci(self.acf(0, 100))
        assert value == 0.0
        assert lo == 0.0
        assert hi == pytest.approx(1.841 / 100, rel=1e-3)

    def test_large_counts_are_symmetric(self):
        value, (lo, hi) = g2_zero_with_ci(self.acf(10_000, 10_000))
        assert value == pytest.approx(1.0)
        assert value - lo == pytest.approx(0.01, rel=0.02)
        assert hi - value == pytest.approx(0.01, rel=0.02)

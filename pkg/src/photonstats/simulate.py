"""Monte-Carlo time-tag generator for a flickering neutral/charged emitter.

Times inside a pulse are in ns; absolute tag times are integer ps.
The run is cut into fixed-length segments with seeds spawned from the run
seed, so the output does not depend on how many threads process them.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
import logging
from typing import List, Tuple, Union

import numpy as np

from photonstats.errors import ConfigError
from photonstats.physics import EmitterPhysics, ExcitationModel
from photonstats.timetags import TimeTagStream

logger = logging.getLogger(__name__)

PS_PER_NS = 1000
PS_PER_S = 10 ** 12
DEFAULT_REP_PERIOD_PS = 400_000  # 2.5 MHz
SEGMENT_PS = PS_PER_S  # one segment per second of acquisition
DARK_LABEL = -1


class EmitterState(IntEnum):
    NEUTRAL = 0
    CHARGED = 1


@dataclass(frozen=True)
class EmitterModel:
    physics: EmitterPhysics
    excitation: ExcitationModel
    rep_period_ps: int = DEFAULT_REP_PERIOD_PS
    dwell_bright_ms: float = 10.0
    dwell_grey_ms: float = 1.0
    # N_eh above the cap is folded into the biexciton cascade
    max_excitons: int = 2

    def __post_init__(self):
        if self.rep_period_ps <= 0:
            raise ConfigError("rep_period", f"must be > 0, got {self.rep_period_ps}")
        if self.dwell_bright_ms <= 0 or self.dwell_grey_ms <= 0:
            raise ConfigError("dwell", "dwell times must be > 0")
        if self.max_excitons < 2:
            raise ConfigError("max_excitons", f"must be >= 2, got {self.max_excitons}")
        if not self.excitation.mean_excitations > 0:
            raise ConfigError("mean_excitations", "must be > 0 for simulation")

    @property
    def bright_occupancy(self) -> float:
        return self.dwell_bright_ms / (self.dwell_bright_ms + self.dwell_grey_ms)

    @property
    def pulses_per_ms(self) -> float:
        return 1e9 / self.rep_period_ps


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.104
    split_ratio: float = 0.5
    dark_rate: float = 100.0  # counts/s per channel
    dead_time_ps: int = 22_000
    jitter_sigma_ps: float = 150.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("efficiency", f"must be in [0, 1], got {self.efficiency}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio", f"must be in (0, 1), got {self.split_ratio}")
        if self.dead_time_ps < 0 or self.dark_rate < 0 or self.jitter_sigma_ps < 0:
            raise ConfigError("detector", "dead_time, dark_rate and jitter_sigma must be >= 0")


def calibrated_efficiency(model: EmitterModel, bright_counts_per_ms: float) -> float:
    """Detection efficiency giving the requested bright-state count rate."""
    per_pulse = model.excitation.p_at_least(1)
    return bright_counts_per_ms / (per_pulse * model.pulses_per_ms)


def _as_state(state: Union[EmitterState, str, int]) -> EmitterState:
    if isinstance(state, str):
        return EmitterState[state.upper()]
    return EmitterState(state)


def pulse_cascade(state: Union[EmitterState, str, int], n_excitations: int,
                  physics: EmitterPhysics, rng: np.random.Generator) -> List[float]:
    """Emission times (ns after the pulse) of one relaxation cascade."""
    state = _as_state(state)
    if n_excitations <= 0:
        return []
    charged = state is EmitterState.CHARGED
    photons = []
    t = 0.0
    if n_excitations >= 2:
        rate = physics.charged_biexciton_rate if charged else physics.biexciton_rate
        t = rng.exponential(1.0 / rate)
        if rng.random() < 4.0 * physics.gamma_r / rate:
            photons.append(t)
    # whatever happened above, one pair is left
    rate = physics.trion_rate if charged else physics.gamma_r
    t += rng.exponential(1.0 / rate)
    if rng.random() < (physics.q_trion if charged else 1.0):
        photons.append(t)
    return photons


def _cascade_batch(charged: np.ndarray, n: np.ndarray, physics: EmitterPhysics,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised pulse_cascade; returns (pulse index, delay ns, charged) per photon."""
    idx = np.flatnonzero(n >= 1)
    ch = charged[idx]
    pair = n[idx] >= 2
    rate_2x = np.where(ch, physics.charged_biexciton_rate, physics.biexciton_rate)
    t1 = np.where(pair, rng.standard_exponential(idx.size) / rate_2x, 0.0)
    emit1 = pair & (rng.random(idx.size) < 4.0 * physics.gamma_r / rate_2x)
    rate_1 = np.where(ch, physics.trion_rate, physics.gamma_r)
    t2 = t1 + rng.standard_exponential(idx.size) / rate_1
    emit2 = rng.random(idx.size) < np.where(ch, physics.q_trion, 1.0)
    pulses = np.concatenate((idx[emit1], idx[emit2]))
    delays = np.concatenate((t1[emit1], t2[emit2]))
    states = np.concatenate((ch[emit1], ch[emit2]))
    return pulses, delays, states


@dataclass
class FlickerTrajectory:
    """Two-state telegraph process: state flips at every ``switch_ps`` entry."""

    initial: EmitterState
    switch_ps: np.ndarray = field(default_factory=lambda: np.empty(0))

    def charged_at(self, times_ps: np.ndarray) -> np.ndarray:
        flips = np.searchsorted(self.switch_ps, times_ps, side="right")
        return (flips + int(self.initial)) % 2 == 1

    def charged_fraction(self, duration_ps: int) -> float:
        edges = np.concatenate(([0.0], self.switch_ps[self.switch_ps < duration_ps], [float(duration_ps)]))
        spans = np.diff(edges)
        charged = (np.arange(spans.size) + int(self.initial)) % 2 == 1
        return float(spans[charged].sum() / duration_ps)


def flicker_trajectory(model: EmitterModel, duration_ps: int, rng: np.random.Generator) -> FlickerTrajectory:
    initial = EmitterState.NEUTRAL if rng.random() < model.bright_occupancy else EmitterState.CHARGED
    means = {EmitterState.NEUTRAL: model.dwell_bright_ms * 1e9, EmitterState.CHARGED: model.dwell_grey_ms * 1e9}
    switches, t, state = [], 0.0, initial
    while True:
        t += rng.exponential(means[state])
        if t >= duration_ps:
            break
        switches.append(t)
        state = EmitterState(1 - state)
    return FlickerTrajectory(initial, np.asarray(switches, dtype=float))


def _simulate_segment(model: EmitterModel, detector: DetectorModel, flicker: FlickerTrajectory,
                      first_pulse: int, last_pulse: int, duration_ps: int, seed: np.random.SeedSequence):
    rng = np.random.default_rng(seed)
    pulse_ps = np.arange(first_pulse, last_pulse, dtype=np.int64) * model.rep_period_ps
    charged = flicker.charged_at(pulse_ps)
    n = np.minimum(rng.poisson(model.excitation.mean_excitations, pulse_ps.size), model.max_excitons)
    pulses, delays, states = _cascade_batch(charged, n, model.physics, rng)

    detected = rng.random(pulses.size) < detector.efficiency
    to_first = rng.random(pulses.size) < detector.split_ratio
    jitter = rng.normal(0.0, detector.jitter_sigma_ps, pulses.size) if detector.jitter_sigma_ps else np.zeros(pulses.size)

    times = pulse_ps[pulses] + np.rint(delays * PS_PER_NS + jitter).astype(np.int64)
    keep = detected & (times >= 0) & (times <= duration_ps)
    channels = np.where(to_first, 1, 2).astype(np.uint8)
    return channels[keep], times[keep], states[keep].astype(np.int8)


def _dark_counts(detector: DetectorModel, duration_ps: int, rng: np.random.Generator):
    channels, times = [], []
    for channel in (1, 2):
        count = rng.poisson(detector.dark_rate * duration_ps / PS_PER_S)
        times.append(rng.integers(0, duration_ps, count, endpoint=True, dtype=np.int64))
        channels.append(np.full(count, channel, dtype=np.uint8))
    channels, times = np.concatenate(channels), np.concatenate(times)
    return channels, times, np.full(times.size, DARK_LABEL, dtype=np.int8)


def apply_dead_time(times: np.ndarray, dead_time_ps: int) -> np.ndarray:
    """Keep-mask for a sorted single-channel stream with non-paralyzable dead time."""
    keep = np.ones(times.size, dtype=bool)
    if dead_time_ps <= 0 or times.size < 2:
        return keep
    candidates = np.flatnonzero(np.diff(times) < dead_time_ps) + 1
    reference = {}  # dropped tag -> time of the tag that blinded the detector
    for j in candidates:
        ref = times[j - 1] if keep[j - 1] else reference[j - 1]
        if times[j] - ref < dead_time_ps:
            keep[j] = False
            reference[j] = ref
    return keep


def simulate_stream(model: EmitterModel, detector: DetectorModel, duration: float, seed: int,
                    with_truth: bool = False, threads: int = 1) -> TimeTagStream:
    """Simulate ``duration`` seconds of detection events; deterministic in ``seed``."""
    duration_ps = int(round(duration * PS_PER_S))
    if duration_ps < model.rep_period_ps:
        raise ConfigError("duration", f"{duration} s is shorter than one repetition period")

    n_pulses = (duration_ps - 1) // model.rep_period_ps + 1
    per_segment = max(1, SEGMENT_PS // model.rep_period_ps)
    bounds = [(k, min(k + per_segment, n_pulses)) for k in range(0, n_pulses, per_segment)]
    root = np.random.SeedSequence(seed)
    flicker_seed, dark_seed, *segment_seeds = root.spawn(2 + len(bounds))

    flicker = flicker_trajectory(model, duration_ps, np.random.default_rng(flicker_seed))
    logger.info("simulating %d pulses in %d segments (%d flicker switches)",
                n_pulses, len(bounds), flicker.switch_ps.size)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(
            lambda job: _simulate_segment(model, detector, flicker, job[0][0], job[0][1], duration_ps, job[1]),
            zip(bounds, segment_seeds)))
    parts.append(_dark_counts(detector, duration_ps, np.random.default_rng(dark_seed)))

    channels = np.concatenate([p[0] for p in parts])
    times = np.concatenate([p[1] for p in parts])
    labels = np.concatenate([p[2] for p in parts])
    order = np.lexsort((channels, times))
    channels, times, labels = channels[order], times[order], labels[order]

    keep = np.ones(times.size, dtype=bool)
    for channel in (1, 2):
        on_channel = np.flatnonzero(channels == channel)
        keep[on_channel] = apply_dead_time(times[on_channel], detector.dead_time_ps)

    stream = TimeTagStream(
        channels[keep], times[keep], model.rep_period_ps, duration_ps,
        source=f"simulated seed={seed} max_excitons={model.max_excitons}",
        truth=labels[keep] if with_truth else None,
    )
    logger.info("simulated %d tags (%.1f counts/ms)", len(stream), stream.mean_rate())
    return stream


def poissonian_reference_stream(rate: float, duration: float, seed: int,
                                rep_period_ps: int = DEFAULT_REP_PERIOD_PS,
                                split_ratio: float = 0.5) -> TimeTagStream:
    """Homogeneous Poisson arrivals (rate in counts/s) split over two channels."""
    if not rate > 0:
        raise ConfigError("rate", f"must be > 0, got {rate}")
    duration_ps = int(round(duration * PS_PER_S))
    rng = np.random.default_rng(seed)
    count = rng.poisson(rate * duration)
    times = np.sort(rng.integers(0, duration_ps, count, endpoint=True, dtype=np.int64))
    channels = np.where(rng.random(count) < split_ratio, 1, 2).astype(np.uint8)
    order = np.lexsort((channels, times))
    return TimeTagStream(channels[order], times[order], rep_period_ps, duration_ps,
                         source=f"poisson rate={rate:g}/s seed={seed}")

"""Closed-form photon statistics of a pulsed two-state emitter.

Units: rates in ns^-1, times in ns, intensities in counts/ms.
Every function here is pure.
"""
from dataclasses import dataclass
import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from photonstats.errors import PhysicsDomainError

# Multiexciton sums stop once P(N >= m) drops below this fraction of P(N >= 1).
LADDER_TRUNCATION = 1e-12

FLAG_QY_ABOVE_ONE = "qy-above-one"
FLAG_NEGATIVE_AUGER = "negative-auger-rate"
FLAG_SCALING_VIOLATED = "inconsistent-with-statistical-scaling"


@dataclass(frozen=True)
class Checked:
    """A derived quantity plus the model-consistency flags raised computing it."""

    value: float
    flags: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.flags

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class ExcitationModel:
    """Poissonian number of electron-hole pairs created per laser pulse."""

    mean_excitations: float

    def __post_init__(self):
        if not self.mean_excitations >= 0:
            raise PhysicsDomainError(f"mean_excitations must be >= 0, got {self.mean_excitations}")

    def p_at_least(self, m: int) -> float:
        return p_at_least(m, self.mean_excitations)

    def p_exactly(self, m: int) -> float:
        return p_exactly(m, self.mean_excitations)

    def poisson_weight(self) -> float:
        return poisson_weight(self.mean_excitations)

    def ladder_depth(self, limit: int = 64) -> int:
        """Highest m whose P(N >= m) is still above the truncation threshold."""
        p1 = self.p_at_least(1)
        depth = 1
        while depth < limit and self.p_at_least(depth + 1) >= LADDER_TRUNCATION * p1:
            depth += 1
        return depth


@dataclass(frozen=True)
class YieldLadder:
    """Quantum yields Q_1, Q_2, ... of the single, double, ... excited states."""

    q: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if not self.q:
            raise PhysicsDomainError("yield ladder must not be empty")
        for i, v in enumerate(self.q, start=1):
            if not 0.0 <= v <= 1.0:
                raise PhysicsDomainError(f"Q_{i} = {v} outside [0, 1]")


@dataclass(frozen=True)
class EmitterPhysics:
    """Radiative and Auger rates of the neutral / negatively charged emitter.

    ``gamma_a_charged_extra`` is an additional non-radiative channel of the
    charged biexciton only (the extra electron as Auger acceptor); it is zero
    unless a preset needs a charged biexciton darker than the neutral one.
    """

    gamma_r: float
    gamma_a_minus: float = 0.0
    gamma_a_plus: float = 0.0
    gamma_a_charged_extra: float = 0.0

    def __post_init__(self):
        if not self.gamma_r > 0:
            raise PhysicsDomainError(f"gamma_r must be > 0, got {self.gamma_r}")
        for name in ("gamma_a_minus", "gamma_a_plus", "gamma_a_charged_extra"):
            if getattr(self, name) < 0:
                raise PhysicsDomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_lifetimes(cls, tau_x: float, tau_a_minus: float = math.inf,
                       tau_a_plus: float = math.inf) -> "EmitterPhysics":
        return cls(gamma_r=1.0 / tau_x, gamma_a_minus=_inverse(tau_a_minus),
                   gamma_a_plus=_inverse(tau_a_plus))

    @classmethod
    def from_yields(cls, tau_x: float, q_trion: float, q_biexciton: float,
                    q_x: float = 1.0) -> "EmitterPhysics":
        if tau_x <= 0:
            raise PhysicsDomainError(f"tau_x must be > 0, got {tau_x}")
        gamma_r = q_x / tau_x
        rates = auger_rates(gamma_r, q_trion, q_biexciton)
        if not rates.ok:
            raise PhysicsDomainError(f"yields {q_trion}/{q_biexciton} give {', '.join(rates.flags)}")
        return cls(gamma_r=gamma_r, gamma_a_minus=rates.gamma_a_minus, gamma_a_plus=rates.gamma_a_plus)

    @property
    def tau_x(self) -> float:
        return 1.0 / self.gamma_r

    @property
    def trion_rate(self) -> float:
        # statistical scaling: the extra electron doubles the radiative paths
        return 2.0 * self.gamma_r + self.gamma_a_minus

    @property
    def tau_trion(self) -> float:
        return 1.0 / self.trion_rate

    @property
    def biexciton_rate(self) -> float:
        return 4.0 * self.gamma_r + 2.0 * self.gamma_a_plus + 2.0 * self.gamma_a_minus

    @property
    def charged_biexciton_rate(self) -> float:
        return self.biexciton_rate + self.gamma_a_charged_extra

    @property
    def q_trion(self) -> float:
        return trion_qy_from_rates(self.gamma_r, self.gamma_a_minus)

    @property
    def q_biexciton(self) -> float:
        return biexciton_qy_from_rates(self.gamma_r, self.gamma_a_minus, self.gamma_a_plus)

    @property
    def q_charged_biexciton(self) -> float:
        return 4.0 * self.gamma_r / self.charged_biexciton_rate

    @property
    def tau_a_minus(self) -> float:
        return _inverse(self.gamma_a_minus)

    @property
    def tau_a_plus(self) -> float:
        return _inverse(self.gamma_a_plus)


@dataclass(frozen=True)
class AugerRates:
    gamma_a_minus: float
    gamma_a_plus: float
    flags: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.flags

    @property
    def tau_a_minus(self) -> float:
        return _inverse(self.gamma_a_minus)

    @property
    def tau_a_plus(self) -> float:
        return _inverse(self.gamma_a_plus)


@dataclass(frozen=True)
class StateStatistics:
    """One emission state of a flickering emitter, for time-averaged g2(0)."""

    occupancy: float
    mean_intensity: Optional[float]
    g2_zero: float
    q1: float = 1.0

    @property
    def intensity(self) -> float:
        # at fixed excitation the intensity is proportional to Q_1
        return self.q1 if self.mean_intensity is None else self.mean_intensity


def _inverse(x: float) -> float:
    if x == 0:
        return math.inf
    if math.isinf(x):
        return 0.0
    return 1.0 / x


def p_at_least(m: int, mean: float) -> float:
    """P(N >= m) for N ~ Poisson(mean)."""
    if mean < 0:
        raise PhysicsDomainError(f"mean must be >= 0, got {mean}")
    if m <= 0:
        return 1.0
    # sf(m-1) = 1 - cdf(m-1), evaluated without cancellation
    return float(stats.poisson.sf(m - 1, mean))


def p_exactly(m: int, mean: float) -> float:
    if mean < 0:
        raise PhysicsDomainError(f"mean must be >= 0, got {mean}")
    if m < 0:
        return 0.0
    return float(stats.poisson.pmf(m, mean))


def poisson_weight(mean: float) -> float:
    """2 P(N>=2) / P(N>=1)^2, the excitation weight of the pulsed g2(0).

    Tends to 1 for vanishing excitation; mean = 0 itself is 0/0 and rejected.
    """
    if not mean > 0:
        raise PhysicsDomainError("poisson_weight is undefined at mean <= 0; use the limit value 1")
    p1 = p_at_least(1, mean)
    p2 = p_at_least(2, mean)
    return 2.0 * p2 / (p1 * p1)


def trion_qy(tau_x: float, tau_trion: float, tolerance: float = 1e-9) -> Checked:
    """Q_X- = 2 tau_X- / tau_X (negative trion, Q_X = 1)."""
    if tau_x <= 0 or tau_trion <= 0:
        raise PhysicsDomainError(f"lifetimes must be > 0, got tau_x={tau_x}, tau_trion={tau_trion}")
    q = 2.0 * tau_trion / tau_x
    flags = (FLAG_QY_ABOVE_ONE, FLAG_SCALING_VIOLATED) if q > 1.0 + tolerance else ()
    return Checked(q, flags)


def trion_qy_from_rates(gamma_r: float, gamma_a_minus: float) -> float:
    return 2.0 * gamma_r / (2.0 * gamma_r + gamma_a_minus)


def biexciton_qy_from_rates(gamma_r: float, gamma_a_minus: float, gamma_a_plus: float) -> float:
    return 4.0 * gamma_r / (4.0 * gamma_r + 2.0 * gamma_a_plus + 2.0 * gamma_a_minus)


def biexciton_qy_from_g2(g2_zero: float, q_exciton: float, mean: float) -> Checked:
    """Biexciton (or charged biexciton) yield from a post-selected g2(0)."""
    if g2_zero < 0:
        raise PhysicsDomainError(f"g2_zero must be >= 0, got {g2_zero}")
    if not 0.0 < q_exciton <= 1.0:
        raise PhysicsDomainError(f"q_exciton must be in (0, 1], got {q_exciton}")
    q = g2_zero * q_exciton / poisson_weight(mean)
    return Checked(q, (FLAG_QY_ABOVE_ONE,) if q > 1.0 else ())


def auger_rates(gamma_r: float, q_trion: float, q_biexciton: float) -> AugerRates:
    """Invert the trion and biexciton yields into Auger rates to an electron / a hole."""
    if gamma_r <= 0:
        raise PhysicsDomainError(f"gamma_r must be > 0, got {gamma_r}")
    if not 0.0 < q_trion <= 1.0:
        raise PhysicsDomainError(f"q_trion must be in (0, 1], got {q_trion}")
    if not 0.0 < q_biexciton <= 1.0:
        raise PhysicsDomainError(f"q_biexciton must be in (0, 1], got {q_biexciton}")
    gamma_a_minus = 2.0 * gamma_r * (1.0 / q_trion - 1.0)
    gamma_a_plus = 2.0 * gamma_r * (1.0 / q_biexciton - 1.0) - gamma_a_minus
    flags = (FLAG_NEGATIVE_AUGER,) if gamma_a_plus < 0 else ()
    return AugerRates(gamma_a_minus, gamma_a_plus, flags)


def _ladder_terms(excitation: ExcitationModel, ladder: YieldLadder):
    depth = min(len(ladder.q), excitation.ladder_depth(limit=max(len(ladder.q), 1)))
    p = np.array([excitation.p_at_least(m) for m in range(1, depth + 1)])
    q = np.asarray(ladder.q[:depth])
    return p, q


def general_g2_zero(excitation: ExcitationModel, ladder: YieldLadder) -> float:
    """g2(0) of independent multiexciton cascades, ladder truncated at its length.

    2 sum_{m>1} P(N>=m) sum_{m'<m} Q_m Q_m'  /  (sum_{m>=1} P(N>=m) Q_m)^2
    """
    if ladder.q[0] <= 0:
        raise PhysicsDomainError("Q_1 must be > 0")
    p, q = _ladder_terms(excitation, ladder)
    lower = np.concatenate(([0.0], np.cumsum(q)[:-1]))  # sum_{m'<m} Q_m'
    numerator = 2.0 * float(np.sum(p * q * lower))
    denominator = float(np.sum(p * q)) ** 2
    if denominator == 0:
        raise PhysicsDomainError("zero mean photon number per pulse")
    return numerator / denominator


def reduction_correction(excitation: ExcitationModel, ladder: YieldLadder) -> float:
    """general_g2_zero divided by its two-level reduction weight * Q_2 / Q_1."""
    if len(ladder.q) < 2 or ladder.q[1] == 0:
        return 1.0
    reduced = poisson_weight(excitation.mean_excitations) * ladder.q[1] / ladder.q[0]
    return general_g2_zero(excitation, ladder) / reduced


def reduced_g2_zero(mean: float, states: Iterable[Tuple[float, float, float]]) -> float:
    """Blinking-averaged two-level form: weight * <Q2 Q1>_t / <Q1^2>_t.

    ``states`` holds (occupancy, q1, q2) triples.
    """
    states = list(states)
    num = sum(w * q1 * q2 for w, q1, q2 in states)
    den = sum(w * q1 * q1 for w, q1, _ in states)
    if den == 0:
        raise PhysicsDomainError("all states have zero exciton yield")
    return poisson_weight(mean) * num / den


def mixed_g2_zero(states: Sequence[StateStatistics]) -> float:
    """Time-averaged g2(0) of a flickering mix of internally Poissonian states."""
    if not states:
        raise PhysicsDomainError("no states given")
    total = sum(s.occupancy for s in states)
    if any(s.occupancy < 0 for s in states) or abs(total - 1.0) > 1e-6:
        raise PhysicsDomainError(f"occupancies must be >= 0 and sum to 1, got {total}")
    if any(s.intensity < 0 for s in states):
        raise PhysicsDomainError("intensities must be >= 0")
    mean_i = sum(s.occupancy * s.intensity for s in states)
    if mean_i == 0:
        raise PhysicsDomainError("all intensities are zero")
    return sum(s.occupancy * s.intensity ** 2 * s.g2_zero for s in states) / mean_i ** 2


def photons_per_pulse(excitation: ExcitationModel, q1: float, q2: float) -> float:
    """Mean emitted photons per pulse with excitation capped at the biexciton."""
    return excitation.p_at_least(1) * q1 + excitation.p_at_least(2) * q2


def trion_intensity_ratio(excitation: ExcitationModel, physics: EmitterPhysics) -> float:
    """Expected I_grey / I_bright; reduces to Q_X- at weak excitation."""
    bright = photons_per_pulse(excitation, 1.0, physics.q_biexciton)
    grey = photons_per_pulse(excitation, physics.q_trion, physics.q_charged_biexciton)
    return grey / bright

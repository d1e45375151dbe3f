"""Yield report for one emitter, with consistency checks."""
from dataclasses import dataclass
import json
import logging
import math
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import pandas as pd

from photonstats import physics
from photonstats.errors import PhysicsDomainError

logger = logging.getLogger(__name__)

FLAG_LIMIT_CASE = "limit-case"
FLAG_AUGER_UNDEFINED = "auger-inversion-undefined"
FLAG_INTENSITY_RATIO = "intensity-ratio-mismatch"
FLAG_MIXED_G2 = "mixed-g2-mismatch"
FLAG_SUBSTREAM_BUNCHING = "substream-bunching"

# column title -> report key, in table order
TABLE_COLUMNS = (
    ("tau_X (ns)", "tau_X_ns"),
    ("Q_X", "Q_X"),
    ("Q_X-", "Q_X-_quoted"),
    ("Q_2X", "Q_2X"),
    ("Q_2X-", "Q_2X-"),
    ("tau_A- (ns)", "tau_A-_ns"),
    ("tau_A+ (ns)", "tau_A+_ns"),
)
PERCENT_KEYS = {"Q_X", "Q_X-", "Q_X-_scaled", "Q_X-_quoted", "Q_2X", "Q_2X-"}


class HasTau(Protocol):
    tau: float


class HasG2Zero(Protocol):
    g2_zero: float


@dataclass(frozen=True)
class YieldReport:
    tau_x: float
    tau_trion: float
    q_x: float
    q_trion: float  # 2 tau_X- / tau_X
    q_trion_scaled: float  # q_trion times the assumed exciton yield
    q_trion_quoted: float
    q_2x: float
    q_2x_minus: float
    tau_a_minus: float
    tau_a_plus: float
    g2_bright_0: float
    g2_grey_0: float
    g2_all_0: float
    fractions: Tuple[float, float, float]
    mean_excitations: float
    poisson_weight: float
    g2_all_expected: float = math.nan
    intensity_ratio: float = math.nan
    flags: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        def finite(x):
            return float(x) if x is not None and math.isfinite(x) else None

        return {
            "tau_X_ns": finite(self.tau_x),
            "tau_X-_ns": finite(self.tau_trion),
            "Q_X": finite(self.q_x),
            "Q_X-": finite(self.q_trion),
            "Q_X-_scaled": finite(self.q_trion_scaled),
            "Q_X-_quoted": finite(self.q_trion_quoted),
            "Q_2X": finite(self.q_2x),
            "Q_2X-": finite(self.q_2x_minus),
            "tau_A-_ns": finite(self.tau_a_minus),
            "tau_A+_ns": finite(self.tau_a_plus),
            "g2_X(0)": finite(self.g2_bright_0),
            "g2_X-(0)": finite(self.g2_grey_0),
            "g2_all(0)": finite(self.g2_all_0),
            "g2_all(0)_expected": finite(self.g2_all_expected),
            "I_X-/I_X": finite(self.intensity_ratio),
            "fractions": {"bright": self.fractions[0], "grey": self.fractions[1], "discarded": self.fractions[2]},
            "mean_excitations": self.mean_excitations,
            "poisson_weight": self.poisson_weight,
            "flags": list(self.flags),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_frame(self) -> pd.DataFrame:
        row = {k: v for k, v in self.to_dict().items() if k not in ("fractions", "flags", "notes")}
        row.update({f"fraction_{k}": v for k, v in self.to_dict()["fractions"].items()})
        row["flags"] = ";".join(self.flags)
        return pd.DataFrame([row])


def _quote(q: float, enabled: bool) -> float:
    # yields are quoted to whole percent before they feed the next formula
    return round(q, 2) if enabled else q


def build_report(
    bright_fit: HasTau,
    grey_fit: HasTau,
    acf_bright: HasG2Zero,
    acf_grey: HasG2Zero,
    acf_all: HasG2Zero,
    fractions: Sequence[float],
    mean_excitations: float,
    q_x_assumed: float = 1.0,
    intensities: Optional[Tuple[float, float]] = None,
    substream_plateaus: Optional[Mapping[str, float]] = None,
    quote_trion_percent: bool = True,
    notes: Sequence[str] = (),
    tolerance: float = 0.05,
    q_trion_quoted: Optional[float] = None,
) -> YieldReport:
    """Derive Q_X-, Q_2X, Q_2X- and the Auger times from one post-selected acquisition.

    ``intensities`` are the (bright, grey) post-selected count rates in counts/ms.
    ``q_trion_quoted`` replaces the rounded Q_X- that feeds Q_2X- and the Auger
    inversion, for reproducing a row whose published yield was quoted differently.
    """
    flags: List[str] = []
    tau_x, tau_trion = bright_fit.tau, grey_fit.tau

    trion = physics.trion_qy(tau_x, tau_trion)
    q_trion = trion.value
    q_trion_scaled = q_x_assumed * q_trion
    flags.extend(trion.flags)
    if q_trion_quoted is None:
        q_trion_quoted = _quote(q_trion_scaled, quote_trion_percent)

    q_2x = physics.biexciton_qy_from_g2(acf_bright.g2_zero, q_x_assumed, mean_excitations)
    q_2x_minus = physics.biexciton_qy_from_g2(acf_grey.g2_zero, min(q_trion_quoted, 1.0), mean_excitations)
    flags.extend(q_2x.flags + q_2x_minus.flags)

    gamma_r = q_x_assumed / tau_x
    try:
        rates = physics.auger_rates(gamma_r, q_trion_quoted, q_2x.value)
        tau_a_minus, tau_a_plus = rates.tau_a_minus, rates.tau_a_plus
        flags.extend(rates.flags)
        if math.isinf(tau_a_minus):
            flags.append(FLAG_LIMIT_CASE)
    except PhysicsDomainError as e:
        logger.warning("Auger inversion undefined: %s", e)
        tau_a_minus = math.inf if q_trion_quoted == 1.0 else math.nan
        tau_a_plus = math.inf if q_2x.value == 0.0 else math.nan
        flags.append(FLAG_LIMIT_CASE if q_2x.value == 0.0 else FLAG_AUGER_UNDEFINED)

    ratio, g2_expected = math.nan, math.nan
    if intensities is not None and intensities[0] > 0:
        bright_i, grey_i = intensities
        ratio = grey_i / bright_i
        if abs(ratio - q_trion_scaled) > tolerance:
            flags.append(FLAG_INTENSITY_RATIO)
        selected = fractions[0] + fractions[1]
        if selected > 0 and grey_i > 0:
            # time occupancy from photon fractions: w_s proportional to f_s / I_s
            w_bright, w_grey = fractions[0] / bright_i, fractions[1] / grey_i
            total = w_bright + w_grey
            g2_expected = physics.mixed_g2_zero([
                physics.StateStatistics(w_bright / total, bright_i, acf_bright.g2_zero),
                physics.StateStatistics(w_grey / total, grey_i, acf_grey.g2_zero),
            ])
            if abs(g2_expected - acf_all.g2_zero) > tolerance:
                flags.append(FLAG_MIXED_G2)
    for name, plateau in (substream_plateaus or {}).items():
        if math.isfinite(plateau) and abs(plateau - 1.0) > tolerance:
            flags.append(f"{FLAG_SUBSTREAM_BUNCHING}:{name}")

    report = YieldReport(
        tau_x=tau_x, tau_trion=tau_trion, q_x=q_x_assumed,
        q_trion=q_trion, q_trion_scaled=q_trion_scaled, q_trion_quoted=q_trion_quoted,
        q_2x=q_2x.value, q_2x_minus=q_2x_minus.value,
        tau_a_minus=tau_a_minus, tau_a_plus=tau_a_plus,
        g2_bright_0=acf_bright.g2_zero, g2_grey_0=acf_grey.g2_zero, g2_all_0=acf_all.g2_zero,
        fractions=tuple(float(f) for f in fractions),
        mean_excitations=mean_excitations,
        poisson_weight=physics.poisson_weight(mean_excitations),
        g2_all_expected=g2_expected, intensity_ratio=ratio,
        flags=tuple(dict.fromkeys(flags)), notes=tuple(notes),
    )
    if report.flags:
        logger.warning("report flags: %s", ", ".join(report.flags))
    return report


def _cell(key: str, value) -> str:
    if value is None:
        return "inf" if key.startswith("tau_A") else "-"
    if key in PERCENT_KEYS:
        return f"{value:.1%}"
    return f"{value:.1f}"


def render_table(rows: Sequence[Tuple[str, Mapping[str, object]]]) -> str:
    """Plain-text table of report dictionaries; values are only formatted, never derived."""
    header = ["emitter"] + [title for title, _ in TABLE_COLUMNS]
    body = [[name] + [_cell(key, data.get(key)) for _, key in TABLE_COLUMNS] for name, data in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]

    warnings = [(name, data.get("flags") or [], data.get("notes") or []) for name, data in rows]
    if any(flags or notes for _, flags, notes in warnings):
        lines += ["", "Warnings:"]
        for name, flags, notes in warnings:
            lines += [f"  {name}: {flag}" for flag in flags]
            lines += [f"  {name}: note: {note}" for note in notes]
    return "\n".join(lines) + "\n"

"""Decay histograms from micro-times and mono-exponential Poisson MLE fits."""
from dataclasses import dataclass
import logging
import math
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from photonstats.errors import FitError
from photonstats.timetags import TimeTagStream

logger = logging.getLogger(__name__)

MIN_COUNTS = 100
MAX_ITERATIONS = 1000
MU_FLOOR = 1e-12
# background below this fraction of the mean bin count is treated as pinned at zero
BOUND_TOLERANCE = 1e-9
WINDOW_END_FRACTION = 0.9


@dataclass(frozen=True)
class DecayCurve:
    edges_ns: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_width_ns(self) -> float:
        return float(self.edges_ns[1] - self.edges_ns[0])

    @property
    def period_ns(self) -> float:
        return float(self.edges_ns[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t_ns": self.edges_ns[:-1], "counts": self.counts})


@dataclass(frozen=True)
class ExpFit:
    tau: float
    tau_error: float = math.nan
    amplitude: float = math.nan
    background: float = math.nan
    window: Tuple[float, float] = (math.nan, math.nan)
    reduced_chi_square: float = math.nan
    counts: int = 0
    amplitude_error: float = math.nan
    background_error: float = math.nan

    @classmethod
    def measured(cls, tau: float) -> "ExpFit":
        """A lifetime measured elsewhere, without a fitted histogram."""
        return cls(tau=tau)

    def to_dict(self) -> dict:
        return {"tau_ns": self.tau, "tau_error_ns": self.tau_error, "amplitude": self.amplitude,
                "background_per_bin": self.background, "window_ns": list(self.window),
                "reduced_chi_square": self.reduced_chi_square, "counts": self.counts,
                "amplitude_error": self.amplitude_error, "background_error_per_bin": self.background_error}


def decay_histogram(stream: TimeTagStream, rep_period_ps: int, bin_width_ns: float = 1.0) -> DecayCurve:
    """Fold every tag onto the excitation period and histogram the micro-times."""
    bin_ps = int(round(bin_width_ns * 1000))
    n_bins = max(int(round(rep_period_ps / bin_ps)), 1)
    micro = np.mod(stream.times, rep_period_ps)
    index = np.minimum(micro // bin_ps, n_bins - 1)
    counts = np.bincount(index, minlength=n_bins).astype(np.int64)
    edges = np.arange(n_bins + 1) * (bin_ps / 1000.0)
    return DecayCurve(edges, counts)


def _model(params: np.ndarray, t: np.ndarray):
    tau, amplitude, background = params
    decay = np.exp(-t / tau)
    return amplitude * decay + background, decay


def _deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """Poisson deviance, zero for a perfect fit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(mu - y + log_ratio))


def _covariance(jac: np.ndarray, mu: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Inverse Fisher matrix over the free parameters; parameters held at a bound get NaN."""
    sub = jac[:, free]
    fisher = sub.T @ (sub / mu[:, None])
    try:
        inverse = np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        inverse = np.linalg.pinv(fisher)
    covariance = np.full((jac.shape[1], jac.shape[1]), math.nan)
    covariance[np.ix_(free, free)] = inverse
    return covariance


def fit_monoexp(curve: DecayCurve, window: Optional[Tuple[float, float]] = None) -> ExpFit:
    """Poisson maximum-likelihood fit of A exp(-t/tau) + B.

    The default window opens one bin after the histogram maximum (the
    instrument-response rise stays out) and closes at 90 % of the period.
    The optimizer works on (log tau, log A, B / mean count) and minimizes
    the deviance rather than the raw likelihood.
    """
    if window is None:
        start = curve.edges_ns[int(np.argmax(curve.counts)) + 1]
        window = (float(start), WINDOW_END_FRACTION * curve.period_ns)
    left = curve.edges_ns[:-1]
    inside = (left >= window[0]) & (left < window[1])
    y = curve.counts[inside].astype(float)
    if y.sum() < MIN_COUNTS:
        raise FitError(f"only {int(y.sum())} counts in the fit window {window}")
    t = left[inside] - window[0]
    scale = max(float(y.mean()), 1.0)

    tail = y[-max(y.size // 10, 1):]
    background0 = float(np.mean(tail))
    signal = np.clip(y - background0, 0.0, None)
    tau0 = float(np.sum(signal * t) / signal.sum()) if signal.sum() > 0 else curve.bin_width_ns
    tau0 = min(max(tau0, curve.bin_width_ns), t[-1] if t[-1] > 0 else 1.0)
    amplitude0 = max(float(y[0]) - background0, 1.0)

    def objective(theta):
        tau, amplitude, background = math.exp(theta[0]), math.exp(theta[1]), theta[2] * scale
        mu, decay = _model((tau, amplitude, background), t)
        mu = np.maximum(mu, MU_FLOOR)
        residual = 2.0 * (1.0 - y / mu)
        grad = np.array([
            np.sum(residual * amplitude * decay * t / tau),
            np.sum(residual * amplitude * decay),
            np.sum(residual) * scale,
        ])
        return _deviance(y, mu), grad

    result = optimize.minimize(
        objective, x0=np.array([math.log(tau0), math.log(amplitude0), background0 / scale]), jac=True,
        method="L-BFGS-B", bounds=[(None, None), (None, None), (0.0, None)],
        options={"maxiter": MAX_ITERATIONS, "ftol": 1e-14, "gtol": 1e-8},
    )
    if result.status == 1 or not np.all(np.isfinite(result.x)):
        raise FitError(f"lifetime fit did not converge after {MAX_ITERATIONS} iterations: {result.message}")

    tau, amplitude, background = math.exp(result.x[0]), math.exp(result.x[1]), float(result.x[2]) * scale
    mu, decay = _model((tau, amplitude, background), t)
    mu = np.maximum(mu, MU_FLOOR)
    jac = np.stack([amplitude * decay * t / tau ** 2, decay, np.ones_like(t)], axis=1)
    free = np.array([True, True, background > BOUND_TOLERANCE * scale])
    errors = np.sqrt(np.clip(np.diag(_covariance(jac, mu, free)), 0.0, None))
    dof = max(y.size - int(free.sum()), 1)
    fit = ExpFit(
        tau=tau,
        tau_error=float(errors[0]),
        amplitude=amplitude,
        background=background,
        window=(float(window[0]), float(window[1])),
        reduced_chi_square=float(np.sum((y - mu) ** 2 / mu) / dof),
        counts=int(y.sum()),
        amplitude_error=float(errors[1]),
        background_error=float(errors[2]),
    )
    logger.info("mono-exponential fit: tau = %.2f +- %.2f ns, B = %.2f/bin, chi2_red = %.2f (%d iterations)",
                fit.tau, fit.tau_error, fit.background, fit.reduced_chi_square, result.nit)
    return fit

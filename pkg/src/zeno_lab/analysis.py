"""Survival-curve analysis: short-time and exponential fits, comparisons."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ContractViolation

DEFICIT_FLOOR = 1e-14
SURVIVAL_FLOOR = 1e-12
INGEST_SLACK = 1e-12
NON_EXPONENTIAL_RMS = 0.05
NON_QUADRATIC_TOL = 0.1

OK = "ok"
WINDOW_TOO_SHORT = "window_too_short"
NON_EXPONENTIAL = "non_exponential"
NON_QUADRATIC = "non_quadratic"


@dataclass(frozen=True, eq=False)
class SurvivalSeries:
    """Sampled survival probability ``s(t)`` with provenance metadata.

    Values are checked to lie in ``[-1e-12, 1 + 1e-12]`` and then clamped
    to ``[0, 1]``.
    """

    times: np.ndarray
    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        s = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != s.shape or t.size == 0:
            raise ContractViolation(
                f"times and values must be equal-length 1-D arrays, got {t.shape} and {s.shape}"
            )
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ContractViolation("times must be strictly ascending")
        if not (np.all(np.isfinite(s)) and np.all(s >= -INGEST_SLACK) and np.all(s <= 1 + INGEST_SLACK)):
            raise ContractViolation("survival values must lie in [0, 1]")
        s = np.clip(s, 0.0, 1.0)
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", s)

    def __len__(self) -> int:
        return self.times.size

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.times >= lo) & (self.times <= hi)


@dataclass(frozen=True)
class FitReport:
    """Result of a log-space least-squares fit.

    ``estimate`` is alpha for short-time fits and Gamma for exponential
    fits. ``exponent`` is the fitted power of ``t`` for short-time fits and
    ``nan`` otherwise; ``intercept`` is the fitted log-prefactor.
    """

    estimate: float
    exponent: float
    window: tuple[float, float]
    residual: float
    quality_flag: str
    intercept: float = float("nan")
    n_samples: int = 0

    @property
    def ok(self) -> bool:
        return self.quality_flag == OK

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "exponent": self.exponent,
            "window": list(self.window),
            "residual": self.residual,
            "quality_flag": self.quality_flag,
            "intercept": self.intercept,
            "n_samples": self.n_samples,
        }


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def _clip_window(s: SurvivalSeries, window) -> tuple[float, float]:
    lo, hi = (float(w) for w in window)
    if hi < lo:
        raise ContractViolation(f"empty window [{lo}, {hi}]")
    return max(lo, float(s.times[0])), min(hi, float(s.times[-1]))


def fit_short_time(s: SurvivalSeries, window) -> FitReport:
    """Fit ``log(1 - s) = log(alpha) + p log(t)`` over ``window``.

    Samples with ``t <= 0`` or deficit ``1 - s <= 1e-14`` are dropped. A
    fitted exponent further than 0.1 from 2 is flagged ``non_quadratic``.
    """
    win = _clip_window(s, window)
    deficit = 1.0 - s.values
    sel = s.window(*win) & (s.times > 0) & (deficit > DEFICIT_FLOOR)
    n = int(np.count_nonzero(sel))
    if n < 4:
        return FitReport(float("nan"), float("nan"), win, 0.0, WINDOW_TOO_SHORT, n_samples=n)
    p, c, rms = _linear_fit(np.log(s.times[sel]), np.log(deficit[sel]))
    flag = OK if abs(p - 2.0) <= NON_QUADRATIC_TOL else NON_QUADRATIC
    return FitReport(float(np.exp(c)), p, win, rms, flag, intercept=c, n_samples=n)


def fit_exponential(s: SurvivalSeries, window) -> FitReport:
    """Fit ``log s = c - Gamma t`` over ``window``; returns Gamma as the estimate."""
    win = _clip_window(s, window)
    sel = s.window(*win) & (s.values > SURVIVAL_FLOOR)
    n = int(np.count_nonzero(sel))
    if n < 8:
        return FitReport(float("nan"), float("nan"), win, 0.0, WINDOW_TOO_SHORT, n_samples=n)
    slope, c, rms = _linear_fit(s.times[sel], np.log(s.values[sel]))
    flag = OK if rms <= NON_EXPONENTIAL_RMS else NON_EXPONENTIAL
    return FitReport(-slope, float("nan"), win, rms, flag, intercept=c, n_samples=n)


@dataclass(frozen=True)
class ComparisonReport:
    max_abs: float
    at_time: float
    rms: float

    def to_dict(self) -> dict[str, float]:
        return {"max_abs": self.max_abs, "at_time": self.at_time, "rms": self.rms}


def compare_survival(a: SurvivalSeries, b: SurvivalSeries) -> ComparisonReport:
    """Pointwise comparison of two series sampled on the same time grid."""
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=0.0, atol=1e-12):
        raise ContractViolation("series must share an identical time grid")
    diff = np.abs(a.values - b.values)
    k = int(np.argmax(diff))
    return ComparisonReport(float(diff[k]), float(a.times[k]), float(np.sqrt(np.mean(diff**2))))

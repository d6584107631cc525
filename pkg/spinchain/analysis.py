"""Power-law fits, scaling-regime segmentation and oscillation metrics."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, stats

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 4
MIN_OSCILLATION_POINTS = 8
LOG_SLACK = 1e-9
CANDIDATE_EXPONENTS = (2.0, 1.0, 0.0)


class FitError(Exception):
    """Error during fitting or series analysis."""
    pass


@dataclass(frozen=True)
class PowerLawFit:
    """Q ~ a / tau^b fitted on tau in window."""
    a: float
    b: float
    window: tuple[float, float]
    r2: float
    n_points: int

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "window": list(self.window), "r2": self.r2, "n_points": self.n_points}


def _as_arrays(taus, values) -> tuple[np.ndarray, np.ndarray]:
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if taus.shape != values.shape or taus.ndim != 1:
        raise FitError("tau and value series must be 1D and of equal length")
    return taus, values


def default_window(taus) -> tuple[float, float]:
    """The largest decade of tau."""
    tau_max = float(np.max(taus))
    return tau_max / 10.0, tau_max


def _in_window(taus: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    log_taus = np.log10(taus)
    return (log_taus >= math.log10(lo) - LOG_SLACK) & (log_taus <= math.log10(hi) + LOG_SLACK)


def fit_powerlaw(taus, values, window: tuple[float, float] | None = None) -> PowerLawFit:
    """Least squares on (ln tau, ln Q); b = -slope, a = exp(intercept).

    Raises:
        FitError: fewer than four points in the window, or a value <= 0
    """
    taus, values = _as_arrays(taus, values)
    if window is None:
        window = default_window(taus)
        logger.info("No fit window given, using the largest decade [%g, %g]", *window)
    if not 0 < window[0] < window[1]:
        raise FitError(f"Invalid fit window {window}")

    mask = _in_window(taus, window)
    if int(mask.sum()) < MIN_FIT_POINTS:
        raise FitError(f"Only {int(mask.sum())} points in window {window}, need {MIN_FIT_POINTS}")
    selected = values[mask]
    if np.any(~np.isfinite(selected)) or np.any(selected <= 0):
        raise FitError("Power-law fit needs positive finite values in the window")

    result = stats.linregress(np.log(taus[mask]), np.log(selected))
    r2 = min(1.0, max(0.0, float(result.rvalue) ** 2))
    return PowerLawFit(
        a=math.exp(result.intercept),
        b=-float(result.slope),
        window=(float(window[0]), float(window[1])),
        r2=r2,
        n_points=int(mask.sum()),
    )


@dataclass(frozen=True)
class OscillationMetric:
    n_extrema: int
    n_extrema_raw: int
    relative_amplitude: float

    def to_dict(self) -> dict:
        return {
            "n_extrema": self.n_extrema,
            "n_extrema_raw": self.n_extrema_raw,
            "relative_amplitude": self.relative_amplitude,
        }


def median3(values) -> np.ndarray:
    """Centred 3-point median; the end points are kept."""
    return ndimage.median_filter(np.asarray(values, dtype=float), size=3, mode="nearest")


def count_extrema(values) -> int:
    """Strict interior extrema: sign changes of the non-zero differences."""
    diffs = np.diff(np.asarray(values, dtype=float))
    diffs = diffs[diffs != 0]
    if diffs.size < 2:
        return 0
    return int(np.count_nonzero(np.sign(diffs[1:]) != np.sign(diffs[:-1])))


def oscillation_metric(taus, values, smooth: bool = True) -> OscillationMetric:
    """Extremum count and peak-to-trough / mean after removing a linear trend in ln tau."""
    taus, values = _as_arrays(taus, values)
    if taus.size < MIN_OSCILLATION_POINTS:
        raise FitError(f"Need at least {MIN_OSCILLATION_POINTS} points, got {taus.size}")
    if np.any(np.diff(taus) <= 0) or np.any(taus <= 0):
        raise FitError("tau must be positive and strictly ascending")
    if not np.all(np.isfinite(values)):
        raise FitError("Series contains non-finite values")

    raw = count_extrema(values)
    smoothed = count_extrema(median3(values)) if smooth else raw

    mean = float(np.mean(values))
    if mean == 0.0:
        raise FitError("Relative amplitude undefined for a zero-mean series")
    log_taus = np.log(taus)
    slope, intercept = np.polyfit(log_taus, values, 1)
    residuals = values - (slope * log_taus + intercept)
    return OscillationMetric(smoothed, raw, float(np.ptp(residuals) / abs(mean)))


@dataclass(frozen=True)
class DecadeSegment:
    tau_lo: float
    tau_hi: float
    fit: PowerLawFit
    exponent: float


@dataclass
class CrossoverReport:
    segments: list[DecadeSegment] = field(default_factory=list)
    boundaries: list[float] = field(default_factory=list)

    @property
    def labels(self) -> list[float]:
        return [s.exponent for s in self.segments]

    def regimes(self) -> list[tuple[float, float, float]]:
        """Runs of equally labelled decades as (tau_lo, tau_hi, exponent)."""
        runs = []
        for s in self.segments:
            if runs and runs[-1][2] == s.exponent:
                runs[-1] = (runs[-1][0], s.tau_hi, s.exponent)
            else:
                runs.append((s.tau_lo, s.tau_hi, s.exponent))
        return runs


def detect_crossover(taus, values, exponents=CANDIDATE_EXPONENTS, min_decades: float = 3.0) -> CrossoverReport:
    """Fit every decade (anchored at the smallest tau) and label it with the nearest exponent."""
    taus, values = _as_arrays(taus, values)
    if taus.size == 0 or np.any(taus <= 0):
        raise FitError("tau must be positive")
    span = math.log10(taus.max() / taus.min())
    if span < min_decades - LOG_SLACK:
        raise FitError(f"Sweep spans {span:.2f} decades, need {min_decades}")

    tau_min = float(taus.min())
    report = CrossoverReport()
    for i in range(int(math.floor(span + LOG_SLACK))):
        lo, hi = tau_min * 10.0**i, tau_min * 10.0 ** (i + 1)
        try:
            fit = fit_powerlaw(taus, values, (lo, hi))
        except FitError as e:
            logger.warning("Skipping decade [%g, %g]: %s", lo, hi, e)
            continue
        label = min(exponents, key=lambda e: abs(fit.b - e))
        report.segments.append(DecadeSegment(lo, hi, fit, float(label)))

    for prev, cur in zip(report.segments, report.segments[1:]):
        if prev.exponent != cur.exponent:
            report.boundaries.append(cur.tau_lo)
    return report


def suppression_ratio(reference: float, suppressed: float) -> float:
    """|reference| / |suppressed|; inf when the suppressed value is exactly zero."""
    if suppressed == 0.0:
        return math.inf
    return abs(reference) / abs(suppressed)

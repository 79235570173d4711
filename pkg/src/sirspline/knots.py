"""Data-driven knot placement and forward BIC selection of the knot count.

Knot locations come from a feature function built on a moving-average
estimate of the infection rate: repeated finite differences give the
(d+1)-th derivative, its |.|^(1/(d+1)) is integrated (trapezoid) into a
cumulative feature curve, and knots are placed so consecutive knots see
equal feature increase.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SelectionError
from .likelihood import LikelihoodConfig
from .sir import EpidemicPath
from .splines import KnotVector


@dataclass(frozen=True)
class RateSeries:
    """Pointwise infection-rate estimates used as knot-placement input."""

    times: np.ndarray
    values: np.ndarray
    flagged: np.ndarray = None  # windows where the rate was undefined

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size == 0 or times.size != values.size:
            raise ValueError("times/values must be 1-D and of equal nonzero length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("rate values must be finite and >= 0")
        flagged = self.flagged
        if flagged is None:
            flagged = np.zeros(times.size, dtype=bool)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flagged", np.asarray(flagged, dtype=bool))

    def __len__(self) -> int:
        return self.times.size

    def scaled(self, c: float) -> "RateSeries":
        return RateSeries(self.times, self.values * c, self.flagged)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "value"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class FeatureCurve:
    """Feature function f and its running integral F on shared timestamps."""

    times: np.ndarray
    f: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        f = np.asarray(self.f, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if np.any(f < 0):
            raise ValueError("feature values must be >= 0")
        if F[0] != 0 or np.any(np.diff(F) < 0):
            raise ValueError("cumulative feature must start at 0 and be non-decreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "F", F)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "f", "F"])
        for t, fv, cv in zip(self.times, self.f, self.F):
            w.writerow([repr(float(t)), repr(float(fv)), repr(float(cv))])
        return buf.getvalue()


def moving_average_rates(path: EpidemicPath, window_w: int) -> RateSeries:
    """Constant-rate MLE of beta over each window of window_w observations.

    The closed-form window estimate is N * sum(dW) / sum(dt * S * I); it
    is recorded at the window's time midpoint. Windows with no S*I mass
    get value 0 and a warning flag.
    """
    if window_w < 2:
        raise ValueError("window must span at least 2 observations")
    if len(path) < window_w + 1:
        raise ValueError("path too short for the requested window")
    t = path.times
    s = path.s.astype(float)
    i = path.i.astype(float)
    dt = np.diff(t)
    dw = -np.diff(s)
    mass = dt * s[:-1] * i[:-1] / path.n  # per-transition exposure
    csum_w = np.concatenate([[0.0], np.cumsum(dw)])
    csum_m = np.concatenate([[0.0], np.cumsum(mass)])

    m_windows = len(path) - window_w + 1
    times = np.empty(m_windows)
    values = np.empty(m_windows)
    flagged = np.zeros(m_windows, dtype=bool)
    for w0 in range(m_windows):
        w1 = w0 + window_w - 1  # last observation in the window
        num = csum_w[w1] - csum_w[w0]
        den = csum_m[w1] - csum_m[w0]
        times[w0] = 0.5 * (t[w0] + t[w1])
        if den > 0:
            values[w0] = num / den
        else:
            values[w0] = 0.0
            flagged[w0] = True
    if flagged.any():
        warnings.warn("windows with zero S*I exposure produced undefined rates; set to 0")
    return RateSeries(times, values, flagged)


def window_gamma_estimate(path: EpidemicPath) -> float:
    """Global closed-form constant recovery-rate estimate sum(dY)/sum(dt*I)."""
    t = path.times
    i = path.i.astype(float)
    dy = -np.diff(path.s + path.i).astype(float)
    den = float(np.sum(np.diff(t) * i[:-1]))
    if den <= 0:
        return 0.0
    return float(np.sum(dy) / den)


def finite_difference_ladder(series: RateSeries, order: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Repeated first-difference quotients; level j lives on the midpoints
    of level j-1's timestamps. Returns [(times, values)] for levels 1..order."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if len(series) <= order:
        raise ValueError(f"series of length {len(series)} too short for order {order}")
    t = series.times
    v = series.values
    out = []
    for _ in range(order):
        dv = np.diff(v) / np.diff(t)
        t = 0.5 * (t[:-1] + t[1:])
        v = dv
        out.append((t, v))
    return out


def feature_curve(derivative: tuple[np.ndarray, np.ndarray], degree: int,
                  domain: tuple[float, float]) -> FeatureCurve:
    """Feature function |beta^(d+1)|^(1/(d+1)), tapered to 0 at the domain
    ends, with its trapezoid cumulative integral."""
    d_times, d_values = derivative
    lo, hi = domain
    if lo >= hi:
        raise ValueError("empty feature domain")
    inside = (d_times > lo) & (d_times < hi)
    times = np.concatenate([[lo], d_times[inside], [hi]])
    f = np.concatenate([[0.0], np.abs(d_values[inside]) ** (1.0 / (degree + 1)), [0.0]])
    F = np.concatenate([[0.0], np.cumsum(0.5 * (f[:-1] + f[1:]) * np.diff(times))])
    return FeatureCurve(times, f, F)


def _piecewise_linear_inverse(times: np.ndarray, F: np.ndarray, level: float) -> float:
    idx = int(np.searchsorted(F, level, side="left"))
    if idx <= 0:
        return float(times[0])
    if idx >= F.size:
        return float(times[-1])
    f0, f1 = F[idx - 1], F[idx]
    if f1 == f0:
        return float(times[idx])
    frac = (level - f0) / (f1 - f0)
    return float(times[idx - 1] + frac * (times[idx] - times[idx - 1]))


def place_knots(curve: FeatureCurve, num_knots: int) -> np.ndarray:
    """Interior knots at equal increments of the cumulative feature curve.

    A flat curve (no feature mass) falls back to uniform interior knots
    with a warning. Coincident or boundary-touching knots are perturbed
    apart by one grid spacing minimum.
    """
    if num_knots < 1:
        raise ValueError("num_knots must be >= 1")
    lo, hi = float(curve.times[0]), float(curve.times[-1])
    f_max = float(curve.F[-1])
    if f_max <= 0:
        warnings.warn("flat feature curve; falling back to uniform interior knots")
        return lo + (hi - lo) * np.arange(1, num_knots + 1) / (num_knots + 1)

    levels = f_max * np.arange(1, num_knots + 1) / (num_knots + 1)
    knots = np.array([_piecewise_linear_inverse(curve.times, curve.F, lv) for lv in levels])

    gap = min(float(np.min(np.diff(curve.times))), (hi - lo) / (num_knots + 1))
    knots = np.clip(knots, lo + gap, hi - gap)
    for j in range(1, num_knots):  # separate coincident knots, forward
        if knots[j] <= knots[j - 1]:
            knots[j] = knots[j - 1] + gap
    for j in range(num_knots - 1, -1, -1):  # pull back anything pushed past the end
        upper = hi - gap if j == num_knots - 1 else knots[j + 1] - gap
        if knots[j] > upper:
            knots[j] = upper
    if knots[0] <= lo or np.any(np.diff(knots) <= 0) or knots[-1] >= hi:
        raise ValueError("domain too short to separate the requested knots")
    return knots


@dataclass
class SelectionResult:
    """Outcome of forward BIC selection."""

    best: "FitResult"  # noqa: F821 (estimator import is deferred)
    trace: list = field(default_factory=list)  # per-K dicts: K, bic, error

    @property
    def num_knots(self) -> int:
        return self.best.theta_hat.spline.knots.num_interior


def forward_bic_select(
    path: EpidemicPath,
    degree: int,
    config: LikelihoodConfig,
    max_knots: int,
    window: int = 4,
    series: RateSeries | None = None,
) -> SelectionResult:
    """Grow the knot count from 0, fitting each candidate basis by MLE,
    and stop once 3 consecutive counts fail to improve the best BIC."""
    from .estimator import fit_mle, initial_theta  # deferred; estimator uses this module

    if max_knots < 0:
        raise ValueError("max_knots must be >= 0")
    if series is None:
        series = moving_average_rates(path, window)

    degree = int(degree)
    curve = None
    if max_knots >= 1 and len(series) > degree + 1:
        ladder = finite_difference_ladder(series, degree + 1)
        curve = feature_curve(ladder[-1], degree, (float(series.times[0]), float(series.times[-1])))

    t0, t_end = float(path.times[0]), float(path.times[-1])
    best = None
    best_bic = np.inf
    fails_since_best = 0
    trace = []
    for num_knots in range(max_knots + 1):
        entry = {"K": num_knots, "bic": None, "error": None}
        try:
            if num_knots == 0:
                interior = ()
            elif curve is None:
                raise ValueError("rate series too short to place knots")
            else:
                interior = tuple(place_knots(curve, num_knots))
            knots = KnotVector(t0, t_end, interior, degree)
            init = initial_theta(series, knots, path)
            result = fit_mle(path, knots, config, init)
            entry["bic"] = result.bic
            if result.bic < best_bic:
                best, best_bic = result, result.bic
                fails_since_best = 0
            else:
                fails_since_best += 1
        except Exception as e:  # fit failure: record, skip this K
            entry["error"] = str(e)
            fails_since_best += 1
        trace.append(entry)
        if fails_since_best >= 3:
            break
    if best is None:
        raise SelectionError("all candidate knot counts failed to fit")
    return SelectionResult(best=best, trace=trace)

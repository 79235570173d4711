"""Parametric-bootstrap pointwise confidence bands for the infection rate.

Replicates are simulated from the fitted model on the original
observation grid, early-terminated epidemics are discarded, and each
survivor is refit with the same basis. Bands support pivotal, normal
and percentile constructions, bias correction, and three smoothing
schemes (kernel-weighted bounds, pooled neighbouring samples, min-max
widening).
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.stats import norm

from .estimator import fit_mle
from .likelihood import LikelihoodConfig, ParameterVector
from .sir import EpidemicPath, RatePair, sample_path_at, simulate_exact, simulate_tau_leap

_METHODS = ("pivotal", "normal", "percentile")


@dataclass
class BootstrapEnsemble:
    """Refitted infection-rate curves on the observation grid."""

    times: np.ndarray
    curves: np.ndarray      # shape (B_retained, M)
    estimate: np.ndarray    # fitted curve on the same grid
    attempts: int
    discarded: int
    shortfall: bool = False

    @property
    def num_curves(self) -> int:
        return self.curves.shape[0]


@dataclass
class ConfidenceBand:
    """Pointwise interval for beta(t) with method/correction/smoothing tags."""

    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    point: np.ndarray
    method: str
    bias_corrected: bool
    smoothing: str
    level: float

    def __post_init__(self):
        if np.any(self.lower > self.upper + 1e-12):
            raise ValueError("lower bound exceeds upper bound")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "point", "lower", "upper"])
        for t, p, lo, hi in zip(self.times, self.point, self.lower, self.upper):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()

    def metadata_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "bias_corrected": self.bias_corrected,
            "smoothing": self.smoothing,
            "level": self.level,
        })

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (self.lower <= values) & (values <= self.upper)


class _GridRate:
    """Rate lookup precomputed on the simulation grid (left endpoints)."""

    def __init__(self, spline, grid: np.ndarray):
        self._grid = np.asarray(grid, dtype=float)
        self._vals = spline.value(self._grid)

    def __call__(self, t: float) -> float:
        idx = int(np.searchsorted(self._grid, t))
        if idx < self._grid.size and self._grid[idx] == t:
            return float(self._vals[idx])
        return float(max(self._vals[max(idx - 1, 0)], 0.0))


def _fast_scalar_rate(spline):
    """Per-event rate lookup for the event-resolution simulator.

    Wraps the compiled B-spline evaluator (agrees with the model's own
    evaluation, including the closed right endpoint, since both use the
    same clamped knot sequence); clamps queries to the spline domain.
    """
    bsp = BSpline(spline.knots.extended, np.asarray(spline.coefficients),
                  spline.knots.degree, extrapolate=True)
    lo, hi = spline.knots.start, spline.knots.end

    def rate(t: float) -> float:
        return float(bsp(min(max(t, lo), hi)))

    return rate


def run_bootstrap(
    theta_hat: ParameterVector,
    template: EpidemicPath,
    B: int,
    config: LikelihoodConfig,
    max_attempts_factor: int = 10,
    seed: int = 0,
    simulator: str = "tau-leap",
) -> BootstrapEnsemble:
    """Simulate-and-refit bootstrap with early-termination filtering.

    Paths whose infected count hits 0 before the final observed time are
    discarded; refits reuse the fitted basis (no re-selection). Stops at
    B survivors or max_attempts_factor * B attempts, whichever first.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if simulator not in ("tau-leap", "exact"):
        raise ValueError(f"unknown bootstrap simulator {simulator!r}")
    grid = template.times
    init = template.state(0)
    knots = theta_hat.spline.knots
    rate_fn = (_GridRate(theta_hat.spline, grid) if simulator == "tau-leap"
               else _fast_scalar_rate(theta_hat.spline))
    rates = RatePair(rate_fn, theta_hat.gamma)
    estimate = theta_hat.spline.value(grid)

    curves = []
    attempts = 0
    discarded = 0
    max_attempts = max_attempts_factor * B
    while len(curves) < B and attempts < max_attempts:
        attempt_seed = (seed, attempts)
        attempts += 1
        if simulator == "tau-leap":
            path = simulate_tau_leap(rates, init, grid, attempt_seed)
        else:
            path = sample_path_at(
                simulate_exact(rates, init, float(grid[-1]), attempt_seed), grid
            )
        if np.any(path.i <= 0):
            discarded += 1
            continue
        try:
            refit = fit_mle(path, knots, config, theta_hat)
        except Exception:
            discarded += 1
            continue
        curves.append(refit.theta_hat.spline.value(grid))

    shortfall = len(curves) < B
    if shortfall:
        warnings.warn(
            f"bootstrap shortfall: {len(curves)}/{B} survivors in {attempts} attempts"
        )
    curve_arr = np.asarray(curves) if curves else np.empty((0, grid.size))
    return BootstrapEnsemble(
        times=grid,
        curves=curve_arr,
        estimate=estimate,
        attempts=attempts,
        discarded=discarded,
        shortfall=shortfall,
    )


def bootstrap_bias(ensemble: BootstrapEnsemble) -> np.ndarray:
    """Per-time bootstrap bias: mean of the replicate curves minus the estimate."""
    if ensemble.num_curves == 0:
        raise ValueError("empty ensemble")
    return ensemble.curves.mean(axis=0) - ensemble.estimate


def _interval_from_sample(sample: np.ndarray, est: float, method: str,
                          level: float, bias_corrected: bool,
                          bias: float | None = None) -> tuple[float, float, float]:
    """(lower, upper, point) at one timestamp from a replicate sample."""
    alpha = 1.0 - level
    if bias is None:
        bias = float(sample.mean() - est)
    point = est - bias if bias_corrected else est
    if method == "pivotal":
        qlo = float(np.quantile(sample, alpha / 2))
        qhi = float(np.quantile(sample, 1 - alpha / 2))
        return 2 * est - qhi, 2 * est - qlo, point
    if method == "normal":
        z = norm.ppf(1 - alpha / 2)
        sb = float(sample.std(ddof=1))
        center = est - bias if bias_corrected else est
        return center - z * sb, center + z * sb, point
    if method == "percentile":
        shift = 2 * bias if bias_corrected else 0.0
        qlo = float(np.quantile(sample, alpha / 2))
        qhi = float(np.quantile(sample, 1 - alpha / 2))
        return qlo - shift, qhi - shift, point
    raise ValueError(f"unknown interval method {method!r}")


def band(ensemble: BootstrapEnsemble, method: str, level: float,
         bias_corrected: bool = False) -> ConfidenceBand:
    """Pointwise confidence band from the bootstrap ensemble.

    The pivotal construction already accounts for bias, so its bounds
    are unchanged by the bias flag. Lower bounds may be negative; they
    are reported as-is.
    """
    if method not in _METHODS:
        raise ValueError(f"unknown interval method {method!r}")
    if ensemble.num_curves < 2:
        raise ValueError("need at least 2 bootstrap curves")
    m = ensemble.times.size
    bias = bootstrap_bias(ensemble)  # shared with the reported bias estimate
    lower = np.empty(m)
    upper = np.empty(m)
    point = np.empty(m)
    for t_idx in range(m):
        lower[t_idx], upper[t_idx], point[t_idx] = _interval_from_sample(
            ensemble.curves[:, t_idx], float(ensemble.estimate[t_idx]),
            method, level, bias_corrected, bias=float(bias[t_idx]),
        )
    return ConfidenceBand(ensemble.times, lower, upper, point,
                          method, bias_corrected, "none", level)


def smooth_weighted(band_in: ConfidenceBand) -> ConfidenceBand:
    """Standard-normal-kernel weighted average of the bounds over all
    timestamps (bandwidth fixed at one time unit)."""
    t = band_in.times
    w = norm.pdf(t[:, None] - t[None, :])
    w = w / w.sum(axis=1, keepdims=True)
    return ConfidenceBand(
        t, w @ band_in.lower, w @ band_in.upper, band_in.point,
        band_in.method, band_in.bias_corrected, "weighted", band_in.level,
    )


def smooth_sample(ensemble: BootstrapEnsemble, method: str, level: float,
                  bias_corrected: bool = False) -> ConfidenceBand:
    """Interval at each timestamp from the replicate values pooled over
    the timestamp and its immediate neighbours (truncated at the ends)."""
    if method not in _METHODS:
        raise ValueError(f"unknown interval method {method!r}")
    if ensemble.num_curves < 2:
        raise ValueError("need at least 2 bootstrap curves")
    m = ensemble.times.size
    lower = np.empty(m)
    upper = np.empty(m)
    point = np.empty(m)
    for t_idx in range(m):
        lo_col = max(t_idx - 1, 0)
        hi_col = min(t_idx + 2, m)
        pooled = ensemble.curves[:, lo_col:hi_col].ravel()
        lower[t_idx], upper[t_idx], point[t_idx] = _interval_from_sample(
            pooled, float(ensemble.estimate[t_idx]), method, level, bias_corrected,
        )
    return ConfidenceBand(ensemble.times, lower, upper, point,
                          method, bias_corrected, "sample", level)


def smooth_minmax(band_in: ConfidenceBand) -> ConfidenceBand:
    """Widen each bound to the extreme of itself and its neighbours."""
    lo, hi = band_in.lower, band_in.upper
    m = lo.size
    new_lo = np.array([lo[max(i - 1, 0):min(i + 2, m)].min() for i in range(m)])
    new_hi = np.array([hi[max(i - 1, 0):min(i + 2, m)].max() for i in range(m)])
    return ConfidenceBand(
        band_in.times, new_lo, new_hi, band_in.point,
        band_in.method, band_in.bias_corrected, "minmax", band_in.level,
    )

"""Evaluation metrics and simulation-study truth curves.

The constant scenario matches the published study setting (rate 0.3).
The shaped scenarios (increasing, decreasing, peak, smooth) are
configurable stand-ins for typical epidemic patterns; their exact
functional forms are a local choice, not ground truth from elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .likelihood import ParameterVector


@dataclass(frozen=True)
class TruthFunction:
    """A known infection-rate curve, by name or tabulation."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.fn(t), dtype=float)

    def __call__(self, t):
        return self.value(t)

    @classmethod
    def constant(cls, c: float) -> "TruthFunction":
        return cls(lambda t: np.full_like(np.asarray(t, dtype=float), c), f"constant({c})")

    @classmethod
    def tabulated(cls, times, values, kind: str = "linear") -> "TruthFunction":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if kind == "linear":
            return cls(lambda t: np.interp(t, times, values), "tabulated")
        if kind == "previous":  # step function, left-continuous lookup
            def step(t):
                idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1)
                return values[idx]
            return cls(step, "tabulated-step")
        raise ValueError(f"unknown interpolation kind {kind!r}")


def scenario(name: str, t_end: float = 70.0) -> TruthFunction:
    """Named truth curves for the simulation-study harness."""
    third = t_end / 3.0
    if name in ("1", "constant"):
        return TruthFunction.constant(0.3)
    if name in ("2", "increasing"):
        return TruthFunction.tabulated([0, third, 2 * third], [0.15, 0.15, 0.35], kind="previous")
    if name in ("3", "decreasing"):
        return TruthFunction.tabulated([0, third, 2 * third], [0.35, 0.35, 0.15], kind="previous")
    if name in ("4", "peak"):
        return TruthFunction.tabulated([0, third, 2 * third], [0.15, 0.4, 0.15], kind="previous")
    if name in ("5", "smooth"):
        return TruthFunction(
            lambda t: 0.1 + 0.3 / (1.0 + np.exp(-8.0 * (np.asarray(t, dtype=float) / t_end - 0.5))),
            "smooth-increasing",
        )
    raise ValueError(f"unknown scenario {name!r}")


def imse(estimate, truth: TruthFunction, grid) -> float:
    """Trapezoid approximation of the integrated squared error on the grid."""
    grid = np.asarray(grid, dtype=float)
    err2 = (np.asarray(estimate, dtype=float) - truth.value(grid)) ** 2
    return float(np.trapezoid(err2, grid))


def coverage(bands, truth: TruthFunction) -> np.ndarray:
    """Per-timestamp fraction of replicate bands containing the true rate
    (closed-interval convention)."""
    bands = list(bands)
    if not bands:
        raise ValueError("no bands supplied")
    grid = bands[0].times
    truth_vals = truth.value(grid)
    hits = np.zeros(grid.size)
    for b in bands:
        if not np.array_equal(b.times, grid):
            raise ValueError("bands evaluated on different grids")
        hits += b.contains(truth_vals)
    return hits / len(bands)


def r0_curve(theta: ParameterVector, grid) -> np.ndarray:
    """Time-varying basic reproduction number: fitted rate over gamma."""
    if theta.gamma == 0:
        raise ZeroDivisionError("gamma is zero; reproduction number undefined")
    return theta.spline.value(np.asarray(grid, dtype=float)) / theta.gamma

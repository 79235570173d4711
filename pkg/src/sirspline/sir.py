"""Stochastic SIR states, paths and simulators.

Three simulators are provided: an exact event-resolution simulator
(Lewis thinning against an upper bound of the time-varying infection
rate), a tau-leaping simulator on a fixed grid (Poisson event counts
with left-endpoint rates), and an Euler-Maruyama scheme for the
diffusion approximation on the proportion scale.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidRateError
from .rng import rng_for

_BOUND_GRID = 513  # grid resolution for the numerical sup of beta


@dataclass(frozen=True)
class CountState:
    """SIR compartment counts; removed count is n - s - i, never stored."""

    s: int
    i: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("population must be >= 1")
        if self.s < 0 or self.i < 0 or self.s + self.i > self.n:
            raise ValueError(f"invalid compartment counts s={self.s} i={self.i} n={self.n}")

    @property
    def r(self) -> int:
        return self.n - self.s - self.i

    def proportions(self) -> "ProportionState":
        return ProportionState(self.s / self.n, self.i / self.n)


@dataclass(frozen=True)
class ProportionState:
    """Susceptible/infected fractions; diffusion states may exit [0,1]^2."""

    s: float
    j: float

    @property
    def out_of_bounds(self) -> bool:
        return not (0.0 <= self.s and 0.0 <= self.j and self.s + self.j <= 1.0)


@dataclass(frozen=True)
class RatePair:
    """Infection rate function beta(t) and constant recovery rate gamma."""

    beta: Callable[[float], float]
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and >= 0")

    def beta_sup(self, t0: float, t1: float) -> float:
        """Numerical sup of beta over [t0, t1]; validates the rate there."""
        grid = np.linspace(t0, t1, _BOUND_GRID)
        vals = np.asarray([self.beta(t) for t in grid], dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidRateError("beta must be finite and >= 0 on the horizon")
        return float(vals.max())


class EpidemicPath:
    """Integer SIR counts at strictly increasing timestamps."""

    def __init__(self, times, s, i, population: int):
        times = np.asarray(times, dtype=float)
        s = np.asarray(s, dtype=np.int64)
        i = np.asarray(i, dtype=np.int64)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("path needs at least one timestamp")
        if not (times.size == s.size == i.size):
            raise ValueError("times/states length mismatch")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if population < 1:
            raise ValueError("population must be >= 1")
        if np.any(s < 0) or np.any(i < 0) or np.any(s + i > population):
            raise ValueError("invalid compartment counts in path")
        if np.any(np.diff(s) > 0):
            raise ValueError("susceptible counts must be non-increasing")
        if np.any(np.diff(s + i) > 0):
            raise ValueError("removed counts must be non-decreasing")
        self.times = times
        self.s = s
        self.i = i
        self.n = int(population)

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EpidemicPath)
            and self.n == other.n
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.i, other.i)
        )

    def state(self, idx: int) -> CountState:
        return CountState(int(self.s[idx]), int(self.i[idx]), self.n)

    def shifted(self, offset: float) -> "EpidemicPath":
        return EpidemicPath(self.times + offset, self.s, self.i, self.n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "S", "I", "N"])
        for t, s, i in zip(self.times, self.s, self.i):
            w.writerow([repr(float(t)), int(s), int(i), self.n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EpidemicPath":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty path file")
        times = [float(r["time"]) for r in rows]
        s = [int(r["S"]) for r in rows]
        i = [int(r["I"]) for r in rows]
        n = int(rows[0]["N"])
        return cls(times, s, i, n)


class _DrawBuffer:
    """Batched exponential/uniform draws to cut per-event RNG overhead."""

    def __init__(self, rng: np.random.Generator, size: int = 4096):
        self._rng = rng
        self._size = size
        self._exp = rng.exponential(size=size)
        self._uni = rng.random(size=size)
        self._ei = 0
        self._ui = 0

    def next_exp(self) -> float:
        if self._ei >= self._size:
            self._exp = self._rng.exponential(size=self._size)
            self._ei = 0
        v = self._exp[self._ei]
        self._ei += 1
        return v

    def next_uni(self) -> float:
        if self._ui >= self._size:
            self._uni = self._rng.random(size=self._size)
            self._ui = 0
        v = self._uni[self._ui]
        self._ui += 1
        return v


def simulate_exact(rates: RatePair, init: CountState, t_end: float, seed: int) -> EpidemicPath:
    """Exact event-resolution simulation via thinning.

    Candidate events are drawn from a homogeneous process whose rate
    bounds the true total intensity (using the numerical sup of beta
    over the remaining horizon) and accepted with probability equal to
    the true-to-bound intensity ratio.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    bsup = rates.beta_sup(0.0, t_end)
    beta, gamma, n = rates.beta, rates.gamma, init.n

    draws = _DrawBuffer(rng_for(seed))
    t = 0.0
    s, i = init.s, init.i
    times, ss, ii = [0.0], [s], [i]

    while i > 0:
        lam_max = bsup * s * i / n + gamma * i
        if lam_max <= 0:
            break
        t = t + draws.next_exp() / lam_max
        if t >= t_end:
            t = t_end
            break
        lam_inf = beta(t) * s * i / n
        u = draws.next_uni() * lam_max
        if u < lam_inf:
            s -= 1
            i += 1
        elif u < lam_inf + gamma * i:
            i -= 1
        else:
            continue  # thinned candidate; clock already advanced
        times.append(t)
        ss.append(s)
        ii.append(i)

    if times[-1] < t_end:
        times.append(t_end)
        ss.append(s)
        ii.append(i)
    return EpidemicPath(times, ss, ii, n)


def simulate_tau_leap(rates: RatePair, init: CountState, grid, seed: int) -> EpidemicPath:
    """Tau-leaping on a fixed grid with left-endpoint rates.

    Each step draws Poisson infection and removal counts; counts are
    truncated so compartments never go negative.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")

    rng = rng_for(seed)
    beta, gamma, n = rates.beta, rates.gamma, init.n
    s, i = init.s, init.i
    ss, ii = [s], [i]
    for k in range(grid.size - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        lam_inf = dt * beta(t) * s * i / n
        lam_rem = dt * gamma * i
        if not np.isfinite(lam_inf) or lam_inf < 0:
            raise InvalidRateError(f"invalid infection intensity at t={t}")
        inf = min(int(rng.poisson(lam_inf)), s)
        rem = min(int(rng.poisson(lam_rem)), i + inf)
        s -= inf
        i += inf - rem
        ss.append(s)
        ii.append(i)
    return EpidemicPath(grid, ss, ii, n)


def simulate_tau_leap_batch(rates: RatePair, init: CountState, grid, n_reps: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized tau-leaping across replicates.

    Returns (S, I) arrays of shape (n_reps, len(grid)). Distributionally
    identical to per-replicate simulate_tau_leap calls but uses one
    draw stream per step across replicates.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    beta, gamma, n = rates.beta, rates.gamma, init.n
    s = np.full(n_reps, init.s, dtype=np.int64)
    i = np.full(n_reps, init.i, dtype=np.int64)
    S = np.empty((n_reps, grid.size), dtype=np.int64)
    I = np.empty((n_reps, grid.size), dtype=np.int64)
    S[:, 0], I[:, 0] = s, i
    for k in range(grid.size - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        rng = rng_for(seed, k)
        inf = np.minimum(rng.poisson(dt * beta(t) * s * i / n), s)
        rem = np.minimum(rng.poisson(dt * gamma * i), i + inf)
        s = s - inf
        i = i + inf - rem
        S[:, k + 1], I[:, k + 1] = s, i
    return S, I


def simulate_euler_maruyama(
    rates: RatePair,
    init: ProportionState,
    grid,
    n: int,
    seed: int,
) -> list[ProportionState]:
    """Euler-Maruyama iteration of the diffusion approximation.

    Negative arguments under the square roots (possible once the path
    exits [0,1]^2) are clamped to 0 before forming the noise matrix.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if n < 1:
        raise ValueError("population must be >= 1")

    rng = rng_for(seed)
    beta, gamma = rates.beta, rates.gamma
    s, j = init.s, init.j
    out = [init]
    for k in range(grid.size - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        b = max(beta(t) * s * j, 0.0)
        g = max(gamma * j, 0.0)
        drift_s = -beta(t) * s * j
        drift_j = beta(t) * s * j - gamma * j
        sq_b = np.sqrt(b / n)
        sq_g = np.sqrt(g / n)
        w1, w2 = rng.standard_normal(2) * np.sqrt(dt)
        s = s + drift_s * dt + sq_b * w1
        j = j + drift_j * dt - sq_b * w1 + sq_g * w2
        out.append(ProportionState(float(s), float(j)))
    return out


def sample_path_at(path: EpidemicPath, times) -> EpidemicPath:
    """Cadlag sampling: state at each time is the last event at or before it."""
    times = np.asarray(times, dtype=float)
    if np.any(times < path.times[0]) or np.any(times > path.times[-1]):
        raise ValueError("requested time outside the path horizon")
    idx = np.searchsorted(path.times, times, side="right") - 1
    return EpidemicPath(times, path.s[idx], path.i[idx], path.n)

"""Approximate log-likelihoods for discretely observed SIR paths.

Two approximation families are supported:

* tau-leap: Poisson transition pmfs for the compartment count decrements,
  with rates frozen at the left endpoint of each interval.
* diffusion: Gaussian transition densities from a one-step Euler-Maruyama
  discretization of the diffusion approximation, with boundary
  observations handled as censored (normal tail / rectangle probability).

Both families have a k-step variant that integrates out the latent
intermediate states by Monte-Carlo averaging over simulated sub-paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, log_ndtr, ndtr

from .errors import (
    DataValidityError,
    DegenerateTransitionError,
    MonteCarloDegeneracyError,
)
from .rng import rng_for
from .sir import EpidemicPath, ProportionState
from .splines import SplineModel, basis_matrix

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParameterVector:
    """Recovery rate plus the spline model of the infection rate."""

    gamma: float
    spline: SplineModel

    @property
    def is_feasible(self) -> bool:
        return self.gamma >= 0 and all(c >= 0 for c in self.spline.coefficients)

    def beta(self, t):
        return self.spline.value(t)

    def shifted(self, offset: float) -> "ParameterVector":
        return ParameterVector(
            self.gamma,
            SplineModel(self.spline.knots.shifted(offset), self.spline.coefficients),
        )


@dataclass(frozen=True)
class LikelihoodConfig:
    """Approximation family and Monte-Carlo settings."""

    family: str = "tau-leap"
    steps_k: int = 1
    mc_paths_B: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("tau-leap", "diffusion"):
            raise ValueError(f"unknown likelihood family {self.family!r}")
        if self.steps_k < 1:
            raise ValueError("steps_k must be >= 1")
        if self.mc_paths_B < 1:
            raise ValueError("mc_paths_B must be >= 1")


@dataclass(frozen=True)
class TransitionMoments:
    """Gaussian transition moments for one observation interval."""

    mu: np.ndarray      # 2-vector
    sigma: np.ndarray   # 2x2 symmetric

    def cond_j_given_s(self, s_val: float) -> tuple[float, float]:
        """Conditional mean/variance of the infected coordinate given s."""
        s11, s12, s22 = self.sigma[0, 0], self.sigma[0, 1], self.sigma[1, 1]
        if s11 <= 0:
            raise DegenerateTransitionError("zero marginal variance for s")
        return self.mu[1] + s12 / s11 * (s_val - self.mu[0]), s22 - s12 * s12 / s11

    def cond_s_given_j(self, j_val: float) -> tuple[float, float]:
        s11, s12, s22 = self.sigma[0, 0], self.sigma[0, 1], self.sigma[1, 1]
        if s22 <= 0:
            raise DegenerateTransitionError("zero marginal variance for j")
        return self.mu[0] + s12 / s22 * (j_val - self.mu[1]), s11 - s12 * s12 / s22


def drift_and_diffusion(t: float, z: ProportionState, theta: ParameterVector, n: int):
    """Drift vector and diffusion (covariance) matrix at (t, z).

    Negative products under the square roots are clamped to 0 before the
    noise matrix is formed, so the covariance is always PSD.
    """
    beta = theta.beta(t)
    bsj = beta * z.s * z.j
    gj = theta.gamma * z.j
    a = np.array([-bsj, bsj - gj])
    b = max(bsj, 0.0)
    g = max(gj, 0.0)
    sigma = np.array([[b, -b], [-b, b + g]]) / n
    return a, sigma


def transition_moments(
    t_left: float, x_left: ProportionState, dt: float, theta: ParameterVector, n: int
) -> TransitionMoments:
    a, sigma = drift_and_diffusion(t_left, x_left, theta, n)
    mu = np.array([x_left.s, x_left.j]) + a * dt
    return TransitionMoments(mu=mu, sigma=sigma * dt)


def _censor_interval(v: float):
    """Censoring interval for a proportion coordinate, or None if interior."""
    if v <= 0.0:
        return (-np.inf, 0.0)
    if v >= 1.0:
        return (1.0, np.inf)
    return None


def _log_norm_pdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (_LOG_2PI + math.log(var) + (x - mean) ** 2 / var)


def _log_norm_interval(interval, mean: float, var: float) -> float:
    """log P(X in interval) for X ~ N(mean, var); interval is semi-infinite."""
    sd = math.sqrt(var)
    lo, hi = interval
    if lo == -np.inf:
        return float(log_ndtr((hi - mean) / sd))
    return float(log_ndtr((mean - lo) / sd))


def _norm_interval(interval, mean: float, var: float) -> float:
    sd = math.sqrt(var)
    lo, hi = interval
    if lo == -np.inf:
        return float(ndtr((hi - mean) / sd))
    return float(ndtr((mean - lo) / sd))


def _log_rectangle_prob(int_s, int_j, moments: TransitionMoments) -> float:
    """log P(Z in int_s x int_j) for bivariate normal Z, by conditional
    decomposition with adaptive 1-D quadrature (relative tolerance 1e-8)."""
    mu1 = moments.mu[0]
    s11 = moments.sigma[0, 0]
    if s11 <= 0:
        raise DegenerateTransitionError("degenerate covariance in rectangle probability")

    def integrand(u):
        cm, cv = moments.cond_j_given_s(u)
        if cv <= 0:
            raise DegenerateTransitionError("zero conditional variance in rectangle probability")
        return math.exp(_log_norm_pdf(u, mu1, s11)) * _norm_interval(int_j, cm, cv)

    lo, hi = int_s
    p, _ = quad(integrand, lo, hi, epsabs=1e-300, epsrel=1e-8)
    if p <= 0:
        return -np.inf
    return math.log(p)


def diffusion_transition_logdensity(
    t_left: float,
    x_left: ProportionState,
    dt: float,
    x_right: ProportionState,
    theta: ParameterVector,
    n: int,
) -> float:
    """One-step diffusion log-density/probability of x_right given x_left.

    Interior observations contribute a bivariate normal density; a
    coordinate at or beyond the [0,1] boundary contributes a censored
    normal integral, conditioning on the observed interior coordinate
    when there is one.
    """
    m = transition_moments(t_left, x_left, dt, theta, n)
    int_s = _censor_interval(x_right.s)
    int_j = _censor_interval(x_right.j)
    s11, s12, s22 = m.sigma[0, 0], m.sigma[0, 1], m.sigma[1, 1]

    if int_s is None and int_j is None:
        det = s11 * s22 - s12 * s12
        if det <= 0 or s11 <= 0:
            raise DegenerateTransitionError("singular transition covariance")
        d1 = x_right.s - m.mu[0]
        d2 = x_right.j - m.mu[1]
        q = (s22 * d1 * d1 - 2 * s12 * d1 * d2 + s11 * d2 * d2) / det
        return -_LOG_2PI - 0.5 * math.log(det) - 0.5 * q
    if int_s is None:  # s interior, j censored
        cm, cv = m.cond_j_given_s(x_right.s)
        if cv <= 0:
            raise DegenerateTransitionError("zero conditional variance for j")
        return _log_norm_pdf(x_right.s, m.mu[0], s11) + _log_norm_interval(int_j, cm, cv)
    if int_j is None:  # j interior, s censored
        cm, cv = m.cond_s_given_j(x_right.j)
        if cv <= 0:
            raise DegenerateTransitionError("zero conditional variance for s")
        return _log_norm_pdf(x_right.j, m.mu[1], s22) + _log_norm_interval(int_s, cm, cv)
    return _log_rectangle_prob(int_s, int_j, m)


def _poisson_logpmf(k: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Elementwise Poisson log-pmf; rate 0 with count 0 contributes 0."""
    k = np.asarray(k, dtype=float)
    lam = np.asarray(lam, dtype=float)
    out = np.full(np.broadcast_shapes(k.shape, lam.shape), -np.inf)
    k, lam = np.broadcast_arrays(k, lam)
    zero = lam == 0
    out[zero & (k == 0)] = 0.0
    pos = lam > 0
    kp, lp = k[pos], lam[pos]
    out[pos] = kp * np.log(lp) - lp - gammaln(kp + 1)
    out[k < 0] = -np.inf
    return out


def _transition_arrays(path: EpidemicPath):
    t = path.times
    s = path.s.astype(float)
    i = path.i.astype(float)
    dt = np.diff(t)
    dw = -np.diff(s)
    dy = -np.diff(s + i)
    return t[:-1], dt, s[:-1], i[:-1], dw, dy


def tauleap_loglik_1step(path: EpidemicPath, theta: ParameterVector) -> float:
    """One-step tau-leaping log-likelihood, conditional on the first state."""
    if len(path) < 2:
        raise DataValidityError("need at least two observations")
    t_left, dt, s, i, dw, dy = _transition_arrays(path)
    bad = np.nonzero((dw < 0) | (dy < 0))[0]
    if bad.size:
        raise DataValidityError(f"negative increment at transition {bad[0]}")
    beta = basis_matrix(theta.spline.knots, t_left) @ np.asarray(theta.spline.coefficients)
    lam_inf = dt * beta * s * i / path.n
    lam_rem = dt * theta.gamma * i
    return float(np.sum(_poisson_logpmf(dw, lam_inf)) + np.sum(_poisson_logpmf(dy, lam_rem)))


def diffusion_loglik_1step(path: EpidemicPath, theta: ParameterVector) -> float:
    """One-step diffusion log-likelihood with boundary censoring."""
    if len(path) < 2:
        raise DataValidityError("need at least two observations")
    n = path.n
    total = 0.0
    for idx in range(len(path) - 1):
        x_l = path.state(idx).proportions()
        x_r = path.state(idx + 1).proportions()
        dt = path.times[idx + 1] - path.times[idx]
        try:
            total += diffusion_transition_logdensity(
                path.times[idx], x_l, dt, x_r, theta, n
            )
        except DegenerateTransitionError as e:
            raise DegenerateTransitionError(f"transition {idx}: {e}") from e
    return total


def _simulate_diffusion_subpaths(t_left, x_left, dt_sub, k, B, theta, n, rng):
    """Vectorized Euler-Maruyama sub-paths: k-1 internal steps, B paths.

    Returns (s, j) arrays of shape (B,) at the (k-1)-th sub-time.
    """
    s = np.full(B, x_left.s)
    j = np.full(B, x_left.j)
    noise = rng.standard_normal((k - 1, 2, B)) * math.sqrt(dt_sub)
    for r in range(k - 1):
        tau = t_left + r * dt_sub
        beta = theta.beta(tau)
        bsj = beta * s * j
        gj = theta.gamma * j
        sq_b = np.sqrt(np.maximum(bsj, 0.0) / n)
        sq_g = np.sqrt(np.maximum(gj, 0.0) / n)
        w1, w2 = noise[r, 0], noise[r, 1]
        s = s - bsj * dt_sub + sq_b * w1
        j = j + (bsj - gj) * dt_sub - sq_b * w1 + sq_g * w2
    return s, j


def _simulate_tauleap_subpaths(t_left, s0, i0, dt_sub, k, B, theta, n, rng):
    """Vectorized tau-leap sub-paths in counts; returns (s, i) of shape (B,)."""
    s = np.full(B, s0, dtype=np.int64)
    i = np.full(B, i0, dtype=np.int64)
    for r in range(k - 1):
        tau = t_left + r * dt_sub
        beta = theta.beta(tau)
        inf = np.minimum(rng.poisson(dt_sub * beta * s * i / n), s)
        rem = np.minimum(rng.poisson(dt_sub * theta.gamma * i), i + inf)
        s = s - inf
        i = i + inf - rem
    return s, i


def multistep_loglik(path: EpidemicPath, theta: ParameterVector, config: LikelihoodConfig) -> float:
    """k-step Monte-Carlo log-likelihood (law-of-large-numbers average of
    the final one-step density over B simulated sub-paths per transition).

    With steps_k == 1 this is exactly the corresponding one-step
    log-likelihood; no simulation is performed.
    """
    if config.steps_k == 1:
        if config.family == "tau-leap":
            return tauleap_loglik_1step(path, theta)
        return diffusion_loglik_1step(path, theta)

    k, B, n = config.steps_k, config.mc_paths_B, path.n
    total = 0.0
    for idx in range(len(path) - 1):
        t_l = path.times[idx]
        dt = path.times[idx + 1] - t_l
        dt_sub = dt / k
        t_last = t_l + (k - 1) * dt_sub
        rng = rng_for(config.seed, idx)

        if config.family == "diffusion":
            x_l = path.state(idx).proportions()
            x_r = path.state(idx + 1).proportions()
            s, j = _simulate_diffusion_subpaths(t_l, x_l, dt_sub, k, B, theta, n, rng)
            dens = np.zeros(B)
            n_valid = 0
            for b in range(B):
                try:
                    dens[b] = math.exp(
                        diffusion_transition_logdensity(
                            t_last, ProportionState(s[b], j[b]), dt_sub, x_r, theta, n
                        )
                    )
                    n_valid += 1
                except DegenerateTransitionError:
                    dens[b] = 0.0
            if n_valid == 0:
                raise MonteCarloDegeneracyError(
                    f"transition {idx}: all {B} diffusion sub-paths degenerate"
                )
        else:
            s0, i0 = int(path.s[idx]), int(path.i[idx])
            s, i = _simulate_tauleap_subpaths(t_l, s0, i0, dt_sub, k, B, theta, n, rng)
            beta = theta.beta(t_last)
            dw = s.astype(float) - float(path.s[idx + 1])
            dy = (s + i).astype(float) - float(path.s[idx + 1] + path.i[idx + 1])
            lam1 = dt_sub * beta * s * i / n
            lam2 = dt_sub * theta.gamma * i
            dens = np.exp(_poisson_logpmf(dw, lam1) + _poisson_logpmf(dy, lam2))
            if path.i[idx] > 0 and np.all(i == 0) and np.all(dens == 0):
                raise MonteCarloDegeneracyError(
                    f"transition {idx}: all {B} tau-leap sub-paths absorbed"
                )
        avg = float(np.mean(dens))
        total += math.log(avg) if avg > 0 else -np.inf
    return total


def neg_loglik(path: EpidemicPath, theta: ParameterVector, config: LikelihoodConfig) -> float:
    """Negated log-likelihood for minimization; +inf on infeasible theta
    or non-finite likelihood values."""
    if not theta.is_feasible:
        return np.inf
    ll = multistep_loglik(path, theta, config)
    if not np.isfinite(ll):
        return np.inf
    return -ll


class PreparedLikelihood:
    """Repeated-evaluation helper for fitting: precomputes the transition
    arrays and the basis matrix at the left observation times so the
    objective is a cheap function of (gamma, coefficients)."""

    def __init__(self, path: EpidemicPath, knots, config: LikelihoodConfig):
        self.path = path
        self.knots = knots
        self.config = config
        self.n = path.n
        t_left, dt, s, i, dw, dy = _transition_arrays(path)
        bad = np.nonzero((dw < 0) | (dy < 0))[0]
        if bad.size:
            raise DataValidityError(f"negative increment at transition {bad[0]}")
        self.t_left, self.dt = t_left, dt
        self.s, self.i, self.dw, self.dy = s, i, dw, dy
        self.phi = basis_matrix(knots, t_left)
        # diffusion 1-step needs the right-state censoring pattern
        self.x_s = path.s.astype(float) / path.n
        self.x_j = path.i.astype(float) / path.n
        right_s, right_j = self.x_s[1:], self.x_j[1:]
        self.interior = (
            (right_s > 0) & (right_s < 1) & (right_j > 0) & (right_j < 1)
        )

    def theta(self, gamma: float, coefs) -> ParameterVector:
        return ParameterVector(gamma, SplineModel(self.knots, tuple(coefs)))

    def neg_loglik_params(self, gamma: float, coefs: np.ndarray) -> float:
        if gamma < 0 or np.any(np.asarray(coefs) < 0):
            return np.inf
        cfg = self.config
        if cfg.steps_k > 1:
            return neg_loglik(self.path, self.theta(gamma, coefs), cfg)
        beta = self.phi @ np.asarray(coefs, dtype=float)
        if cfg.family == "tau-leap":
            lam_inf = self.dt * beta * self.s * self.i / self.n
            lam_rem = self.dt * gamma * self.i
            ll = float(
                np.sum(_poisson_logpmf(self.dw, lam_inf))
                + np.sum(_poisson_logpmf(self.dy, lam_rem))
            )
        else:
            ll = self._diffusion_1step(gamma, beta)
        return -ll if np.isfinite(ll) else np.inf

    def _diffusion_1step(self, gamma: float, beta: np.ndarray) -> float:
        n = self.n
        s_l, j_l = self.x_s[:-1], self.x_j[:-1]
        s_r, j_r = self.x_s[1:], self.x_j[1:]
        bsj = beta * s_l * j_l
        gj = gamma * j_l
        mu1 = s_l - bsj * self.dt
        mu2 = j_l + (bsj - gj) * self.dt
        b = np.maximum(bsj, 0.0)
        g = np.maximum(gj, 0.0)
        s11 = b / n * self.dt
        s12 = -b / n * self.dt
        s22 = (b + g) / n * self.dt
        det = s11 * s22 - s12 * s12

        total = 0.0
        mask = self.interior
        if np.any(mask):
            if np.any(det[mask] <= 0) or np.any(s11[mask] <= 0):
                idx = int(np.nonzero(mask & ((det <= 0) | (s11 <= 0)))[0][0])
                raise DegenerateTransitionError(f"transition {idx}: singular covariance")
            d1 = (s_r - mu1)[mask]
            d2 = (j_r - mu2)[mask]
            dm = det[mask]
            q = (s22[mask] * d1 * d1 - 2 * s12[mask] * d1 * d2 + s11[mask] * d2 * d2) / dm
            total += float(np.sum(-_LOG_2PI - 0.5 * np.log(dm) - 0.5 * q))
        if not np.all(mask):
            for idx in np.nonzero(~mask)[0]:
                m = TransitionMoments(
                    mu=np.array([mu1[idx], mu2[idx]]),
                    sigma=np.array([[s11[idx], s12[idx]], [s12[idx], s22[idx]]]),
                )
                try:
                    total += _censored_logdensity(m, s_r[idx], j_r[idx])
                except DegenerateTransitionError as e:
                    raise DegenerateTransitionError(f"transition {int(idx)}: {e}") from e
        return total


def _censored_logdensity(m: TransitionMoments, s_r: float, j_r: float) -> float:
    """Censored-case log contribution given precomputed moments."""
    int_s = _censor_interval(s_r)
    int_j = _censor_interval(j_r)
    s11, s22 = m.sigma[0, 0], m.sigma[1, 1]
    if int_s is None and int_j is None:
        raise ValueError("not a censored observation")
    if int_s is None:
        cm, cv = m.cond_j_given_s(s_r)
        if cv <= 0:
            raise DegenerateTransitionError("zero conditional variance for j")
        return _log_norm_pdf(s_r, m.mu[0], s11) + _log_norm_interval(int_j, cm, cv)
    if int_j is None:
        cm, cv = m.cond_s_given_j(j_r)
        if cv <= 0:
            raise DegenerateTransitionError("zero conditional variance for s")
        return _log_norm_pdf(j_r, m.mu[1], s22) + _log_norm_interval(int_s, cm, cv)
    return _log_rectangle_prob(int_s, int_j, m)

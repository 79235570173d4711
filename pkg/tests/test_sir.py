import numpy as np
import pytest

import sirspline as ss
from sirspline.errors import InvalidRateError


CONST = ss.RatePair(lambda t: 0.3, 0.1)


class TestStates:
    def test_count_state_removed_and_proportions(self):
        st = ss.CountState(70, 20, 100)
        assert st.r == 10
        props = st.proportions()
        assert props.s == pytest.approx(0.7)
        assert props.j == pytest.approx(0.2)
        assert not props.out_of_bounds

    def test_count_state_validation(self):
        with pytest.raises(ValueError):
            ss.CountState(-1, 5, 100)
        with pytest.raises(ValueError):
            ss.CountState(60, 50, 100)
        with pytest.raises(ValueError):
            ss.CountState(0, 0, 0)

    def test_proportion_state_out_of_bounds(self):
        assert ss.ProportionState(-0.01, 0.5).out_of_bounds
        assert ss.ProportionState(0.6, 0.5).out_of_bounds
        assert not ss.ProportionState(0.0, 1.0).out_of_bounds

    def test_rate_pair_rejects_bad_gamma_and_beta(self):
        with pytest.raises(ValueError):
            ss.RatePair(lambda t: 0.3, -0.1)
        bad = ss.RatePair(lambda t: -0.1 if t > 5 else 0.3, 0.1)
        with pytest.raises(InvalidRateError):
            bad.beta_sup(0.0, 10.0)

    def test_beta_sup_of_increasing_rate(self):
        rp = ss.RatePair(lambda t: 0.1 + 0.02 * t, 0.1)
        assert rp.beta_sup(0.0, 10.0) == pytest.approx(0.3)


class TestEpidemicPath:
    def test_validation(self):
        with pytest.raises(ValueError):
            ss.EpidemicPath([0.0, 1.0, 1.0], [90, 80, 70], [10, 20, 30], 100)
        with pytest.raises(ValueError):  # susceptibles increase
            ss.EpidemicPath([0.0, 1.0], [80, 90], [10, 10], 100)
        with pytest.raises(ValueError):  # removed count decreases
            ss.EpidemicPath([0.0, 1.0], [90, 90], [5, 10], 100)
        with pytest.raises(ValueError):
            ss.EpidemicPath([0.0, 1.0], [90, 80], [20, 20], 100)

    def test_state_and_shift(self):
        path = ss.EpidemicPath([0.0, 1.0], [90, 85], [10, 12], 100)
        assert path.state(1) == ss.CountState(85, 12, 100)
        shifted = path.shifted(-0.5)
        assert shifted.times[0] == -0.5
        assert shifted == path.shifted(-0.5)
        assert shifted != path

    def test_csv_round_trip(self):
        path = ss.EpidemicPath([0.0, 0.5, 2.25], [90, 85, 80], [10, 12, 11], 100)
        assert ss.EpidemicPath.from_csv(path.to_csv()) == path

    def test_from_csv_rejects_empty(self):
        with pytest.raises(ValueError):
            ss.EpidemicPath.from_csv("time,S,I,N\n")


class TestExactSimulator:
    def test_no_infected_is_absorbing(self):
        path = ss.simulate_exact(CONST, ss.CountState(100, 0, 100), 10.0, seed=1)
        assert np.all(path.i == 0)
        assert np.all(path.s == 100)
        assert path.times[-1] == 10.0

    def test_zero_rates_freeze_the_state(self):
        rates = ss.RatePair(lambda t: 0.0, 0.0)
        path = ss.simulate_exact(rates, ss.CountState(90, 10, 100), 5.0, seed=1)
        assert len(path) == 2  # initial point plus horizon end
        assert path.i[-1] == 10

    def test_event_increments_are_unit_moves(self):
        path = ss.simulate_exact(CONST, ss.CountState(950, 50, 1000), 30.0, seed=3)
        ds = np.diff(path.s)
        dy = -np.diff(path.s + path.i)  # removed-count increments
        # at most one event per record; the appended horizon point moves nothing
        assert np.all(np.isin(ds, [0, -1]))
        assert np.all(np.isin(dy, [0, 1]))
        assert path.times[-1] == 30.0

    def test_deterministic_in_seed(self):
        a = ss.simulate_exact(CONST, ss.CountState(950, 50, 1000), 20.0, seed=11)
        b = ss.simulate_exact(CONST, ss.CountState(950, 50, 1000), 20.0, seed=11)
        c = ss.simulate_exact(CONST, ss.CountState(950, 50, 1000), 20.0, seed=12)
        assert a == b
        assert a != c

    def test_requires_positive_horizon(self):
        with pytest.raises(ValueError):
            ss.simulate_exact(CONST, ss.CountState(90, 10, 100), 0.0, seed=1)


class TestTauLeap:
    def test_single_step_poisson_mean(self):
        # One step of length dt from (s, i): E[new infections] = dt*beta*s*i/n
        # truncated at s. With these rates truncation is negligible.
        n, s0, i0, dt, beta, gamma = 10_000, 9000, 1000, 0.5, 0.3, 0.1
        rates = ss.RatePair(lambda t: beta, gamma)
        init = ss.CountState(s0, i0, n)
        S, I = ss.simulate_tau_leap_batch(rates, init, [0.0, dt], 40_000, seed=5)
        inf_mean = (s0 - S[:, 1]).mean()
        rem_mean = (s0 + i0 - S[:, 1] - I[:, 1]).mean()
        lam_inf = dt * beta * s0 * i0 / n
        lam_rem = dt * gamma * i0
        assert inf_mean == pytest.approx(lam_inf, rel=0.02)
        assert rem_mean == pytest.approx(lam_rem, rel=0.02)

    def test_counts_never_negative(self):
        # huge rates force truncation of the Poisson draws
        rates = ss.RatePair(lambda t: 50.0, 20.0)
        path = ss.simulate_tau_leap(rates, ss.CountState(90, 10, 100), np.arange(11.0), seed=2)
        assert np.all(path.s >= 0)
        assert np.all(path.i >= 0)
        assert np.all(path.s + path.i <= 100)

    def test_deterministic_in_seed(self):
        grid = np.arange(21.0)
        a = ss.simulate_tau_leap(CONST, ss.CountState(900, 100, 1000), grid, seed=9)
        b = ss.simulate_tau_leap(CONST, ss.CountState(900, 100, 1000), grid, seed=9)
        assert a == b

    def test_batch_matches_single_distribution(self):
        # Cross-simulator oracle: the batched simulator must reproduce the
        # per-path simulator's distribution. Compare mean final removed
        # counts over many replicates.
        grid = np.linspace(0.0, 20.0, 41)
        init = ss.CountState(950, 50, 1000)
        n_reps = 400
        singles = np.array([
            ss.simulate_tau_leap(CONST, init, grid, seed=(1000, r)).state(len(grid) - 1).r
            for r in range(n_reps)
        ])
        S, I = ss.simulate_tau_leap_batch(CONST, init, grid, n_reps, seed=77)
        batch = 1000 - S[:, -1] - I[:, -1]
        se = np.hypot(singles.std(ddof=1), batch.std(ddof=1)) / np.sqrt(n_reps)
        assert abs(singles.mean() - batch.mean()) < 3 * se

    def test_refinement_approaches_exact_simulator(self):
        # Discrepancy of the mean final removed count against the exact
        # simulator should shrink as the leap grid is refined.
        init = ss.CountState(950, 50, 1000)
        t_end = 20.0
        n_reps = 600
        exact_final = np.array([
            ss.simulate_exact(CONST, init, t_end, seed=(2000, r)).i[-1]
            for r in range(n_reps)
        ])
        errs = []
        for k, sub in enumerate([2, 8, 64]):
            grid = np.linspace(0.0, t_end, sub + 1)
            S, I = ss.simulate_tau_leap_batch(CONST, init, grid, n_reps, seed=(3000, k))
            errs.append(abs(I[:, -1].mean() - exact_final.mean()))
        se = exact_final.std(ddof=1) / np.sqrt(n_reps)
        # the finest grid must agree with the exact simulator up to MC noise
        assert errs[-1] < max(errs[0], 6 * se)
        assert errs[-1] < 4 * se + 1e-9

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            ss.simulate_tau_leap(CONST, ss.CountState(90, 10, 100), [], seed=1)
        with pytest.raises(ValueError):
            ss.simulate_tau_leap(CONST, ss.CountState(90, 10, 100), [0.0, 0.0], seed=1)


class TestEulerMaruyama:
    def test_drift_limit_large_population(self):
        # As the population grows the noise vanishes and the scheme tends
        # to the deterministic Euler iteration.
        grid = np.linspace(0.0, 10.0, 101)
        start = ss.ProportionState(0.95, 0.05)
        states = ss.simulate_euler_maruyama(CONST, start, grid, n=10**12, seed=4)
        s, j = start.s, start.j
        for k in range(grid.size - 1):
            dt = grid[k + 1] - grid[k]
            bsj = 0.3 * s * j
            s, j = s - bsj * dt, j + (bsj - 0.1 * j) * dt
        assert states[-1].s == pytest.approx(s, abs=1e-4)
        assert states[-1].j == pytest.approx(j, abs=1e-4)

    def test_one_step_moments(self):
        # Single-step mean and covariance must match the drift/diffusion
        # pair of the approximating diffusion.
        n, dt, beta, gamma = 1000, 0.25, 0.3, 0.1
        start = ss.ProportionState(0.8, 0.15)
        rates = ss.RatePair(lambda t: beta, gamma)
        reps = 30_000
        finals = np.array([
            [st.s, st.j]
            for r in range(reps)
            for st in [ss.simulate_euler_maruyama(rates, start, [0.0, dt], n, seed=(9, r))[-1]]
        ])
        bsj = beta * start.s * start.j
        gj = gamma * start.j
        mu = np.array([start.s - bsj * dt, start.j + (bsj - gj) * dt])
        cov = np.array([[bsj, -bsj], [-bsj, bsj + gj]]) * dt / n
        est_mu = finals.mean(axis=0)
        est_cov = np.cov(finals.T)
        assert np.allclose(est_mu, mu, atol=4 * np.sqrt(cov.max() / reps))
        assert np.allclose(est_cov, cov, rtol=0.05)

    def test_sqrt_clamp_keeps_path_finite(self):
        # start outside the simplex: negative product under the root
        start = ss.ProportionState(-0.1, 0.5)
        states = ss.simulate_euler_maruyama(CONST, start, np.linspace(0, 5, 51), 100, seed=6)
        assert all(np.isfinite([st.s, st.j]).all() for st in states)


class TestSamplePathAt:
    def test_last_event_at_or_before(self):
        path = ss.EpidemicPath([0.0, 1.0, 3.0], [90, 85, 80], [10, 12, 11], 100)
        out = ss.sample_path_at(path, [0.0, 0.9, 1.0, 2.9, 3.0])
        assert list(out.s) == [90, 90, 85, 85, 80]
        assert list(out.i) == [10, 10, 12, 12, 11]

    def test_outside_horizon_rejected(self):
        path = ss.EpidemicPath([0.0, 1.0], [90, 85], [10, 12], 100)
        with pytest.raises(ValueError):
            ss.sample_path_at(path, [-0.1])
        with pytest.raises(ValueError):
            ss.sample_path_at(path, [1.1])


def test_paper_scale_fixture_is_plausible(paper_scale_path):
    path = paper_scale_path
    assert path.n == 10_000
    assert len(path) == 71
    assert path.times[0] == 0.0 and path.times[-1] == 70.0
    # with R0 = 3 the epidemic should take off
    assert path.i.max() > 1000

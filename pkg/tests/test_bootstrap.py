import json

import numpy as np
import pytest

import sirspline as ss


@pytest.fixture(scope="module")
def fitted(paper_scale_path):
    basis = ss.KnotVector(0.0, 70.0, (), 0)
    cfg = ss.LikelihoodConfig(family="tau-leap")
    series = ss.moving_average_rates(paper_scale_path, 4)
    init = ss.initial_theta(series, basis, paper_scale_path)
    fit = ss.fit_mle(paper_scale_path, basis, cfg, init)
    return fit.theta_hat, cfg


@pytest.fixture(scope="module")
def ensemble(fitted, paper_scale_path):
    theta_hat, cfg = fitted
    return ss.run_bootstrap(theta_hat, paper_scale_path, B=40, config=cfg, seed=7)


def make_ensemble(curves, estimate, times=None):
    curves = np.asarray(curves, dtype=float)
    if times is None:
        times = np.arange(curves.shape[1], dtype=float)
    return ss.BootstrapEnsemble(
        times=np.asarray(times, dtype=float),
        curves=curves,
        estimate=np.asarray(estimate, dtype=float),
        attempts=curves.shape[0],
        discarded=0,
    )


class TestRunBootstrap:
    def test_shapes_and_accounting(self, ensemble, paper_scale_path):
        assert ensemble.curves.shape == (40, len(paper_scale_path))
        assert ensemble.attempts == ensemble.num_curves + ensemble.discarded
        assert not ensemble.shortfall
        assert np.array_equal(ensemble.times, paper_scale_path.times)

    def test_deterministic_in_seed(self, fitted, paper_scale_path):
        theta_hat, cfg = fitted
        a = ss.run_bootstrap(theta_hat, paper_scale_path, B=5, config=cfg, seed=7)
        b = ss.run_bootstrap(theta_hat, paper_scale_path, B=5, config=cfg, seed=7)
        c = ss.run_bootstrap(theta_hat, paper_scale_path, B=5, config=cfg, seed=8)
        np.testing.assert_array_equal(a.curves, b.curves)
        assert not np.array_equal(a.curves, c.curves)

    def test_replicates_scatter_around_estimate(self, ensemble):
        # fitted constant rate ~0.3; replicate curves must bracket it
        mid = ensemble.curves[:, 35]
        assert mid.min() < ensemble.estimate[35] < mid.max()
        assert 0.2 < mid.mean() < 0.4

    def test_dying_model_triggers_shortfall(self, paper_scale_path):
        # recovery far faster than infection: almost every replicate
        # epidemic dies before the horizon and is discarded
        basis = ss.KnotVector(0.0, 70.0, (), 0)
        theta = ss.ParameterVector(3.0, ss.SplineModel(basis, (0.05,)))
        cfg = ss.LikelihoodConfig(family="tau-leap")
        with pytest.warns(UserWarning, match="shortfall"):
            out = ss.run_bootstrap(
                theta, paper_scale_path, B=5, config=cfg,
                max_attempts_factor=2, seed=1,
            )
        assert out.shortfall
        assert out.attempts == 10

    def test_exact_simulator_variant(self, fitted, paper_scale_path):
        theta_hat, cfg = fitted
        out = ss.run_bootstrap(
            theta_hat, paper_scale_path, B=3, config=cfg, seed=2, simulator="exact"
        )
        assert out.num_curves == 3

    def test_bad_arguments(self, fitted, paper_scale_path):
        theta_hat, cfg = fitted
        with pytest.raises(ValueError):
            ss.run_bootstrap(theta_hat, paper_scale_path, B=0, config=cfg)
        with pytest.raises(ValueError):
            ss.run_bootstrap(theta_hat, paper_scale_path, B=2, config=cfg, simulator="magic")


class TestBands:
    """Interval constructions checked against hand-computed quantiles of
    the sample 1..10 (linear-interpolation quantile rule)."""

    def setup_method(self):
        # every timestamp sees the replicate values 1..10; estimate is 5
        col = np.arange(1.0, 11.0)
        self.curves = np.tile(col[:, None], (1, 4))
        self.ens = make_ensemble(self.curves, np.full(4, 5.0))
        self.q05 = float(np.quantile(col, 0.05))  # 1.45 under linear interpolation
        self.q95 = float(np.quantile(col, 0.95))  # 9.55

    def test_percentile(self):
        b = ss.band(self.ens, "percentile", level=0.90)
        np.testing.assert_allclose(b.lower, self.q05)
        np.testing.assert_allclose(b.upper, self.q95)
        np.testing.assert_allclose(b.point, 5.0)

    def test_pivotal(self):
        b = ss.band(self.ens, "pivotal", level=0.90)
        np.testing.assert_allclose(b.lower, 2 * 5.0 - self.q95)
        np.testing.assert_allclose(b.upper, 2 * 5.0 - self.q05)

    def test_normal(self):
        from scipy.stats import norm

        b = ss.band(self.ens, "normal", level=0.90)
        sd = np.arange(1.0, 11.0).std(ddof=1)
        z = norm.ppf(0.95)
        np.testing.assert_allclose(b.lower, 5.0 - z * sd)
        np.testing.assert_allclose(b.upper, 5.0 + z * sd)

    def test_bias_and_correction(self):
        bias = np.arange(1.0, 11.0).mean() - 5.0  # = 0.5
        np.testing.assert_allclose(ss.bootstrap_bias(self.ens), bias)
        # corrected percentile: both bounds shift by -2*bias
        plain = ss.band(self.ens, "percentile", level=0.90)
        corr = ss.band(self.ens, "percentile", level=0.90, bias_corrected=True)
        np.testing.assert_allclose(corr.lower, plain.lower - 2 * bias)
        np.testing.assert_allclose(corr.upper, plain.upper - 2 * bias)
        np.testing.assert_allclose(corr.point, 5.0 - bias)
        # the pivotal construction already folds the bias in: bounds unchanged
        piv = ss.band(self.ens, "pivotal", level=0.90)
        piv_c = ss.band(self.ens, "pivotal", level=0.90, bias_corrected=True)
        np.testing.assert_allclose(piv_c.lower, piv.lower)
        np.testing.assert_allclose(piv_c.upper, piv.upper)

    def test_unknown_method_and_tiny_ensemble(self):
        with pytest.raises(ValueError):
            ss.band(self.ens, "studentized", level=0.9)
        tiny = make_ensemble(self.curves[:1], np.full(4, 5.0))
        with pytest.raises(ValueError):
            ss.band(tiny, "percentile", level=0.9)

    def test_band_metadata_and_csv(self):
        b = ss.band(self.ens, "percentile", level=0.90)
        meta = json.loads(b.metadata_json())
        assert meta == {
            "method": "percentile",
            "bias_corrected": False,
            "smoothing": "none",
            "level": 0.9,
        }
        lines = b.to_csv().strip().split("\n")
        assert lines[0] == "time,point,lower,upper"
        assert len(lines) == 5

    def test_contains_closed_interval(self):
        b = ss.band(self.ens, "percentile", level=0.90)
        hits = b.contains([self.q05, 1.0, 5.0, self.q95])
        assert list(hits) == [True, False, True, True]

    def test_lower_above_upper_rejected(self):
        with pytest.raises(ValueError):
            ss.ConfidenceBand(
                np.arange(2.0), np.array([1.0, 1.0]), np.array([0.5, 2.0]),
                np.array([0.7, 1.5]), "percentile", False, "none", 0.9,
            )


class TestSmoothing:
    def test_weighted_preserves_constant_bounds(self):
        times = np.arange(10.0)
        b = ss.ConfidenceBand(
            times, np.full(10, 1.0), np.full(10, 3.0), np.full(10, 2.0),
            "percentile", False, "none", 0.9,
        )
        sm = ss.smooth_weighted(b)
        np.testing.assert_allclose(sm.lower, 1.0)
        np.testing.assert_allclose(sm.upper, 3.0)
        assert sm.smoothing == "weighted"

    def test_weighted_is_kernel_average(self):
        from scipy.stats import norm

        times = np.array([0.0, 1.0, 2.0])
        lo = np.array([0.0, 1.0, 0.0])
        b = ss.ConfidenceBand(times, lo, lo + 2.0, lo + 1.0,
                              "percentile", False, "none", 0.9)
        sm = ss.smooth_weighted(b)
        w = norm.pdf(times[:, None] - times[None, :])
        w = w / w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(sm.lower, w @ lo)

    def test_sample_smoothing_pools_neighbour_columns(self):
        # 2 replicates, 3 timestamps; interior timestamp pools all 6 values
        curves = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        ens = make_ensemble(curves, np.array([2.5, 3.5, 4.5]))
        sm = ss.smooth_sample(ens, "percentile", level=0.5)
        pooled_mid = curves.ravel()
        np.testing.assert_allclose(sm.lower[1], np.quantile(pooled_mid, 0.25))
        np.testing.assert_allclose(sm.upper[1], np.quantile(pooled_mid, 0.75))
        # boundary timestamp only pools its own and one neighbour column
        pooled_left = curves[:, :2].ravel()
        np.testing.assert_allclose(sm.lower[0], np.quantile(pooled_left, 0.25))
        assert sm.smoothing == "sample"

    def test_minmax_widening(self):
        times = np.arange(4.0)
        lo = np.array([1.0, 0.5, 2.0, 1.5])
        hi = np.array([3.0, 4.0, 3.5, 5.0])
        b = ss.ConfidenceBand(times, lo, hi, (lo + hi) / 2,
                              "percentile", False, "none", 0.9)
        sm = ss.smooth_minmax(b)
        np.testing.assert_allclose(sm.lower, [0.5, 0.5, 0.5, 1.5])
        np.testing.assert_allclose(sm.upper, [4.0, 4.0, 5.0, 5.0])
        assert sm.smoothing == "minmax"

    def test_minmax_never_narrows(self, ensemble):
        b = ss.band(ensemble, "percentile", level=0.95)
        sm = ss.smooth_minmax(b)
        assert np.all(sm.lower <= b.lower + 1e-12)
        assert np.all(sm.upper >= b.upper - 1e-12)


def test_fast_scalar_rate_matches_spline():
    from sirspline.bootstrap import _fast_scalar_rate

    rng = np.random.default_rng(19)
    for degree in (0, 1, 3):
        interior = tuple(np.sort(rng.uniform(1.0, 9.0, 4)))
        kv = ss.KnotVector(0.0, 10.0, interior, degree)
        spline = ss.SplineModel(kv, tuple(rng.uniform(0.0, 1.0, kv.num_basis)))
        fast = _fast_scalar_rate(spline)
        for t in np.concatenate([[0.0, 10.0], rng.uniform(0, 10, 50)]):
            assert fast(float(t)) == pytest.approx(spline.value(float(t)), abs=1e-12)


def test_percentile_band_covers_true_rate(ensemble):
    b = ss.band(ensemble, "percentile", level=0.95)
    frac = b.contains(np.full(b.times.size, 0.3)).mean()
    assert frac > 0.8

"""Nonparametric inference of time-varying SIR infection rates."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapEnsemble,
    ConfidenceBand,
    band,
    bootstrap_bias,
    run_bootstrap,
    smooth_minmax,
    smooth_sample,
    smooth_weighted,
)
from .estimator import FitResult, fit_mle, initial_theta
from .knots import (
    FeatureCurve,
    RateSeries,
    SelectionResult,
    feature_curve,
    finite_difference_ladder,
    forward_bic_select,
    moving_average_rates,
    place_knots,
)
from .likelihood import (
    LikelihoodConfig,
    ParameterVector,
    TransitionMoments,
    diffusion_loglik_1step,
    drift_and_diffusion,
    multistep_loglik,
    neg_loglik,
    tauleap_loglik_1step,
    transition_moments,
)
from .metrics import TruthFunction, coverage, imse, r0_curve, scenario
from .sir import (
    CountState,
    EpidemicPath,
    ProportionState,
    RatePair,
    sample_path_at,
    simulate_euler_maruyama,
    simulate_exact,
    simulate_tau_leap,
    simulate_tau_leap_batch,
)
from .splines import KnotVector, SplineModel, basis_matrix, basis_value

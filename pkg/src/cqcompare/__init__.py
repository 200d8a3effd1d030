"""Two-sample comparison of censored linear quantile regression curves."""
from .bootstrap import (
    BootstrapDraws,
    BootstrapError,
    BootstrapScheme,
    CovarianceEstimate,
    covariance_estimate,
    difference_draws,
    draw_multipliers,
    inv_sqrt_psd,
    naive_resample,
)
from .dgp import DgpConfig, calibrate_censoring, calibrated, generate, true_beta
from .estimator import (
    Estimator,
    PengHuang,
    cumulative_hazard,
    cumulative_weights,
    estimating_function,
    nelson_aalen_quantiles,
    ph_fit,
)
from .simulate import Scenario, ScenarioGrid, SimulationReport, diff_family, full_bootstrap_study, warp_speed_study
from .solver import L1Problem, solve_l1
from .teststats import TestConfig, TestResult, integrate_over_A, run_test, stat_bonf, stat_L2, stat_Linf
from .types import (
    BreakdownError,
    CoefficientProcess,
    DataError,
    IndependentData,
    Observation,
    PairedData,
    SampleData,
    TauGrid,
    make_grid,
    validate_sample,
)

__version__ = "0.1.0"

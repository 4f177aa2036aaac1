"""Weighted least-squares self-localization from noisy anchor positions and RSSI."""

from .crlb import crlb_rmse_bound, fim, hessian_analytic, log_likelihood, schur_complement
from .estimator import (
    AnchorReading,
    EstimatorConfig,
    Point,
    cost,
    error_weight,
    estimate_position,
    estimate_position_baseline,
    estimate_position_proposed,
    gradient,
)
from .exceptions import (
    DegenerateWeightError,
    DomainError,
    RssilocError,
    SaturationError,
    ScenarioError,
    SingularGeometryError,
    SingularityError,
)
from .files import dump_scenario, load_scenario
from .pathloss import PathLossParams, distance_estimate, invert_rssi_to_distance, mean_rssi_dbm, sigma_d
from .simulator import Scenario, run_monte_carlo, scenario_crlb, sweep
from .specfun import bessel_i0, bessel_i0e, bessel_i1, bessel_i1e, laguerre_half, rice_variance

__version__ = "0.1.0"

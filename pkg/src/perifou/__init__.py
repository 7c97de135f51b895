"""Fractional Ornstein-Uhlenbeck processes with periodic mean.

Exact fractional Gaussian noise sampling, Euler path simulation,
least-squares drift estimation with a Skorokhod-integral correction,
the associated asymptotic limit matrices, and seeded Monte Carlo
studies that check consistency and the slow central limit theorem
numerically.
"""

from perifou.errors import (
    ConfigError,
    DegenerateDesign,
    FactorizationFailure,
    GridMismatch,
    InvalidStep,
    LengthMismatch,
    MissingDriver,
    NonnegativeEmbeddingFailure,
    PartialPeriod,
    PerifouError,
)
from perifou.fgn import (
    FbmPath,
    FgnSpec,
    fbm_from_fgn,
    fgn_autocovariance,
    fgn_covariance,
    generate_fgn_cholesky,
    generate_fgn_circulant,
    generate_two_sided_driver,
    substream_seed,
)
from perifou.model import (
    BasisFunction,
    BasisSet,
    FouModel,
    SamplePath,
    coupling_gap,
    mean_function,
    path_from_increments,
    simulate_path,
    steady_mean,
    zero_start_mean,
)
from perifou.estimator import (
    DesignStats,
    EstimateResult,
    build_design,
    discrete_trace_correction,
    estimate,
    forward_stieltjes,
    normal_matrix,
    normal_matrix_inverse,
    skorokhod_correction,
)
from perifou.asymptotics import (
    LimitSummary,
    asymptotic_covariance,
    limit_summary,
    loadings_limit,
    noise_covariance_limit,
    normal_inverse_limit,
    precision_limit,
    singular_pair_integral,
    stationary_variance,
)
from perifou.experiments import (
    CouplingReport,
    ExperimentReport,
    McConfig,
    run_clt,
    run_consistency,
    run_coupling,
    wiener_variance_study,
)

__version__ = "0.1.0"

__all__ = [
    "BasisFunction",
    "BasisSet",
    "ConfigError",
    "CouplingReport",
    "DegenerateDesign",
    "DesignStats",
    "EstimateResult",
    "ExperimentReport",
    "FactorizationFailure",
    "FbmPath",
    "FgnSpec",
    "FouModel",
    "GridMismatch",
    "InvalidStep",
    "LengthMismatch",
    "LimitSummary",
    "McConfig",
    "MissingDriver",
    "NonnegativeEmbeddingFailure",
    "PartialPeriod",
    "PerifouError",
    "SamplePath",
    "asymptotic_covariance",
    "build_design",
    "coupling_gap",
    "discrete_trace_correction",
    "estimate",
    "fbm_from_fgn",
    "fgn_autocovariance",
    "fgn_covariance",
    "forward_stieltjes",
    "generate_fgn_cholesky",
    "generate_fgn_circulant",
    "generate_two_sided_driver",
    "limit_summary",
    "loadings_limit",
    "mean_function",
    "noise_covariance_limit",
    "normal_inverse_limit",
    "normal_matrix",
    "normal_matrix_inverse",
    "path_from_increments",
    "precision_limit",
    "run_clt",
    "run_consistency",
    "run_coupling",
    "simulate_path",
    "singular_pair_integral",
    "skorokhod_correction",
    "stationary_variance",
    "steady_mean",
    "substream_seed",
    "wiener_variance_study",
    "zero_start_mean",
]

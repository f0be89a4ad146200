"""Robust filtering for linear Gaussian state-space models.

The classical Kalman filter is the optimal linear estimator under the
ideal model, but a single gross observation error can drag the state
estimate arbitrarily far.  This package implements corrections that clip
the filter update (attenuation for observation-side errors, clipped
tracking residuals for state-side errors), calibrates the clipping
height from either an efficiency-loss budget or an assumed contamination
radius, and solves the underlying worst-case contamination problems
exactly, including the least-favorable radius when the contamination
share is only interval-known.

Everything downstream of a (config, seed) pair is deterministic; see
robustkf.rng for the stream derivation.
"""

__version__ = "0.1.0"

from .diagnostics import (
    DominationResult,
    LinTestResult,
    NormalityResult,
    eso_domination_probe,
    linearity_test,
    normality_probe,
)
from .engines import Engine
from .errors import NumericalError, ValidationError
from .experiment import ExperimentConfig, ExperimentReport, FilterSpec, run_experiment
from .kalman import (
    FilterState,
    covariance_path,
    kf_correct,
    kf_init,
    kf_predict,
    pinv_psd,
    run_filter,
)
from .minimax import (
    IdealPair,
    RadiusSolution,
    SaddlePoint,
    density_trace,
    io_saddle,
    lf_density_weight,
    lf_sample,
    lfr_A,
    lfr_B,
    minimax_risk_eso,
    risk_under_contamination,
    solve_least_favorable_radius,
    solve_rho,
)
from .models import (
    ContaminationSpec,
    ModelSpec,
    Trajectory,
    contaminate,
    simulate_ideal,
)
from .rls import (
    ClipCalibration,
    calibrate_b_delta,
    calibrate_b_io,
    calibrate_b_radius,
    filter_trajectory,
    huberize,
    rls_ao_step,
    rls_io_step,
)

__all__ = [
    "__version__",
    "ValidationError", "NumericalError",
    "ModelSpec", "ContaminationSpec", "Trajectory",
    "simulate_ideal", "contaminate",
    "FilterState", "kf_init", "kf_predict", "kf_correct",
    "run_filter", "covariance_path", "pinv_psd",
    "huberize", "ClipCalibration",
    "calibrate_b_radius", "calibrate_b_delta", "calibrate_b_io",
    "rls_ao_step", "rls_io_step", "filter_trajectory",
    "Engine",
    "IdealPair", "SaddlePoint", "RadiusSolution",
    "solve_rho", "lf_density_weight", "lf_sample",
    "risk_under_contamination", "minimax_risk_eso",
    "lfr_A", "lfr_B", "solve_least_favorable_radius",
    "io_saddle", "density_trace",
    "linearity_test", "normality_probe", "eso_domination_probe",
    "LinTestResult", "NormalityResult", "DominationResult",
    "ExperimentConfig", "ExperimentReport", "FilterSpec", "run_experiment",
]

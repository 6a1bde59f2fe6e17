"""Photonic-crystal optical parametric oscillator: simulation and analysis.

Integrates the coupled stochastic pump/signal field equations on a periodic
transverse grid, locates pattern-formation thresholds with and without a
periodic detuning modulation, and quantifies squeezing, EPR correlations and
inseparability of opposite far-field mode pairs.
"""

from .grid import Grid, build_grid
from .model import (
    ConfigError,
    ValidityError,
    DetuningProfile,
    ModelParams,
    FieldState,
    CheckedConfig,
    critical_wavenumber,
    default_grid,
    make_preset,
    validate_config,
    load_config,
    config_hash,
    vacuum_state,
    PRESET_NAMES,
)
from .dynamics import (
    IntegratorSettings,
    IntegrationError,
    NoiseIncrement,
    drift,
    synthesize_noise,
    step,
    integrate,
    Stepper,
    MaxPumpMonitor,
    TrajectoryDumper,
)
from .linear import (
    ThresholdError,
    NotHurwitzError,
    PumpSteadyState,
    BlochOperator,
    CovarianceSolution,
    pump_steady_state,
    assemble_bloch,
    growth_rate,
    growth_rate_homogeneous,
    max_growth_rate,
    find_threshold,
    stationary_covariance,
    intensity_spectrum,
)
from .quantum import (
    FarFieldModes,
    ModePairMoments,
    QuadratureSpec,
    InsufficientStatistics,
    CalibrationRecord,
    far_field,
    joint_quadrature_variance,
    quad_variance_equal_time,
    best_phi,
    optimal_lambda,
    epr_product,
    inseparability,
    angle_scan,
    calibrate_shot_noise,
    default_theta_grid,
    default_phi_grid,
)
from .ensemble import (
    CampaignSpec,
    CampaignResult,
    CampaignAborted,
    run_campaign,
    resolve_campaign,
    burn_in_check,
)
from .streams import derive_stream

__version__ = "0.1.0"

__all__ = [
    "Grid", "build_grid",
    "ConfigError", "ValidityError", "DetuningProfile", "ModelParams",
    "FieldState", "CheckedConfig", "critical_wavenumber", "default_grid",
    "make_preset", "validate_config", "load_config", "config_hash",
    "vacuum_state", "PRESET_NAMES",
    "IntegratorSettings", "IntegrationError", "NoiseIncrement", "drift",
    "synthesize_noise", "step", "integrate", "Stepper", "MaxPumpMonitor",
    "TrajectoryDumper",
    "ThresholdError", "NotHurwitzError", "PumpSteadyState", "BlochOperator",
    "CovarianceSolution", "pump_steady_state", "assemble_bloch", "growth_rate",
    "growth_rate_homogeneous", "max_growth_rate", "find_threshold",
    "stationary_covariance", "intensity_spectrum",
    "FarFieldModes", "ModePairMoments", "QuadratureSpec",
    "InsufficientStatistics", "CalibrationRecord", "far_field",
    "joint_quadrature_variance", "quad_variance_equal_time", "best_phi",
    "optimal_lambda", "epr_product", "inseparability", "angle_scan",
    "calibrate_shot_noise", "default_theta_grid", "default_phi_grid",
    "CampaignSpec", "CampaignResult", "CampaignAborted", "run_campaign",
    "resolve_campaign", "burn_in_check",
    "derive_stream",
]

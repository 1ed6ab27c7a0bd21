//! Statistics for comparing risk metrics: Cox coefficient calibration,
//! occupancy-change vs. relative-motion correlation and crash/safe
//! separation.

pub mod calibration;
pub mod correlation;
pub mod separation;

pub use calibration::{
    calibrate_beta_labeled, calibrate_beta_sim, calibrate_beta_sim_with, collision_cost,
    config_with_beta, default_beta_grid, risk_traces_over_beta, LabeledCalibration, LabeledRow,
    LabeledScenario, SimCalibration, SimRow,
};
pub use correlation::{
    correlate_delta_p, delta_p_series, fisher_z_mean, kendall_tau_b, pearson, spearman,
    Coefficients, CorrelationSummary, DeltaPSummary, PairSeries, ScenarioCorrelation,
};
pub use separation::{
    histogram, kl_divergence, kl_separation, laplace_density, KlDirection, SeparationReport,
    ThresholdSuggestion, DEFAULT_BINS,
};

//! Mean-square estimators, contraction constants and the Monte Carlo
//! experiments built on coupled ensembles.

mod constants;
mod estimators;
mod experiments;

pub use constants::{
    c_const, lemma25_check, m_sup, omega_threshold, zeta_const, GridSup, Lemma25Check,
    LEMMA25_SLACK, SUP_GRID_POINTS,
};
pub use estimators::{
    ln_weighted_norm, mean_and_se, ms_distance, ms_distance_series, ms_norm, weighted_norm,
    MsEstimate, WeightedNormParams,
};
pub use experiments::{
    continuity_experiment, contraction_report, separation_experiment, ContinuityReport,
    ContinuityRow, ContractionReport, SeparationOptions, SeparationReport,
};

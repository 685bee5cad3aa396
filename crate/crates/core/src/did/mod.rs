//! Difference-in-differences estimators with cluster-robust inference.

mod estimate;
mod inference;
mod propensity;
mod robust;
mod spec;

pub use estimate::{
    doubly_robust_did, estimate, event_study, fit_design, pooled_ols_did, retention_lpm, twfe_did,
    write_results_table, Diagnostics, EstimateResult, EventCoefficient,
};
pub use inference::{cluster_robust_se, p_value, stars, SandwichParts};
pub use propensity::{ipw_weight, propensity_weights, trim_mask, PropensityDiagnostics, PropensityFit};
pub use robust::{heterogeneity_split, placebo_suite, HeterogeneityDimension, PlaceboMode, PlaceboResult};
pub use spec::*;

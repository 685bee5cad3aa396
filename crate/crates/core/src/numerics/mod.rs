//! Dense numerical kernels shared by the estimators.

mod logit;
mod root;
mod simplex;
mod wls;

pub use logit::{log_likelihood, logistic, logit_fit, predict, score, LogitFit};
pub use root::bisect_root;
pub use simplex::{project_to_simplex, simplex_qp_solve, SimplexQpProblem, SimplexQpSolution};
pub use wls::{normal_equation_residual, wls_solve, WlsFit, WlsProblem};

/// Nearest-rank quantile of an already sorted, nonempty sample:
/// the value at 1-based rank `ceil(q * n)`, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let r = q * n as f64;
    // q * n is often an integer in exact arithmetic (0.9975 * 10_000); do not let
    // representation error push it to the next rank.
    let r = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.ceil() };
    let rank = (r as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

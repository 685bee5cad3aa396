use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{logit_fit, nearest_rank, predict, sorted_copy};
use crate::panel::{covariate_matrix, Observation, Panel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityDiagnostics {
    pub n_workers: usize,
    pub n_treated_workers: usize,
    pub covariates: Vec<String>,
    /// Expanded columns with no variation across workers.
    pub dropped_columns: Vec<String>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub min_score: f64,
    pub max_score: f64,
    pub trim_quantile: f64,
    pub trim_threshold: f64,
}

/// Worker-level propensity scores and weights, broadcast to panel rows.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub worker_ids: Vec<String>,
    pub treated: Vec<bool>,
    pub scores: Vec<f64>,
    pub worker_weights: Vec<f64>,
    /// Weight for each panel row, in panel order.
    pub row_weights: Vec<f64>,
    pub diagnostics: PropensityDiagnostics,
}

/// 1/p for treated units, 1/(1-p) for controls.
pub fn ipw_weight(treated: bool, p: f64) -> f64 {
    if treated {
        1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// Keep mask excluding weights strictly above the nearest-rank `q` quantile.
pub fn trim_mask(weights: &[f64], q: f64) -> (Vec<bool>, f64) {
    if weights.is_empty() {
        return (Vec::new(), f64::NAN);
    }
    let threshold = nearest_rank(&sorted_copy(weights), q);
    (weights.iter().map(|&w| w <= threshold).collect(), threshold)
}

/// Logit of treated-state membership on each worker's first observed
/// covariates (standardized), then inverse-propensity weights per row.
pub fn propensity_weights(panel: &Panel, covariates: &[String], trim_quantile: f64) -> Result<PropensityFit> {
    let obs = panel.observations();
    let mut firsts: Vec<&Observation> = Vec::new();
    let mut row_worker = Vec::with_capacity(obs.len());
    for (i, o) in obs.iter().enumerate() {
        if i == 0 || obs[i - 1].worker_id != o.worker_id {
            firsts.push(o);
        }
        row_worker.push(firsts.len() - 1);
    }
    let treated: Vec<bool> = firsts.iter().map(|o| o.state == panel.treated_state).collect();
    let n_treated = treated.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == firsts.len() {
        return Err(Error::Degenerate(
            "propensity model needs both treated and control workers".into(),
        ));
    }

    let (raw, names) = covariate_matrix(&firsts, covariates)?;
    let n = firsts.len();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = raw.column(j).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            dropped.push(name.clone());
        } else {
            kept.push(col.iter().map(|v| (v - mean) / sd).collect());
        }
    }
    let x = DMatrix::from_fn(n, kept.len() + 1, |r, c| if c == 0 { 1.0 } else { kept[c - 1][r] });
    let z: Vec<f64> = treated.iter().map(|&t| t as u8 as f64).collect();
    let fit = logit_fit(&x, &z, 1e-10, 200)?;
    let scores: Vec<f64> = predict(&x, &fit.coefficients).iter().copied().collect();
    let worker_weights: Vec<f64> = treated.iter().zip(&scores).map(|(&t, &p)| ipw_weight(t, p)).collect();
    let row_weights: Vec<f64> = row_worker.iter().map(|&w| worker_weights[w]).collect();
    let (_, threshold) = trim_mask(&row_weights, trim_quantile);

    Ok(PropensityFit {
        worker_ids: firsts.iter().map(|o| o.worker_id.clone()).collect(),
        diagnostics: PropensityDiagnostics {
            n_workers: n,
            n_treated_workers: n_treated,
            covariates: covariates.to_vec(),
            dropped_columns: dropped,
            iterations: fit.iterations,
            converged: fit.converged,
            log_likelihood: fit.log_likelihood,
            min_score: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max_score: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trim_quantile,
            trim_threshold: threshold,
        },
        treated,
        scores,
        worker_weights,
        row_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weight_arithmetic() {
        assert!((ipw_weight(true, 0.8) - 1.25).abs() < 1e-15);
        assert!((ipw_weight(false, 0.8) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trim_drops_only_above_threshold() {
        let w: Vec<f64> = (1..=400).map(f64::from).collect();
        let (keep, thr) = trim_mask(&w, 0.9975);
        assert_eq!(thr, 399.0);
        assert_eq!(keep.iter().filter(|&&k| !k).count(), 1);
    }

    proptest! {
        #[test]
        fn raising_quantile_never_trims_more(
            w in proptest::collection::vec(1.0f64..50.0, 1..300),
            q1 in 0.51f64..0.99,
            dq in 0.0f64..0.009,
        ) {
            let q2 = q1 + dq;
            let count = |q| trim_mask(&w, q).0.iter().filter(|&&k| !k).count();
            prop_assert!(count(q2) <= count(q1));
        }
    }
}

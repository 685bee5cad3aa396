use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::aggregate::AggregatePanel;
use super::scm::QP_TOL;
use crate::error::{Error, Result};
use crate::numerics::{simplex_qp_solve, SimplexQpProblem};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdidSolution {
    pub unit_weights: BTreeMap<String, f64>,
    /// Weights over pre-treatment years.
    pub time_weights: BTreeMap<i32, f64>,
    pub effect: f64,
    pub ridge: f64,
    pub method: String,
}

impl SdidSolution {
    pub fn unit_weight(&self, donor: &str) -> f64 {
        self.unit_weights.get(donor).copied().unwrap_or(0.0)
    }
}

/// Simplex least squares with a free intercept (handled by centering the
/// rows of `a` and `b`) and a ridge penalty on the weights.
fn intercept_simplex(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let (m, k) = a.shape();
    let mut ac = a.clone();
    for mut col in ac.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let bc = b.add_scalar(-b.mean());
    let root = ridge.max(0.0).sqrt();
    let aug = DMatrix::from_fn(m + k, k, |r, c| {
        if r < m {
            ac[(r, c)]
        } else if r - m == c {
            root
        } else {
            0.0
        }
    });
    let target = DVector::from_fn(m + k, |r, _| if r < m { bc[r] } else { 0.0 });
    Ok(simplex_qp_solve(&SimplexQpProblem::new(target, aug)?, QP_TOL)?.weights)
}

/// Weighted double difference for given donor and pre-period weights.
pub fn sdid_estimate(agg: &AggregatePanel, unit_weights: &DVector<f64>, time_weights: &DVector<f64>) -> Result<f64> {
    let n_pre = agg.n_pre();
    let donors = agg.donor_indices();
    if unit_weights.len() != donors.len() || time_weights.len() != n_pre {
        return Err(Error::domain("weight vectors do not match donors and pre-period years"));
    }
    let n_post = agg.years.len() - n_pre;
    let contrast = |unit: usize| {
        let row = agg.outcomes.row(unit);
        let post = row.columns(n_pre, n_post).sum() / n_post as f64;
        let pre: f64 = (0..n_pre).map(|t| time_weights[t] * row[t]).sum();
        post - pre
    };
    let synthetic: f64 = donors.iter().zip(unit_weights.iter()).map(|(&d, w)| w * contrast(d)).sum();
    Ok(contrast(agg.treated_index()) - synthetic)
}

/// Synthetic difference-in-differences: intercept-augmented simplex unit
/// weights fitted to the treated pre-period path (slopes, not levels), time
/// weights fitted from pre-period years to each donor's post-period mean, and
/// the weighted double difference.
pub fn sdid_fit(agg: &AggregatePanel, ridge: f64) -> Result<SdidSolution> {
    let n_pre = agg.n_pre();
    if n_pre < 2 {
        return Err(Error::domain("synthetic DiD needs at least 2 pre-treatment years"));
    }
    if n_pre == agg.years.len() {
        return Err(Error::domain("synthetic DiD needs at least one post-treatment year"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::domain("ridge must be a nonnegative number"));
    }
    let donors = agg.donor_indices();
    let treated = agg.treated_index();
    let n_post = agg.years.len() - n_pre;

    let pre_donors = DMatrix::from_fn(n_pre, donors.len(), |t, j| agg.outcomes[(donors[j], t)]);
    let pre_treated = DVector::from_fn(n_pre, |t, _| agg.outcomes[(treated, t)]);
    let omega = intercept_simplex(&pre_donors, &pre_treated, ridge)?;

    let donor_pre = DMatrix::from_fn(donors.len(), n_pre, |j, t| agg.outcomes[(donors[j], t)]);
    let donor_post = DVector::from_fn(donors.len(), |j, _| {
        agg.outcomes.row(donors[j]).columns(n_pre, n_post).sum() / n_post as f64
    });
    let lambda = intercept_simplex(&donor_pre, &donor_post, ridge)?;

    let effect = sdid_estimate(agg, &omega, &lambda)?;
    Ok(SdidSolution {
        unit_weights: donors.iter().map(|&d| agg.units[d].clone()).zip(omega.iter().copied()).collect(),
        time_weights: agg.years[..n_pre].iter().copied().zip(lambda.iter().copied()).collect(),
        effect,
        ridge,
        method: "intercept-augmented simplex weights with ridge penalty on unit and time weights".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scm_fit;

    fn agg(rows: &[(&str, Vec<f64>)], treatment_year: i32) -> AggregatePanel {
        let years: Vec<i32> = (0..rows[0].1.len() as i32).map(|t| 2010 + t).collect();
        let m = DMatrix::from_fn(rows.len(), years.len(), |i, t| rows[i].1[t]);
        AggregatePanel::new(rows.iter().map(|r| r.0.to_string()).collect(), years, m, "RR", treatment_year)
            .unwrap()
    }

    fn offset_case() -> AggregatePanel {
        agg(
            &[
                ("AC", vec![2.0, 2.3, 2.1, 2.6, 2.4, 2.7]),
                ("AP", vec![1.0, 0.9, 1.4, 1.1, 1.3, 1.2]),
                ("RR", vec![1.5, 1.8, 1.6, 2.1 + 0.2, 1.9 + 0.2, 2.2 + 0.2]),
            ],
            2013,
        )
    }

    #[test]
    fn parallel_offset_donor_gets_full_weight() {
        let a = offset_case();
        let s = sdid_fit(&a, DEFAULT_RIDGE).unwrap();
        assert!(s.unit_weight("AC") > 1.0 - 1e-4, "{:?}", s.unit_weights);
        assert!((s.effect - 0.2).abs() < 1e-4);
        let scm = scm_fit(&a).unwrap();
        assert!(scm.mspe > 1e-3);
    }

    #[test]
    fn uniform_weights_give_two_by_two() {
        let a = offset_case();
        let e = sdid_estimate(&a, &DVector::from_element(2, 0.5), &DVector::from_element(3, 1.0 / 3.0)).unwrap();
        let mean = |r: usize, range: std::ops::Range<usize>| {
            let n = range.len() as f64;
            range.map(|t| a.outcomes[(r, t)]).sum::<f64>() / n
        };
        let did = (mean(2, 3..6) - mean(2, 0..3)) - 0.5 * ((mean(0, 3..6) - mean(0, 0..3)) + (mean(1, 3..6) - mean(1, 0..3)));
        assert!((e - did).abs() < 1e-14);
    }

    #[test]
    fn shift_invariance() {
        let a = agg(
            &[
                ("AC", vec![2.0, 2.3, 2.1, 2.6, 2.4, 2.7]),
                ("AP", vec![1.0, 0.9, 1.4, 1.1, 1.3, 1.2]),
                ("PA", vec![1.7, 1.5, 1.9, 1.4, 1.6, 1.8]),
                ("RR", vec![1.3, 1.5, 1.6, 1.9, 2.0, 2.3]),
            ],
            2013,
        );
        let base = sdid_fit(&a, DEFAULT_RIDGE).unwrap().effect;
        let moved = sdid_fit(&a.shifted(1, 5.0), DEFAULT_RIDGE).unwrap().effect;
        assert!((base - moved).abs() < 1e-8);
        let scm_base = scm_fit(&a).unwrap().effect;
        let scm_moved = scm_fit(&a.shifted(1, 5.0)).unwrap().effect;
        assert!((scm_base - scm_moved).abs() > 1e-6);
    }

    #[test]
    fn noiseless_null_is_zero() {
        let a = agg(
            &[
                ("AC", vec![2.0, 2.1, 2.2, 2.3, 2.4]),
                ("AP", vec![1.0, 1.1, 1.2, 1.3, 1.4]),
                ("RR", vec![1.4, 1.5, 1.6, 1.7, 1.8]),
            ],
            2013,
        );
        assert!(sdid_fit(&a, DEFAULT_RIDGE).unwrap().effect.abs() < 1e-10);
    }

    #[test]
    fn needs_two_pre_years() {
        let a = offset_case();
        let b = AggregatePanel { treatment_year: 2011, ..a };
        assert!(sdid_fit(&b, DEFAULT_RIDGE).is_err());
    }
}

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::aggregate::{period_means, AggregatePanel};
use crate::error::{Error, Result};
use crate::numerics::{simplex_qp_solve, SimplexQpProblem};

pub(crate) const QP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScmSolution {
    pub weights: BTreeMap<String, f64>,
    /// Donor names in the order of the aggregate panel.
    pub donors: Vec<String>,
    pub mspe: f64,
    pub effect: f64,
    /// (year, treated, synthetic)
    pub path: Vec<(i32, f64, f64)>,
    pub iterations: usize,
}

impl ScmSolution {
    pub fn weight(&self, donor: &str) -> f64 {
        self.weights.get(donor).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScmPlacebo {
    /// Effect with each unit treated as the treated one.
    pub effects: BTreeMap<String, f64>,
    pub treated_effect: f64,
    /// Position of the treated unit by absolute effect, 1 = largest.
    pub treated_rank: usize,
    pub n_units: usize,
}

/// Donor weights on the simplex matching the pre-period outcome path, and the
/// difference between treated and synthetic pre/post changes.
pub fn scm_fit(agg: &AggregatePanel) -> Result<ScmSolution> {
    let n_pre = agg.n_pre();
    if n_pre == 0 {
        return Err(Error::domain("synthetic control needs at least one pre-treatment year"));
    }
    if n_pre == agg.years.len() {
        return Err(Error::domain("synthetic control needs at least one post-treatment year"));
    }
    let donors = agg.donor_indices();
    let treated = agg.row(agg.treated_index());
    let x0 = DMatrix::from_fn(n_pre, donors.len(), |t, j| agg.outcomes[(donors[j], t)]);
    let problem = SimplexQpProblem::new(treated.rows(0, n_pre).into_owned(), x0)?;
    let sol = simplex_qp_solve(&problem, QP_TOL)?;

    let y0 = DMatrix::from_fn(agg.years.len(), donors.len(), |t, j| agg.outcomes[(donors[j], t)]);
    let synthetic: DVector<f64> = &y0 * &sol.weights;
    let mspe = (0..n_pre).map(|t| (treated[t] - synthetic[t]).powi(2)).sum::<f64>() / n_pre as f64;
    let (tr_pre, tr_post) = period_means(&treated, n_pre);
    let (sy_pre, sy_post) = period_means(&synthetic, n_pre);

    let names: Vec<String> = donors.iter().map(|&j| agg.units[j].clone()).collect();
    Ok(ScmSolution {
        weights: names.iter().cloned().zip(sol.weights.iter().copied()).collect(),
        donors: names,
        mspe,
        effect: (tr_post - tr_pre) - (sy_post - sy_pre),
        path: agg
            .years
            .iter()
            .enumerate()
            .map(|(t, &y)| (y, treated[t], synthetic[t]))
            .collect(),
        iterations: sol.iterations,
    })
}

/// Re-runs the fit with each donor as the pseudo-treated unit (the real
/// treated unit leaves the donor pool), so at least three donors are needed.
pub fn scm_placebo(agg: &AggregatePanel) -> Result<ScmPlacebo> {
    let donors = agg.donor_indices();
    if donors.len() < 3 {
        return Err(Error::InsufficientGroups(format!(
            "SCM placebos need at least 3 donors, found {}",
            donors.len()
        )));
    }
    let treated_idx = agg.treated_index();
    let treated_effect = scm_fit(agg)?.effect;
    let placebo: Vec<(String, f64)> = donors
        .par_iter()
        .map(|&d| {
            let sub = agg.reassign(d, &[treated_idx])?;
            Ok((agg.units[d].clone(), scm_fit(&sub)?.effect))
        })
        .collect::<Result<_>>()?;
    let mut effects: BTreeMap<String, f64> = placebo.into_iter().collect();
    let treated_rank = 1 + effects.values().filter(|e| e.abs() > treated_effect.abs()).count();
    effects.insert(agg.treated_unit.clone(), treated_effect);
    Ok(ScmPlacebo {
        n_units: effects.len(),
        effects,
        treated_effect,
        treated_rank,
    })
}

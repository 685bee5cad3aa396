use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::inference::{cluster_robust_se, stars};
use super::propensity::{propensity_weights, trim_mask, PropensityDiagnostics};
use super::spec::{EstimationSpec, Family, FixedEffects, Outcome, Weighting};
use crate::error::{Error, Result};
use crate::numerics::{wls_solve, WlsProblem};
use crate::panel::{build_design, fe_rank, two_way_demean, DesignMatrix, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCoefficient {
    pub year: i32,
    pub coef: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub demean_iterations: usize,
    /// Fixed effects were swept out with the regression weights.
    pub weighted_demeaning: bool,
    pub absorbed_rank: usize,
    pub singleton_clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none", skip_deserializing)]
    pub propensity: Option<PropensityDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub family: Family,
    pub fixed_effects: FixedEffects,
    /// Regressor names in design order.
    pub terms: Vec<String>,
    pub coef: BTreeMap<String, f64>,
    pub se: BTreeMap<String, f64>,
    pub n: usize,
    pub n_clusters: usize,
    pub r2_adj: f64,
    pub rmse: f64,
    pub trimmed: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub event_years: Option<Vec<EventCoefficient>>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    /// Coefficient on the leading treatment term.
    pub fn beta(&self) -> f64 {
        self.coef[&self.terms[0]]
    }

    pub fn beta_se(&self) -> f64 {
        self.se[&self.terms[0]]
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coef.get(name).copied()
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.se.get(name).copied()
    }

    pub fn event_coefficient(&self, year: i32) -> Option<&EventCoefficient> {
        self.event_years.as_ref()?.iter().find(|e| e.year == year)
    }
}

fn check_groups(panel: &Panel) -> Result<()> {
    let treated = panel.observations().iter().filter(|o| o.state == panel.treated_state).count();
    if treated == 0 {
        return Err(Error::Degenerate(format!("no rows in treated state {}", panel.treated_state)));
    }
    if treated == panel.len() {
        return Err(Error::Degenerate("every row is in the treated state".into()));
    }
    Ok(())
}

/// Demeaned weighted least squares with cluster-robust inference on a built design.
pub fn fit_design(design: &DesignMatrix, spec: &EstimationSpec) -> Result<EstimateResult> {
    let (dm, report) = two_way_demean(design, spec.demean_tol, spec.demean_max_iter)?;
    let problem = WlsProblem::new(dm.regressors.clone(), dm.outcome.clone(), dm.weights.clone())?;
    let fit = wls_solve(&problem).map_err(|e| match e {
        Error::Collinear { column } => Error::Degenerate(format!(
            "regressor {} has no variation beyond the fixed effects",
            design.names[column]
        )),
        other => other,
    })?;
    let absorbed = fe_rank(design);
    let parts = cluster_robust_se(&dm.regressors, &fit.residuals, &dm.weights, &dm.clusters, absorbed)?;

    let w = &dm.weights;
    let sw: f64 = w.sum();
    let ybar = w.dot(&dm.outcome) / sw;
    let ssr: f64 = fit.residuals.iter().zip(w.iter()).map(|(e, w)| w * e * e).sum();
    let sst: f64 = dm.outcome.iter().zip(w.iter()).map(|(y, w)| w * (y - ybar).powi(2)).sum();
    let n = parts.n_obs as f64;
    let k_total = (design.regressors.ncols() + absorbed) as f64;
    // Weights normalized to mean one over the estimation rows.
    let ssr_n = ssr * n / sw;
    let sst_n = sst * n / sw;
    let (r2_adj, rmse) = if n > k_total {
        let r2 = if sst_n > 0.0 {
            1.0 - (ssr_n / (n - k_total)) / (sst_n / (n - 1.0))
        } else {
            f64::NAN
        };
        (r2, (ssr_n / (n - k_total)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut warnings = Vec::new();
    if parts.singleton_clusters > 0 {
        warnings.push(format!("{} clusters have a single observation", parts.singleton_clusters));
    }
    let terms = design.names.clone();
    let coef = terms.iter().cloned().zip(fit.coefficients.iter().copied()).collect();
    let se = terms.iter().cloned().zip(parts.se.iter().copied()).collect();
    let event_years = (spec.family == Family::EventStudy).then(|| {
        terms
            .iter()
            .enumerate()
            .filter_map(|(j, t)| {
                let year = t.strip_prefix("treat_")?.parse().ok()?;
                Some(EventCoefficient {
                    year,
                    coef: fit.coefficients[j],
                    se: parts.se[j],
                })
            })
            .collect()
    });

    Ok(EstimateResult {
        family: spec.family,
        fixed_effects: spec.fixed_effects,
        terms,
        coef,
        se,
        n: parts.n_obs,
        n_clusters: parts.n_clusters,
        r2_adj,
        rmse,
        trimmed: 0,
        event_years,
        diagnostics: Diagnostics {
            demean_iterations: report.iterations,
            weighted_demeaning: design.weights.iter().any(|&w| w != 1.0),
            absorbed_rank: absorbed,
            singleton_clusters: parts.singleton_clusters,
            propensity: None,
            warnings,
        },
    })
}

/// Builds the design, applies inverse-propensity weights and trimming when the
/// spec asks for them, and fits.
pub fn estimate(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    spec.validate()?;
    check_groups(panel)?;
    let mut design = build_design(panel, spec)?;
    let mut trimmed = 0;
    let mut propensity = None;
    if spec.weighting == Weighting::InversePropensity {
        let fit = propensity_weights(panel, &spec.propensity_covariates, spec.trim_quantile)?;
        let (keep, _) = trim_mask(&fit.row_weights, spec.trim_quantile);
        trimmed = keep.iter().filter(|&&k| !k).count();
        design.weights = DVector::from_vec(fit.row_weights.clone());
        design = design.subset(&keep);
        let obs = panel.observations();
        let treated_rows = design.rows.iter().filter(|&&r| obs[r].state == panel.treated_state).count();
        if treated_rows == 0 || treated_rows == design.nrows() {
            return Err(Error::EmptyGroup("a comparison group is empty after trimming".into()));
        }
        propensity = Some(fit.diagnostics);
    }
    let mut result = fit_design(&design, spec)?;
    result.trimmed = trimmed;
    result.diagnostics.propensity = propensity;
    Ok(result)
}

pub fn twfe_did(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    estimate(
        panel,
        &EstimationSpec {
            family: Family::Twfe,
            weighting: Weighting::Uniform,
            ..spec.clone()
        },
    )
}

pub fn doubly_robust_did(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    estimate(
        panel,
        &EstimationSpec {
            family: Family::DoublyRobust,
            weighting: Weighting::InversePropensity,
            ..spec.clone()
        },
    )
}

/// Year-by-year treatment indicators around the reference year; composes
/// with inverse-propensity weighting when the spec requests it.
pub fn event_study(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    estimate(
        panel,
        &EstimationSpec {
            family: Family::EventStudy,
            ..spec.clone()
        },
    )
}

pub fn retention_lpm(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    let spec = EstimationSpec {
        family: Family::LinearProbability,
        outcome: Outcome::Retained,
        weighting: Weighting::Uniform,
        ..spec.clone()
    };
    let mut iter = panel.observations().iter().map(|o| o.retained);
    if let Some(first) = iter.next() {
        if iter.all(|r| r == first) {
            return Err(Error::ZeroVariance(format!("retained is constant ({first})")));
        }
    }
    estimate(panel, &spec)
}

pub fn pooled_ols_did(panel: &Panel, spec: &EstimationSpec) -> Result<EstimateResult> {
    estimate(
        panel,
        &EstimationSpec {
            family: Family::PooledOls,
            fixed_effects: FixedEffects::StateYear,
            weighting: Weighting::Uniform,
            ..spec.clone()
        },
    )
}

/// Writes a regression table: one column per result, a coefficient row with
/// significance markers and a parenthesized standard-error row per term,
/// then fit statistics.
pub fn write_results_table<W: Write>(writer: W, columns: &[(String, EstimateResult)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["term".to_string()];
    header.extend(columns.iter().map(|(l, _)| l.clone()));
    out.write_record(&header)?;

    let mut terms: Vec<&String> = Vec::new();
    for (_, r) in columns {
        for t in &r.terms {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
    }
    for term in terms {
        let mut coef_row = vec![term.clone()];
        let mut se_row = vec![String::new()];
        for (_, r) in columns {
            match (r.coefficient(term), r.std_error(term)) {
                (Some(c), Some(s)) => {
                    coef_row.push(format!("{c:.4}{}", stars(c, s)));
                    se_row.push(format!("({s:.4})"));
                }
                _ => {
                    coef_row.push(String::new());
                    se_row.push(String::new());
                }
            }
        }
        out.write_record(&coef_row)?;
        out.write_record(&se_row)?;
    }
    let stat = |label: &str, f: &dyn Fn(&EstimateResult) -> String| {
        let mut row = vec![label.to_string()];
        row.extend(columns.iter().map(|(_, r)| f(r)));
        row
    };
    let check = |b: bool| if b { "Yes".to_string() } else { String::new() };
    out.write_record(stat("Worker FE", &|r| check(r.fixed_effects == FixedEffects::WorkerYear)))?;
    out.write_record(stat("State FE", &|r| check(r.fixed_effects == FixedEffects::StateYear)))?;
    out.write_record(stat("Year FE", &|_| check(true)))?;
    out.write_record(stat("R2 Adj.", &|r| format!("{:.4}", r.r2_adj)))?;
    out.write_record(stat("RMSE", &|r| format!("{:.4}", r.rmse)))?;
    out.write_record(stat("N", &|r| r.n.to_string()))?;
    out.write_record(stat("N Clusters", &|r| r.n_clusters.to_string()))?;
    out.write_record(stat("Trimmed", &|r| r.trimmed.to_string()))?;
    out.flush()?;
    Ok(())
}

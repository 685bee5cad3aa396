use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{Education, Observation, Panel};
use crate::did::{ClusterBy, EstimationSpec, ExposureFlag, Family, FixedEffects, Outcome, Treatment};
use crate::error::{Error, Result};

/// One fixed-effect dimension: a dense level code per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeGroup {
    pub name: String,
    pub codes: Vec<usize>,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub outcome: DVector<f64>,
    pub regressors: DMatrix<f64>,
    pub names: Vec<String>,
    pub weights: DVector<f64>,
    pub clusters: Vec<usize>,
    pub cluster_names: Vec<String>,
    pub fixed_effects: Vec<FeGroup>,
    /// Index of each row in the source panel.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemeanReport {
    /// Largest number of alternating-projection sweeps over all columns.
    pub iterations: usize,
}

/// Dense codes in sorted-label order.
pub(crate) fn encode<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, Vec<T>) {
    let mut levels: BTreeMap<T, usize> = BTreeMap::new();
    for l in labels {
        levels.entry(l.clone()).or_insert(0);
    }
    for (i, v) in levels.values_mut().enumerate() {
        *v = i;
    }
    let codes = labels.iter().map(|l| levels[l]).collect();
    (codes, levels.into_keys().collect())
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.outcome.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows where `keep` is true; level codes are retained.
    pub fn subset(&self, keep: &[bool]) -> DesignMatrix {
        let idx: Vec<usize> = (0..self.nrows()).filter(|&i| keep[i]).collect();
        let k = self.regressors.ncols();
        DesignMatrix {
            outcome: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.outcome[i])),
            regressors: DMatrix::from_fn(idx.len(), k, |r, c| self.regressors[(idx[r], c)]),
            names: self.names.clone(),
            weights: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.weights[i])),
            clusters: idx.iter().map(|&i| self.clusters[i]).collect(),
            cluster_names: self.cluster_names.clone(),
            fixed_effects: self
                .fixed_effects
                .iter()
                .map(|g| FeGroup {
                    name: g.name.clone(),
                    codes: idx.iter().map(|&i| g.codes[i]).collect(),
                    levels: g.levels,
                })
                .collect(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    /// Distinct clusters among rows with positive weight.
    pub fn n_clusters(&self) -> usize {
        let mut seen = vec![false; self.cluster_names.len()];
        for (i, &c) in self.clusters.iter().enumerate() {
            if self.weights[i] > 0.0 {
                seen[c] = true;
            }
        }
        seen.iter().filter(|&&s| s).count()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Rank of the fixed-effect dummy block over positive-weight rows: levels
/// minus connected components for two dimensions, levels for one.
pub fn fe_rank(design: &DesignMatrix) -> usize {
    let active: Vec<usize> = (0..design.nrows()).filter(|&i| design.weights[i] > 0.0).collect();
    let fes = &design.fixed_effects;
    let used = |g: &FeGroup| {
        let mut seen = vec![false; g.levels];
        for &i in &active {
            seen[g.codes[i]] = true;
        }
        seen
    };
    match fes.len() {
        0 => 0,
        1 => used(&fes[0]).iter().filter(|&&s| s).count(),
        _ => {
            // Union-find over the levels of the first two dimensions.
            let (a, b) = (&fes[0], &fes[1]);
            let mut parent: Vec<usize> = (0..a.levels + b.levels).collect();
            for &i in &active {
                let x = find(&mut parent, a.codes[i]);
                let y = find(&mut parent, a.levels + b.codes[i]);
                if x != y {
                    parent[x] = y;
                }
            }
            let ua = used(a);
            let ub = used(b);
            let nodes: Vec<usize> = (0..a.levels)
                .filter(|&l| ua[l])
                .chain((0..b.levels).filter(|&l| ub[l]).map(|l| a.levels + l))
                .collect();
            let mut roots: Vec<usize> = nodes.iter().map(|&n| find(&mut parent, n)).collect();
            roots.sort_unstable();
            roots.dedup();
            let mut rank = nodes.len() - roots.len();
            // Further dimensions are assumed connected to the first two.
            for g in &fes[2..] {
                rank += used(g).iter().filter(|&&s| s).count().saturating_sub(1);
            }
            rank
        }
    }
}

fn covariate_value_columns(rows: &[&Observation], names: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for name in names {
        match name.as_str() {
            "female" => out.push((name.clone(), rows.iter().map(|o| o.female as u8 as f64).collect())),
            "age" => out.push((name.clone(), rows.iter().map(|o| o.age).collect())),
            "age_sq" => out.push((name.clone(), rows.iter().map(|o| o.age_sq()).collect())),
            "tenure" => out.push((name.clone(), rows.iter().map(|o| o.tenure).collect())),
            "tenure_sq" => out.push((name.clone(), rows.iter().map(|o| o.tenure_sq()).collect())),
            "race" => {
                let labels: Vec<String> = rows.iter().map(|o| o.race.clone()).collect();
                let (codes, levels) = encode(&labels);
                for (lvl, label) in levels.iter().enumerate().skip(1) {
                    out.push((
                        format!("race_{label}"),
                        codes.iter().map(|&c| (c == lvl) as u8 as f64).collect(),
                    ));
                }
            }
            "education" => {
                let labels: Vec<Education> = rows.iter().map(|o| o.education).collect();
                let (codes, levels) = encode(&labels);
                for (lvl, label) in levels.iter().enumerate().skip(1) {
                    out.push((
                        format!("education_{label}"),
                        codes.iter().map(|&c| (c == lvl) as u8 as f64).collect(),
                    ));
                }
            }
            other => return Err(Error::UnknownColumn(other.to_string())),
        }
    }
    Ok(out)
}

/// Covariate matrix (dummies expanded) for the given rows.
pub fn covariate_matrix(rows: &[&Observation], names: &[String]) -> Result<(DMatrix<f64>, Vec<String>)> {
    let cols = covariate_value_columns(rows, names)?;
    let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| cols[c].1[r]);
    Ok((m, cols.into_iter().map(|(n, _)| n).collect()))
}

fn exposure(o: &Observation, flag: ExposureFlag) -> f64 {
    match flag {
        ExposureFlag::Activity => o.exposed_activity as u8 as f64,
        ExposureFlag::Occupation => o.exposed_occupation as u8 as f64,
    }
}

fn flag_name(flag: ExposureFlag) -> &'static str {
    match flag {
        ExposureFlag::Activity => "exposed_activity",
        ExposureFlag::Occupation => "exposed_occupation",
    }
}

pub fn build_design(panel: &Panel, spec: &EstimationSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let obs = panel.observations();
    if obs.is_empty() {
        return Err(Error::EmptyGroup("panel has no observations".into()));
    }
    let n = obs.len();

    let outcome: Vec<f64> = match spec.outcome {
        Outcome::LogWage => {
            if let Some(o) = obs.iter().find(|o| o.monthly_wage <= 0.0) {
                return Err(Error::domain(format!(
                    "nonpositive wage for worker {} in {}; apply sample rules first",
                    o.worker_id, o.year
                )));
            }
            obs.iter().map(Observation::log_wage).collect()
        }
        Outcome::Retained => obs.iter().map(|o| o.retained as u8 as f64).collect(),
        Outcome::Mover => panel.mover_flags(),
    };

    let binary: Vec<f64> = obs.iter().map(|o| panel.is_treated_row(o) as u8 as f64).collect();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();

    if spec.family == Family::EventStudy {
        let years = panel.years();
        if !years.contains(&spec.reference_year) {
            return Err(Error::domain(format!(
                "reference year {} not in panel years {:?}",
                spec.reference_year, years
            )));
        }
        for &y in &years {
            if y == spec.reference_year || (spec.pool_pre_period && y < panel.treatment_year) {
                continue;
            }
            columns.push((
                format!("treat_{y}"),
                obs.iter()
                    .map(|o| (o.state == panel.treated_state && o.year == y) as u8 as f64)
                    .collect(),
            ));
        }
    } else {
        let treat = match spec.treatment {
            Treatment::Binary => ("treat".to_string(), binary.clone()),
            Treatment::Continuous => (
                "treat_ratio_x100".to_string(),
                obs.iter()
                    .map(|o| 100.0 * panel.vz_ratio(&o.municipality, o.year))
                    .collect(),
            ),
        };
        if let Some(flag) = spec.interaction {
            let f: Vec<f64> = obs.iter().map(|o| exposure(o, flag)).collect();
            let inter: Vec<f64> = treat.1.iter().zip(&f).map(|(t, e)| t * e).collect();
            let inter_name = format!("{}_x_{}", treat.0, flag_name(flag));
            columns.push(treat);
            columns.push((inter_name, inter));
            if spec.fixed_effects == FixedEffects::StateYear {
                columns.push((flag_name(flag).to_string(), f));
            }
        } else {
            columns.push(treat);
        }
    }

    if spec.family == Family::PooledOls {
        let refs: Vec<&Observation> = obs.iter().collect();
        columns.extend(covariate_value_columns(&refs, &spec.covariates)?);
    }

    let regressors = DMatrix::from_fn(n, columns.len(), |r, c| columns[c].1[r]);
    let names = columns.into_iter().map(|(name, _)| name).collect();

    let year_labels: Vec<i32> = obs.iter().map(|o| o.year).collect();
    let (year_codes, years) = encode(&year_labels);
    let first = match spec.fixed_effects {
        FixedEffects::WorkerYear => {
            let labels: Vec<&str> = obs.iter().map(|o| o.worker_id.as_str()).collect();
            let (codes, levels) = encode(&labels);
            FeGroup {
                name: "worker".into(),
                codes,
                levels: levels.len(),
            }
        }
        FixedEffects::StateYear => {
            let labels: Vec<&str> = obs.iter().map(|o| o.state.as_str()).collect();
            let (codes, levels) = encode(&labels);
            FeGroup {
                name: "state".into(),
                codes,
                levels: levels.len(),
            }
        }
    };
    let fixed_effects = vec![
        first,
        FeGroup {
            name: "year".into(),
            codes: year_codes,
            levels: years.len(),
        },
    ];

    let cluster_labels: Vec<String> = match spec.cluster {
        ClusterBy::Municipality => obs.iter().map(Observation::municipality_key).collect(),
        ClusterBy::State => obs.iter().map(|o| o.state.clone()).collect(),
    };
    let (clusters, cluster_names) = encode(&cluster_labels);

    Ok(DesignMatrix {
        outcome: DVector::from_vec(outcome),
        regressors,
        names,
        weights: DVector::from_element(n, 1.0),
        clusters,
        cluster_names,
        fixed_effects,
        rows: (0..n).collect(),
    })
}

struct LevelWeights {
    totals: Vec<Vec<f64>>,
}

fn demean_column(
    col: &mut [f64],
    fes: &[FeGroup],
    weights: &[f64],
    lw: &LevelWeights,
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    if fes.is_empty() {
        return Ok(0);
    }
    let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let threshold = tol * scale;
    let mut sums: Vec<Vec<f64>> = fes.iter().map(|g| vec![0.0; g.levels]).collect();

    let group_means = |col: &[f64], d: usize, sums: &mut Vec<f64>| {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (i, &c) in fes[d].codes.iter().enumerate() {
            sums[c] += weights[i] * col[i];
        }
        for (s, &t) in sums.iter_mut().zip(&lw.totals[d]) {
            *s = if t > 0.0 { *s / t } else { 0.0 };
        }
    };

    for iter in 0..=max_iter {
        // Check convergence on every dimension before sweeping again.
        let mut worst = 0.0f64;
        for d in 0..fes.len() {
            group_means(col, d, &mut sums[d]);
            worst = sums[d].iter().fold(worst, |m, v| m.max(v.abs()));
        }
        if worst < threshold {
            return Ok(iter);
        }
        if iter == max_iter {
            break;
        }
        for d in 0..fes.len() {
            if d > 0 {
                group_means(col, d, &mut sums[d]);
            }
            for (i, &c) in fes[d].codes.iter().enumerate() {
                col[i] -= sums[d][c];
            }
        }
    }
    Err(Error::NonConvergence {
        what: "fixed-effect demeaning",
        iterations: max_iter,
    })
}

/// Sweeps out weighted group means for every fixed-effect dimension by
/// alternating projections until each column's largest group mean falls below
/// `tol` (relative to the column's magnitude when that exceeds one).
pub fn two_way_demean(design: &DesignMatrix, tol: f64, max_iter: usize) -> Result<(DesignMatrix, DemeanReport)> {
    let weights: Vec<f64> = design.weights.iter().copied().collect();
    let lw = LevelWeights {
        totals: design
            .fixed_effects
            .iter()
            .map(|g| {
                let mut t = vec![0.0; g.levels];
                for (i, &c) in g.codes.iter().enumerate() {
                    t[c] += weights[i];
                }
                t
            })
            .collect(),
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(design.regressors.ncols() + 1);
    columns.push(design.outcome.iter().copied().collect());
    for c in design.regressors.column_iter() {
        columns.push(c.iter().copied().collect());
    }
    let iterations: Vec<usize> = columns
        .par_iter_mut()
        .map(|col| demean_column(col, &design.fixed_effects, &weights, &lw, tol, max_iter))
        .collect::<Result<_>>()?;

    let n = design.nrows();
    let k = design.regressors.ncols();
    let mut out = design.clone();
    out.outcome = DVector::from_vec(columns[0].clone());
    out.regressors = DMatrix::from_fn(n, k, |r, c| columns[c + 1][r]);
    Ok((
        out,
        DemeanReport {
            iterations: iterations.into_iter().max().unwrap_or(0),
        },
    ))
}

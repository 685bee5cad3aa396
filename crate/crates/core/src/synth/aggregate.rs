use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Unit-by-year outcome matrix with one treated unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePanel {
    pub units: Vec<String>,
    pub years: Vec<i32>,
    /// Rows are units, columns are years.
    pub outcomes: DMatrix<f64>,
    pub treated_unit: String,
    pub treatment_year: i32,
}

impl AggregatePanel {
    pub fn new(
        units: Vec<String>,
        years: Vec<i32>,
        outcomes: DMatrix<f64>,
        treated_unit: impl Into<String>,
        treatment_year: i32,
    ) -> Result<Self> {
        let treated_unit = treated_unit.into();
        if outcomes.shape() != (units.len(), years.len()) {
            return Err(Error::domain(format!(
                "outcome matrix is {:?}, expected {} units x {} years",
                outcomes.shape(),
                units.len(),
                years.len()
            )));
        }
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("aggregate panel has missing or non-finite cells"));
        }
        if !units.contains(&treated_unit) {
            return Err(Error::domain(format!("treated unit {treated_unit} not among units")));
        }
        if units.len() < 3 {
            return Err(Error::InsufficientGroups(format!(
                "synthetic control needs at least 2 donors, found {}",
                units.len().saturating_sub(1)
            )));
        }
        if !years.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("years must be strictly increasing"));
        }
        Ok(Self {
            units,
            years,
            outcomes,
            treated_unit,
            treatment_year,
        })
    }

    /// State-by-year unweighted mean log wage.
    pub fn from_panel(panel: &Panel) -> Result<Self> {
        let mut cells: BTreeMap<(String, i32), (f64, usize)> = BTreeMap::new();
        for o in panel.observations() {
            if o.monthly_wage <= 0.0 {
                return Err(Error::domain(format!(
                    "nonpositive wage for worker {} in {}",
                    o.worker_id, o.year
                )));
            }
            let c = cells.entry((o.state.clone(), o.year)).or_insert((0.0, 0));
            c.0 += o.log_wage();
            c.1 += 1;
        }
        let units = panel.states();
        let years = panel.years();
        let mut m = DMatrix::from_element(units.len(), years.len(), f64::NAN);
        for (i, u) in units.iter().enumerate() {
            for (t, y) in years.iter().enumerate() {
                match cells.get(&(u.clone(), *y)) {
                    Some((s, n)) => m[(i, t)] = s / *n as f64,
                    None => return Err(Error::domain(format!("no observations for {u} in {y}"))),
                }
            }
        }
        Self::new(units, years, m, panel.treated_state.clone(), panel.treatment_year)
    }

    pub fn treated_index(&self) -> usize {
        self.units
            .iter()
            .position(|u| *u == self.treated_unit)
            .expect("validated at construction")
    }

    pub fn donor_indices(&self) -> Vec<usize> {
        let t = self.treated_index();
        (0..self.units.len()).filter(|&i| i != t).collect()
    }

    pub fn n_pre(&self) -> usize {
        self.years.iter().filter(|&&y| y < self.treatment_year).count()
    }

    pub fn row(&self, unit: usize) -> DVector<f64> {
        self.outcomes.row(unit).transpose()
    }

    /// Same data with a different treated unit, optionally dropping units.
    pub fn reassign(&self, treated: usize, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.units.len()).filter(|i| !drop.contains(i)).collect();
        let m = DMatrix::from_fn(keep.len(), self.years.len(), |r, c| self.outcomes[(keep[r], c)]);
        Self::new(
            keep.iter().map(|&i| self.units[i].clone()).collect(),
            self.years.clone(),
            m,
            self.units[treated].clone(),
            self.treatment_year,
        )
    }

    /// Adds `c` to every outcome of one unit.
    pub fn shifted(&self, unit: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.outcomes.row_mut(unit).add_scalar_mut(c);
        out
    }
}

/// Mean of the pre and post segments of a path.
pub(crate) fn period_means(path: &DVector<f64>, n_pre: usize) -> (f64, f64) {
    let n = path.len();
    let pre = path.rows(0, n_pre).sum() / n_pre as f64;
    let post = path.rows(n_pre, n - n_pre).sum() / (n - n_pre) as f64;
    (pre, post)
}

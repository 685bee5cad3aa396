//! Worker-year panel: records, validation, CSV I/O, sample rules, and the
//! regression designs built from it.

mod design;
mod io;
mod sample;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{build_design, covariate_matrix, fe_rank, two_way_demean, DemeanReport, DesignMatrix, FeGroup};
pub use io::{
    load_csv, load_vz_ratio_csv, read_observations, read_vz_ratio, write_csv, write_vz_ratio_csv,
    LoadReport, RejectedRow,
};
pub use sample::{apply_sample_rules, CensorMode, SampleReport, SampleRules, WageBand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Education {
    LessThanHs,
    HighSchool,
    College,
}

impl Education {
    pub const ALL: [Education; 3] = [Education::LessThanHs, Education::HighSchool, Education::College];

    pub fn as_str(&self) -> &'static str {
        match self {
            Education::LessThanHs => "less_than_hs",
            Education::HighSchool => "high_school",
            Education::College => "college",
        }
    }
}

impl fmt::Display for Education {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Education {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less_than_hs" => Ok(Education::LessThanHs),
            "high_school" => Ok(Education::HighSchool),
            "college" => Ok(Education::College),
            other => Err(Error::domain(format!("unknown education level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub worker_id: String,
    pub year: i32,
    pub state: String,
    pub municipality: String,
    pub monthly_wage: f64,
    pub weekly_hours: f64,
    pub retained: bool,
    pub occupation_code: String,
    pub activity_code: String,
    pub exposed_occupation: bool,
    pub exposed_activity: bool,
    pub female: bool,
    pub race: String,
    pub age: f64,
    /// Months with the current employer.
    pub tenure: f64,
    pub education: Education,
    pub informal: bool,
}

impl Observation {
    pub fn log_wage(&self) -> f64 {
        self.monthly_wage.ln()
    }

    pub fn age_sq(&self) -> f64 {
        self.age * self.age
    }

    pub fn tenure_sq(&self) -> f64 {
        self.tenure * self.tenure
    }

    /// Unique municipality key across states.
    pub fn municipality_key(&self) -> String {
        format!("{}/{}", self.state, self.municipality)
    }

    pub(crate) fn check_domain(&self) -> std::result::Result<(), String> {
        if self.worker_id.is_empty() {
            return Err("empty worker_id".into());
        }
        if !(self.monthly_wage.is_finite() && self.monthly_wage >= 0.0) {
            return Err(format!("monthly_wage {} is negative or not finite", self.monthly_wage));
        }
        if !(self.weekly_hours.is_finite() && self.weekly_hours >= 0.0) {
            return Err(format!("weekly_hours {} is negative or not finite", self.weekly_hours));
        }
        if !(self.age.is_finite() && self.age > 0.0) {
            return Err(format!("age {} must be positive", self.age));
        }
        if !(self.tenure.is_finite() && self.tenure >= 0.0) {
            return Err(format!("tenure {} must be nonnegative", self.tenure));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    observations: Vec<Observation>,
    pub treatment_year: i32,
    pub treated_state: String,
    vz_ratio: BTreeMap<(String, i32), f64>,
    /// Wage band fixed by the first application of the sample rules.
    pub wage_band: Option<WageBand>,
}

impl Panel {
    /// Sorts observations canonically by `(worker_id, year)` and validates.
    pub fn new(
        mut observations: Vec<Observation>,
        treated_state: impl Into<String>,
        treatment_year: i32,
        vz_ratio: BTreeMap<(String, i32), f64>,
    ) -> Result<Self> {
        observations.sort_by(|a, b| a.worker_id.cmp(&b.worker_id).then(a.year.cmp(&b.year)));
        for pair in observations.windows(2) {
            if pair[0].worker_id == pair[1].worker_id && pair[0].year == pair[1].year {
                return Err(Error::DuplicateKey {
                    worker_id: pair[0].worker_id.clone(),
                    year: pair[0].year,
                });
            }
        }
        for ((m, y), r) in &vz_ratio {
            if !(0.0..=1.0).contains(r) {
                return Err(Error::domain(format!("vz_ratio for ({m}, {y}) = {r} outside [0, 1]")));
            }
        }
        let years: BTreeSet<i32> = observations.iter().map(|o| o.year).collect();
        if let (Some(&lo), Some(&hi)) = (years.first(), years.last()) {
            if years.len() as i32 != hi - lo + 1 {
                return Err(Error::domain(format!("years {lo}..={hi} are not contiguous")));
            }
        }
        Ok(Self {
            observations,
            treatment_year,
            treated_state: treated_state.into(),
            vz_ratio,
            wage_band: None,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn vz_ratio_map(&self) -> &BTreeMap<(String, i32), f64> {
        &self.vz_ratio
    }

    /// Immigrant share for a municipality-year; absent cells are zero.
    pub fn vz_ratio(&self, municipality: &str, year: i32) -> f64 {
        self.vz_ratio
            .get(&(municipality.to_string(), year))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.observations.iter().map(|o| o.year).collect();
        set.into_iter().collect()
    }

    pub fn states(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.state.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn is_treated_row(&self, o: &Observation) -> bool {
        o.state == self.treated_state && o.year >= self.treatment_year
    }

    /// Rows kept by `keep`, with metadata carried over.
    pub fn filter<F: Fn(&Observation) -> bool>(&self, keep: F) -> Panel {
        Panel {
            observations: self.observations.iter().filter(|o| keep(o)).cloned().collect(),
            treatment_year: self.treatment_year,
            treated_state: self.treated_state.clone(),
            vz_ratio: self.vz_ratio.clone(),
            wage_band: self.wage_band,
        }
    }

    pub fn with_treatment(&self, treated_state: impl Into<String>, treatment_year: i32) -> Panel {
        Panel {
            treated_state: treated_state.into(),
            treatment_year,
            ..self.clone()
        }
    }

    pub(crate) fn with_observations(&self, observations: Vec<Observation>) -> Panel {
        Panel {
            observations,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Panel {
        Panel {
            observations: Vec::new(),
            treatment_year: self.treatment_year,
            treated_state: self.treated_state.clone(),
            vz_ratio: self.vz_ratio.clone(),
            wage_band: self.wage_band,
        }
    }

    /// Per-row mover flag: 1 when the previous observed job was in an exposed
    /// occupation and the worker now holds a different, unexposed occupation.
    pub fn mover_flags(&self) -> Vec<f64> {
        let obs = &self.observations;
        let mut out = vec![0.0; obs.len()];
        for i in 1..obs.len() {
            let (prev, cur) = (&obs[i - 1], &obs[i]);
            if prev.worker_id == cur.worker_id
                && prev.exposed_occupation
                && !cur.exposed_occupation
                && prev.occupation_code != cur.occupation_code
            {
                out[i] = 1.0;
            }
        }
        out
    }
}

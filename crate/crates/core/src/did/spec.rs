use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    LogWage,
    Retained,
    /// Moved out of an immigrant-exposed occupation into an unexposed one.
    Mover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    /// Treated state and year >= treatment year.
    Binary,
    /// Municipal immigrant share of the formal labor market, in percentage points.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Twfe,
    DoublyRobust,
    EventStudy,
    LinearProbability,
    PooledOls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffects {
    WorkerYear,
    StateYear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBy {
    Municipality,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureFlag {
    Activity,
    Occupation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InversePropensity,
}

pub const DEFAULT_PROPENSITY_COVARIATES: [&str; 7] =
    ["female", "race", "age", "age_sq", "tenure", "tenure_sq", "education"];
pub const DEFAULT_POOLED_COVARIATES: [&str; 5] = ["education", "race", "female", "age", "age_sq"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSpec {
    pub outcome: Outcome,
    pub treatment: Treatment,
    pub family: Family,
    pub fixed_effects: FixedEffects,
    pub cluster: ClusterBy,
    pub propensity_covariates: Vec<String>,
    /// Linear controls for the pooled model.
    pub covariates: Vec<String>,
    pub trim_quantile: f64,
    pub reference_year: i32,
    /// Adds `treat x flag` (and the flag itself when no worker effects absorb it).
    pub interaction: Option<ExposureFlag>,
    pub weighting: Weighting,
    /// Event study with only post-period indicators (pre-period pooled as reference).
    pub pool_pre_period: bool,
    pub demean_tol: f64,
    pub demean_max_iter: usize,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        Self {
            outcome: Outcome::LogWage,
            treatment: Treatment::Binary,
            family: Family::Twfe,
            fixed_effects: FixedEffects::WorkerYear,
            cluster: ClusterBy::Municipality,
            propensity_covariates: DEFAULT_PROPENSITY_COVARIATES.iter().map(|s| s.to_string()).collect(),
            covariates: DEFAULT_POOLED_COVARIATES.iter().map(|s| s.to_string()).collect(),
            trim_quantile: 0.9975,
            reference_year: 2013,
            interaction: None,
            weighting: Weighting::Uniform,
            pool_pre_period: false,
            demean_tol: 1e-10,
            demean_max_iter: 10_000,
        }
    }
}

impl EstimationSpec {
    pub fn twfe(treatment: Treatment) -> Self {
        Self {
            treatment,
            ..Default::default()
        }
    }

    pub fn doubly_robust(treatment: Treatment) -> Self {
        Self {
            treatment,
            family: Family::DoublyRobust,
            weighting: Weighting::InversePropensity,
            ..Default::default()
        }
    }

    pub fn event_study(reference_year: i32) -> Self {
        Self {
            family: Family::EventStudy,
            reference_year,
            ..Default::default()
        }
    }

    pub fn retention(treatment: Treatment) -> Self {
        Self {
            treatment,
            family: Family::LinearProbability,
            outcome: Outcome::Retained,
            ..Default::default()
        }
    }

    pub fn pooled_ols(interaction: Option<ExposureFlag>) -> Self {
        Self {
            family: Family::PooledOls,
            fixed_effects: FixedEffects::StateYear,
            cluster: ClusterBy::State,
            interaction,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trim_quantile > 0.5 && self.trim_quantile < 1.0) {
            return Err(Error::domain(format!(
                "trim_quantile must lie in (0.5, 1), got {}",
                self.trim_quantile
            )));
        }
        if !(self.demean_tol > 0.0) || self.demean_max_iter == 0 {
            return Err(Error::domain("demeaning tolerance and iteration cap must be positive"));
        }
        match self.family {
            Family::EventStudy if self.treatment != Treatment::Binary => {
                Err(Error::domain("event studies use the binary treatment"))
            }
            Family::LinearProbability if self.outcome == Outcome::LogWage => {
                Err(Error::domain("linear probability models need a 0/1 outcome"))
            }
            Family::PooledOls if self.fixed_effects != FixedEffects::StateYear => {
                Err(Error::domain("pooled OLS uses state and year fixed effects"))
            }
            Family::DoublyRobust if self.weighting != Weighting::InversePropensity => {
                Err(Error::domain("doubly robust estimation uses inverse-propensity weights"))
            }
            _ => Ok(()),
        }
    }
}

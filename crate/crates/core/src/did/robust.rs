use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate, EstimateResult};
use super::spec::{EstimationSpec, Family, Outcome};
use crate::error::{Error, Result};
use crate::panel::{Education, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeterogeneityDimension {
    Education,
    ExposedActivity,
    ExposedOccupation,
    Mover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceboMode {
    InSpace,
    InTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboResult {
    pub treated_state: String,
    pub treatment_year: i32,
    pub result: EstimateResult,
}

/// Runs the configured estimator once per cohort. The mover dimension instead
/// estimates the 0/1 mover outcome on the full panel under the key `mover`.
pub fn heterogeneity_split(
    panel: &Panel,
    spec: &EstimationSpec,
    dimension: HeterogeneityDimension,
) -> Result<BTreeMap<String, EstimateResult>> {
    let cohorts: Vec<(String, Panel)> = match dimension {
        HeterogeneityDimension::Education => Education::ALL
            .iter()
            .map(|&e| (e.to_string(), panel.filter(|o| o.education == e)))
            .collect(),
        HeterogeneityDimension::ExposedActivity => vec![
            ("exposed".into(), panel.filter(|o| o.exposed_activity)),
            ("unexposed".into(), panel.filter(|o| !o.exposed_activity)),
        ],
        HeterogeneityDimension::ExposedOccupation => vec![
            ("exposed".into(), panel.filter(|o| o.exposed_occupation)),
            ("unexposed".into(), panel.filter(|o| !o.exposed_occupation)),
        ],
        HeterogeneityDimension::Mover => {
            let spec = EstimationSpec {
                outcome: Outcome::Mover,
                family: match spec.family {
                    Family::Twfe | Family::EventStudy => Family::LinearProbability,
                    f => f,
                },
                ..spec.clone()
            };
            let mut out = BTreeMap::new();
            out.insert("mover".to_string(), estimate(panel, &spec)?);
            return Ok(out);
        }
    };
    if let Some((name, _)) = cohorts.iter().find(|(_, p)| p.is_empty()) {
        return Err(Error::EmptyGroup(format!("cohort {name} has no observations")));
    }
    cohorts
        .into_par_iter()
        .map(|(name, p)| estimate(&p, spec).map(|r| (name, r)))
        .collect()
}

/// In-space placebos drop the true treated state and reassign treatment to
/// each control state in turn; in-time placebos keep only pre-treatment years
/// and move the treatment date to each pre-period year after the first.
pub fn placebo_suite(panel: &Panel, spec: &EstimationSpec, mode: PlaceboMode) -> Result<Vec<PlaceboResult>> {
    let spec = if spec.family == Family::EventStudy {
        EstimationSpec {
            family: Family::Twfe,
            ..spec.clone()
        }
    } else {
        spec.clone()
    };
    let runs: Vec<(String, i32, Panel)> = match mode {
        PlaceboMode::InSpace => {
            let controls: Vec<String> = panel
                .states()
                .into_iter()
                .filter(|s| *s != panel.treated_state)
                .collect();
            if controls.len() < 2 {
                return Err(Error::InsufficientGroups(format!(
                    "in-space placebos need at least 2 control states, found {}",
                    controls.len()
                )));
            }
            let donors = panel.filter(|o| o.state != panel.treated_state);
            controls
                .into_iter()
                .map(|s| {
                    let p = donors.with_treatment(s.clone(), panel.treatment_year);
                    (s, panel.treatment_year, p)
                })
                .collect()
        }
        PlaceboMode::InTime => {
            let pre: Vec<i32> = panel.years().into_iter().filter(|&y| y < panel.treatment_year).collect();
            if pre.len() < 2 {
                return Err(Error::InsufficientGroups(format!(
                    "in-time placebos need at least 2 pre-treatment years, found {}",
                    pre.len()
                )));
            }
            let pre_panel = panel.filter(|o| o.year < panel.treatment_year);
            pre[1..]
                .iter()
                .map(|&y| (panel.treated_state.clone(), y, pre_panel.with_treatment(panel.treated_state.clone(), y)))
                .collect()
        }
    };
    runs.into_par_iter()
        .map(|(state, year, p)| {
            estimate(&p, &spec).map(|result| PlaceboResult {
                treated_state: state,
                treatment_year: year,
                result,
            })
        })
        .collect()
}

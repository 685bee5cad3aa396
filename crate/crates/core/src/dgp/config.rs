use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectProfile {
    Flat,
    /// Linear in event time with mean one over the post period, starting at zero.
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPair<T> {
    pub treated: T,
    pub control: T,
}

/// Selection on education: membership in the treated state and wage trends
/// both depend on education.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Confounding {
    /// Population education mix (less than HS, HS, college).
    pub education_mix: [f64; 3],
    /// Probability of living in the treated state by education.
    pub treated_share: [f64; 3],
    /// Education-specific log-wage trend per year, zero in the base year.
    pub trend: [f64; 3],
}

impl Default for Confounding {
    fn default() -> Self {
        Self {
            education_mix: [0.3, 0.6, 0.1],
            treated_share: [0.15, 0.25, 0.5],
            trend: [-0.01, 0.0, 0.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_workers_treated: usize,
    pub n_workers_control: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub treatment_year: i32,
    /// Base year for year effects and education trends.
    pub base_year: i32,
    pub treated_state: String,
    /// Control states with their municipality counts.
    pub control_states: Vec<(String, usize)>,
    pub treated_municipalities: usize,
    pub true_effect: f64,
    pub effect_profile: EffectProfile,
    /// Immigrant share in treated municipalities for each post year; the last
    /// value carries forward.
    pub exposure_path: Vec<f64>,
    pub wage_level_means: GroupPair<f64>,
    pub noise_sd: f64,
    pub worker_effect_sd: f64,
    /// Common log-wage change per year.
    pub year_effect_drift: f64,
    /// Log-wage premia for (less than HS, HS, college).
    pub education_premium: [f64; 3],
    pub female_premium: f64,
    /// Treatment-effect multipliers by education (less than HS, HS, college).
    pub cohort_multipliers: [f64; 3],
    /// Treatment-effect multipliers for (unexposed, exposed) activities.
    pub exposure_multipliers: [f64; 2],
    pub education_mix: GroupPair<[f64; 3]>,
    pub female_share: GroupPair<f64>,
    pub race_mix: GroupPair<BTreeMap<String, f64>>,
    pub mean_age: GroupPair<f64>,
    /// Mean tenure in months.
    pub mean_tenure: GroupPair<f64>,
    /// Share of workers whose spell is cut short at entry or exit.
    pub attrition_rate: f64,
    pub retention_rate: f64,
    /// Additive change in the retention probability for treated post rows.
    pub retention_effect: f64,
    /// Yearly probability of leaving an exposed occupation.
    pub mover_rate: f64,
    pub mover_effect: f64,
    pub informal_share: f64,
    pub confounding: Option<Confounding>,
    pub seed: u64,
}

fn race(white: f64, black: f64, mixed: f64, undeclared: f64) -> BTreeMap<String, f64> {
    [("white", white), ("black", black), ("mixed", mixed), ("undeclared", undeclared)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_workers_treated: 500,
            n_workers_control: 1500,
            first_year: 2008,
            last_year: 2018,
            treatment_year: 2014,
            base_year: 2013,
            treated_state: "RR".into(),
            control_states: vec![("AC".into(), 22), ("AP".into(), 16)],
            treated_municipalities: 15,
            true_effect: 0.022,
            effect_profile: EffectProfile::Ramp,
            exposure_path: vec![0.002, 0.005, 0.010, 0.020, 0.035],
            wage_level_means: GroupPair {
                treated: 1916.07,
                control: 1841.05,
            },
            noise_sd: 0.10,
            worker_effect_sd: 0.30,
            year_effect_drift: 0.01,
            education_premium: [0.0, 0.25, 0.80],
            female_premium: -0.15,
            cohort_multipliers: [2.733, 1.0, -2.467],
            exposure_multipliers: [1.0, 1.0],
            education_mix: GroupPair {
                treated: [0.24, 0.64, 0.12],
                control: [0.32, 0.58, 0.10],
            },
            female_share: GroupPair {
                treated: 0.36,
                control: 0.32,
            },
            race_mix: GroupPair {
                treated: race(0.22, 0.02, 0.63, 0.13),
                control: race(0.17, 0.03, 0.65, 0.15),
            },
            mean_age: GroupPair {
                treated: 36.92,
                control: 37.85,
            },
            mean_tenure: GroupPair {
                treated: 60.75,
                control: 63.70,
            },
            attrition_rate: 0.1,
            retention_rate: 0.85,
            retention_effect: 0.0,
            mover_rate: 0.02,
            mover_effect: 0.0,
            informal_share: 0.45,
            confounding: None,
            seed: 20140101,
        }
    }
}

fn check_mix(name: &str, mix: &[f64]) -> Result<()> {
    if mix.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain(format!("{name} has a proportion outside [0, 1]")));
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > MIX_TOL {
        return Err(Error::domain(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

impl DgpConfig {
    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn n_post_years(&self) -> usize {
        (self.last_year - self.treatment_year + 1).max(0) as usize
    }

    /// Effect multiplier for a year: zero before treatment; for the ramp,
    /// 2k/(n-1) in post year k so that the post-period mean is one.
    pub fn profile_weight(&self, year: i32) -> f64 {
        if year < self.treatment_year {
            return 0.0;
        }
        let n = self.n_post_years();
        match self.effect_profile {
            EffectProfile::Flat => 1.0,
            EffectProfile::Ramp if n <= 1 => 1.0,
            EffectProfile::Ramp => 2.0 * (year - self.treatment_year) as f64 / (n - 1) as f64,
        }
    }

    /// Exposure path value for a year (zero before treatment).
    pub fn exposure(&self, year: i32) -> f64 {
        if year < self.treatment_year || self.exposure_path.is_empty() {
            return 0.0;
        }
        let k = (year - self.treatment_year) as usize;
        self.exposure_path[k.min(self.exposure_path.len() - 1)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_workers_treated == 0 || self.n_workers_control == 0 {
            return Err(Error::domain("worker counts must be positive"));
        }
        if !(self.first_year < self.treatment_year && self.treatment_year <= self.last_year) {
            return Err(Error::domain(format!(
                "treatment year {} must fall after {} and no later than {}",
                self.treatment_year, self.first_year, self.last_year
            )));
        }
        if self.treated_municipalities == 0
            || self.control_states.is_empty()
            || self.control_states.iter().any(|(_, m)| *m == 0)
        {
            return Err(Error::domain("every state needs at least one municipality"));
        }
        if self.control_states.iter().any(|(s, _)| *s == self.treated_state) {
            return Err(Error::domain("treated state listed among control states"));
        }
        for (name, sd) in [
            ("noise_sd", self.noise_sd),
            ("worker_effect_sd", self.worker_effect_sd),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::domain(format!("{name} must be a nonnegative number")));
            }
        }
        if !(self.wage_level_means.treated > 0.0 && self.wage_level_means.control > 0.0) {
            return Err(Error::domain("wage level means must be positive"));
        }
        for p in &self.exposure_path {
            check_prob("exposure_path", *p)?;
        }
        for (name, mix) in [
            ("treated education_mix", &self.education_mix.treated),
            ("control education_mix", &self.education_mix.control),
        ] {
            check_mix(name, mix)?;
        }
        let races: Vec<f64> = self.race_mix.treated.values().copied().collect();
        check_mix("treated race_mix", &races)?;
        let races: Vec<f64> = self.race_mix.control.values().copied().collect();
        check_mix("control race_mix", &races)?;
        check_prob("treated female_share", self.female_share.treated)?;
        check_prob("control female_share", self.female_share.control)?;
        check_prob("attrition_rate", self.attrition_rate)?;
        check_prob("retention_rate", self.retention_rate)?;
        check_prob("mover_rate", self.mover_rate)?;
        check_prob("informal_share", self.informal_share)?;
        if !(self.mean_age.treated > 18.0 && self.mean_age.control > 18.0) {
            return Err(Error::domain("mean ages must exceed 18"));
        }
        if !(self.mean_tenure.treated >= 0.0 && self.mean_tenure.control >= 0.0) {
            return Err(Error::domain("mean tenure must be nonnegative"));
        }
        if let Some(c) = &self.confounding {
            check_mix("confounding education_mix", &c.education_mix)?;
            for p in c.treated_share {
                check_prob("confounding treated_share", p)?;
            }
        }
        Ok(())
    }
}

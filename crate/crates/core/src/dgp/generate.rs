use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DgpConfig, EffectProfile};
use crate::economy::{shock_multipliers, EconomyParams, ImmigrationShock};
use crate::error::Result;
use crate::panel::{Education, Observation, Panel};

/// (code, exposed, treated share, control share); shares are renormalized.
const ACTIVITIES: [(&str, bool, f64, f64); 6] = [
    ("47", true, 0.41, 0.38),  // commerce
    ("41", true, 0.08, 0.09),  // construction
    ("08", false, 0.03, 0.05), // extraction
    ("56", true, 0.04, 0.03),  // hotels and restaurants
    ("25", false, 0.10, 0.10), // manufacturing and utilities
    ("85", false, 0.35, 0.35), // other services
];

const OCCUPATIONS: [(&str, bool, f64, f64); 6] = [
    ("351", false, 0.07, 0.08), // technicians
    ("784", true, 0.22, 0.27),  // factory
    ("514", true, 0.43, 0.41),  // general services
    ("521", true, 0.14, 0.11),  // retail and wholesale
    ("622", false, 0.02, 0.03), // rural
    ("252", false, 0.07, 0.05), // scientific and liberal arts
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMultipliers {
    pub informal: f64,
    pub formal_low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Mean injected log-wage effect over treated-state rows, by year.
    pub att_by_year: BTreeMap<i32, f64>,
    /// Mean injected effect over treated post rows, by cohort. Education
    /// cohorts cover formal workers only.
    pub cohort_effects: BTreeMap<String, f64>,
    /// Immigrant share by municipality and year (treated municipalities only).
    pub exposure: BTreeMap<String, BTreeMap<i32, f64>>,
    pub log_multipliers: Option<LogMultipliers>,
    pub true_effect: f64,
    pub effect_profile: EffectProfile,
}

impl GroundTruth {
    /// Mean of the yearly ATT over post-treatment years.
    pub fn post_mean(&self, treatment_year: i32) -> f64 {
        let post: Vec<f64> = self
            .att_by_year
            .iter()
            .filter(|(y, _)| **y >= treatment_year)
            .map(|(_, v)| *v)
            .collect();
        post.iter().sum::<f64>() / post.len() as f64
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Group {
    Treated,
    Control,
}

struct WorkerSpec {
    id: String,
    group: Group,
    state: String,
    municipality: String,
    /// Education fixed by the assignment step (confounded designs).
    education: Option<Education>,
}

struct RowTruth {
    year: i32,
    treated_post: bool,
    effect: f64,
    education: Education,
    exposed_activity: bool,
    informal: bool,
    mover_eligible: bool,
}

fn substream(seed: u64, worker: &str, component: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(worker.as_bytes());
    h.update([0u8]);
    h.update(component.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn draw_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = probs.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn municipality_name(state: &str, index: usize) -> String {
    format!("{state}-{:02}", index + 1)
}

fn control_municipality(config: &DgpConfig, j: usize) -> (String, String) {
    let total: usize = config.control_states.iter().map(|(_, m)| m).sum();
    let mut k = j % total;
    for (state, m) in &config.control_states {
        if k < *m {
            return (state.clone(), municipality_name(state, k));
        }
        k -= m;
    }
    unreachable!("index reduced modulo the municipality total")
}

fn worker_specs(config: &DgpConfig) -> Vec<WorkerSpec> {
    match &config.confounding {
        None => {
            let treated = (0..config.n_workers_treated).map(|i| WorkerSpec {
                id: format!("T{i:06}"),
                group: Group::Treated,
                state: config.treated_state.clone(),
                municipality: municipality_name(&config.treated_state, i % config.treated_municipalities),
                education: None,
            });
            let control = (0..config.n_workers_control).map(|j| {
                let (state, municipality) = control_municipality(config, j);
                WorkerSpec {
                    id: format!("C{j:06}"),
                    group: Group::Control,
                    state,
                    municipality,
                    education: None,
                }
            });
            treated.chain(control).collect()
        }
        Some(c) => {
            let n = config.n_workers_treated + config.n_workers_control;
            let (mut nt, mut nc) = (0usize, 0usize);
            (0..n)
                .map(|i| {
                    let id = format!("P{i:06}");
                    let mut rng = substream(config.seed, &id, "assign");
                    let e = draw_index(&mut rng, c.education_mix.iter().copied());
                    let treated = rng.random::<f64>() < c.treated_share[e];
                    let (group, state, municipality) = if treated {
                        nt += 1;
                        let m = municipality_name(&config.treated_state, (nt - 1) % config.treated_municipalities);
                        (Group::Treated, config.treated_state.clone(), m)
                    } else {
                        nc += 1;
                        let (s, m) = control_municipality(config, nc - 1);
                        (Group::Control, s, m)
                    };
                    WorkerSpec {
                        id,
                        group,
                        state,
                        municipality,
                        education: Some(Education::ALL[e]),
                    }
                })
                .collect()
        }
    }
}

/// Education mix of a group, accounting for selection in confounded designs.
fn group_education_mix(config: &DgpConfig, group: Group) -> [f64; 3] {
    match (&config.confounding, group) {
        (None, Group::Treated) => config.education_mix.treated,
        (None, Group::Control) => config.education_mix.control,
        (Some(c), g) => {
            let raw: Vec<f64> = (0..3)
                .map(|e| {
                    let p = c.treated_share[e];
                    c.education_mix[e] * if g == Group::Treated { p } else { 1.0 - p }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            [raw[0] / total, raw[1] / total, raw[2] / total]
        }
    }
}

fn female_share(config: &DgpConfig, group: Group) -> f64 {
    match (config.confounding.is_some(), group) {
        (false, Group::Treated) => config.female_share.treated,
        _ => config.female_share.control,
    }
}

/// State intercept that puts the expected base-year wage at the target mean.
fn state_intercept(config: &DgpConfig, group: Group) -> f64 {
    let target = match group {
        Group::Treated => config.wage_level_means.treated,
        Group::Control => config.wage_level_means.control,
    };
    let mix = group_education_mix(config, group);
    let edu: f64 = mix
        .iter()
        .zip(&config.education_premium)
        .map(|(p, prem)| p * prem.exp())
        .sum();
    let f = female_share(config, group);
    let gender = 1.0 - f + f * config.female_premium.exp();
    let var = config.worker_effect_sd.powi(2) + config.noise_sd.powi(2);
    target.ln() - var / 2.0 - edu.ln() - gender.ln()
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("standard deviation validated as finite and nonnegative")
}

fn simulate_worker(
    config: &DgpConfig,
    spec: &WorkerSpec,
    intercept: f64,
    shock: Option<LogMultipliers>,
) -> (Vec<Observation>, Vec<RowTruth>) {
    let group = spec.group;
    let treated = group == Group::Treated;
    let mut rng = substream(config.seed, &spec.id, "person");

    let education = match spec.education {
        Some(e) => e,
        None => {
            let mix = group_education_mix(config, group);
            Education::ALL[draw_index(&mut rng, mix.iter().copied())]
        }
    };
    let e = education as usize;
    let female = rng.random::<f64>() < female_share(config, group);
    let races = if treated && config.confounding.is_none() {
        &config.race_mix.treated
    } else {
        &config.race_mix.control
    };
    let race = races
        .keys()
        .nth(draw_index(&mut rng, races.values().copied()))
        .cloned()
        .unwrap_or_default();
    let (mean_age, mean_tenure) = if treated {
        (config.mean_age.treated, config.mean_tenure.treated)
    } else {
        (config.mean_age.control, config.mean_tenure.control)
    };
    let base_age = (mean_age + normal(10.0).sample(&mut rng)).clamp(23.0, 60.0).round();
    let worker_effect = normal(config.worker_effect_sd).sample(&mut rng);
    let informal = rng.random::<f64>() < config.informal_share;
    let pick = |rng: &mut ChaCha8Rng, table: &[(&str, bool, f64, f64)]| {
        draw_index(rng, table.iter().map(|r| if treated { r.2 } else { r.3 }))
    };
    let activity = ACTIVITIES[pick(&mut rng, &ACTIVITIES)];
    let mut occupation = OCCUPATIONS[pick(&mut rng, &OCCUPATIONS)];
    let hours = if rng.random::<f64>() < 0.5 { 40.0 } else { 44.0 };
    let n_years = (config.last_year - config.first_year + 1) as usize;
    let (entry, exit) = if rng.random::<f64>() < config.attrition_rate {
        let cut = config.first_year + 1 + rng.random_range(0..n_years - 1) as i32;
        if rng.random::<f64>() < 0.5 {
            (cut, config.last_year)
        } else {
            (config.first_year, cut - 1)
        }
    } else {
        (config.first_year, config.last_year)
    };
    let mut tenure = (rng.random::<f64>() * 2.0 * mean_tenure).round();

    let noise = normal(config.noise_sd);
    let mut yr = substream(config.seed, &spec.id, "years");
    let mut rows = Vec::new();
    let mut truths = Vec::new();
    let mut prev_retained = true;
    for year in config.years() {
        // Draw every stream element each year so spells do not shift later draws.
        let eps = noise.sample(&mut yr);
        let u_retain = yr.random::<f64>();
        let u_move = yr.random::<f64>();
        let u_dest = yr.random::<f64>();
        let u_tenure = yr.random::<f64>();

        let treated_post = treated && year >= config.treatment_year;
        let mut mover_eligible = false;
        if year > config.first_year {
            tenure = if prev_retained { tenure + 12.0 } else { (u_tenure * 12.0).round() };
            if occupation.1 {
                mover_eligible = true;
                let p = config.mover_rate + if treated_post { config.mover_effect } else { 0.0 };
                if u_move < p {
                    let safe: Vec<_> = OCCUPATIONS.iter().filter(|o| !o.1).collect();
                    let total: f64 = safe.iter().map(|o| o.3).sum();
                    let mut acc = 0.0;
                    occupation = *safe[safe.len() - 1];
                    for o in &safe {
                        acc += o.3 / total;
                        if u_dest < acc {
                            occupation = **o;
                            break;
                        }
                    }
                }
            }
        }
        let p_retain = (config.retention_rate + if treated_post { config.retention_effect } else { 0.0 }).clamp(0.0, 1.0);
        let retained = u_retain < p_retain;
        prev_retained = retained;

        let mut effect = 0.0;
        if treated_post {
            effect = config.true_effect
                * config.profile_weight(year)
                * config.cohort_multipliers[e]
                * config.exposure_multipliers[activity.1 as usize];
            if let Some(m) = shock {
                effect += if informal {
                    if activity.1 {
                        m.informal
                    } else {
                        0.0
                    }
                } else if education == Education::College {
                    m.high
                } else {
                    m.formal_low
                };
            }
        }
        let t = (year - config.base_year) as f64;
        let trend = config.year_effect_drift * t + config.confounding.as_ref().map_or(0.0, |c| c.trend[e] * t);
        let log_wage = intercept
            + config.education_premium[e]
            + if female { config.female_premium } else { 0.0 }
            + worker_effect
            + trend
            + effect
            + eps;

        if year < entry || year > exit {
            continue;
        }
        rows.push(Observation {
            worker_id: spec.id.clone(),
            year,
            state: spec.state.clone(),
            municipality: spec.municipality.clone(),
            monthly_wage: log_wage.exp(),
            weekly_hours: hours,
            retained,
            occupation_code: occupation.0.to_string(),
            activity_code: activity.0.to_string(),
            exposed_occupation: occupation.1,
            exposed_activity: activity.1,
            female,
            race: race.clone(),
            age: base_age + (year - config.base_year) as f64,
            tenure,
            education,
            informal,
        });
        truths.push(RowTruth {
            year,
            treated_post,
            effect,
            education,
            exposed_activity: activity.1,
            informal,
            mover_eligible: mover_eligible && year > entry,
        });
    }
    (rows, truths)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn generate_inner(config: &DgpConfig, shock: Option<LogMultipliers>) -> Result<(Panel, GroundTruth)> {
    config.validate()?;
    let specs = worker_specs(config);
    let intercepts = [
        state_intercept(config, Group::Treated),
        state_intercept(config, Group::Control),
    ];
    let simulated: Vec<(Vec<Observation>, Vec<RowTruth>)> = specs
        .par_iter()
        .map(|s| {
            let c = if s.group == Group::Treated { intercepts[0] } else { intercepts[1] };
            simulate_worker(config, s, c, shock)
        })
        .collect();
    let mut rows = Vec::new();
    let mut truths = Vec::new();
    for (r, t) in simulated {
        rows.extend(r);
        truths.extend(t);
    }

    let mut exposure: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    let mut vz = BTreeMap::new();
    let m = config.treated_municipalities;
    for k in 0..m {
        let name = municipality_name(&config.treated_state, k);
        let scale = if m > 1 { 0.5 + k as f64 / (m - 1) as f64 } else { 1.0 };
        let path = exposure.entry(format!("{}/{name}", config.treated_state)).or_default();
        for year in config.treatment_year..=config.last_year {
            let r = (config.exposure(year) * scale).min(1.0);
            path.insert(year, r);
            vz.insert((name.clone(), year), r);
        }
    }

    let treated_rows: Vec<&RowTruth> = {
        let treated_ids: Vec<bool> = rows.iter().map(|o| o.state == config.treated_state).collect();
        truths.iter().zip(treated_ids).filter(|(_, t)| *t).map(|(r, _)| r).collect()
    };
    let mut att_by_year = BTreeMap::new();
    for year in config.years() {
        let v = mean(treated_rows.iter().filter(|r| r.year == year).map(|r| r.effect)).unwrap_or(0.0);
        att_by_year.insert(year, v);
    }
    let post: Vec<&&RowTruth> = treated_rows.iter().filter(|r| r.treated_post).collect();
    let mut cohort_effects = BTreeMap::new();
    for e in Education::ALL {
        if let Some(v) = mean(
            post.iter()
                .filter(|r| r.education == e && !r.informal)
                .map(|r| r.effect),
        ) {
            cohort_effects.insert(e.to_string(), v);
        }
    }
    for (name, flag) in [("exposed_activity", true), ("unexposed_activity", false)] {
        if let Some(v) = mean(post.iter().filter(|r| r.exposed_activity == flag).map(|r| r.effect)) {
            cohort_effects.insert(name.to_string(), v);
        }
    }
    let informal_gap = mean(
        post.iter()
            .filter(|r| r.informal && r.exposed_activity)
            .map(|r| r.effect),
    )
    .zip(mean(
        post.iter()
            .filter(|r| r.informal && !r.exposed_activity)
            .map(|r| r.effect),
    ));
    if let Some((a, b)) = informal_gap {
        cohort_effects.insert("informal_exposed_activity_gap".into(), a - b);
    }
    if let Some(share) = mean(post.iter().map(|r| r.mover_eligible as u8 as f64)) {
        cohort_effects.insert("mover".into(), config.mover_effect * share);
    }
    cohort_effects.insert("retention".into(), config.retention_effect);
    if let Some(v) = mean(post.iter().map(|r| r.effect)) {
        cohort_effects.insert("att_post".into(), v);
    }
    if let Some(v) = mean(post.iter().filter(|r| !r.informal).map(|r| r.effect)) {
        cohort_effects.insert("att_post_formal".into(), v);
    }

    let panel = Panel::new(rows, config.treated_state.clone(), config.treatment_year, vz)?;
    Ok((
        panel,
        GroundTruth {
            seed: config.seed,
            att_by_year,
            cohort_effects,
            exposure,
            log_multipliers: shock,
            true_effect: config.true_effect,
            effect_profile: config.effect_profile,
        },
    ))
}

/// Simulates a worker-year panel with a known injected treatment effect.
pub fn generate(config: &DgpConfig) -> Result<(Panel, GroundTruth)> {
    generate_inner(config, None)
}

/// As [`generate`], with post-treatment wages in the treated state also moved
/// by the structural shock: college workers by ln m_h, other formal workers by
/// ln m_l, informal workers in exposed activities by ln m_i.
pub fn generate_shock_consistent(
    config: &DgpConfig,
    params: &EconomyParams,
    shock: &ImmigrationShock,
) -> Result<(Panel, GroundTruth)> {
    let m = shock_multipliers(params, shock)?;
    let (informal, formal_low, high) = m.ln();
    generate_inner(
        config,
        Some(LogMultipliers {
            informal,
            formal_low,
            high,
        }),
    )
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use borderlab::dgp::{generate, generate_shock_consistent, GroundTruth};
use borderlab::did::{
    estimate, placebo_suite, stars, EstimateResult, EstimationSpec, ExposureFlag, Family, Outcome, PlaceboMode,
    PlaceboResult, Treatment,
};
use borderlab::economy::{comparative_statics_report, solve_border_town, write_report_csv};
use borderlab::panel::{apply_sample_rules, load_csv, write_csv, write_vz_ratio_csv, Panel};
use borderlab::synth::{scm_fit, sdid_fit, AggregatePanel, SdidSolution};
use serde::Serialize;

use crate::config::{RunConfig, Sector};
use crate::report::{
    bias, event_table, results_table, scm_path_table, summary_table, weights_table, with_truth, Format, SynthReport,
    Table,
};

/// Text for stdout plus the files written.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn simulate_panel(cfg: &RunConfig) -> Result<(Panel, GroundTruth)> {
    cfg.dgp.validate().context("[dgp]")?;
    if cfg.simulate.shock_consistent {
        let (params, shock) = cfg.economy_params()?;
        Ok(generate_shock_consistent(&cfg.dgp, &params, &shock)?)
    } else {
        Ok(generate(&cfg.dgp)?)
    }
}

/// `panel.csv`, `vz_ratio.csv`, `ground_truth.json`.
pub fn write_simulation(dir: &Path, panel: &Panel, truth: &GroundTruth) -> Result<Vec<PathBuf>> {
    let mut buf = Vec::new();
    write_csv(panel, &mut buf)?;
    let a = write_file(dir, "panel.csv", &buf)?;
    buf.clear();
    write_vz_ratio_csv(panel, &mut buf)?;
    let b = write_file(dir, "vz_ratio.csv", &buf)?;
    let c = write_file(dir, "ground_truth.json", &json_bytes(truth)?)?;
    Ok(vec![a, b, c])
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, truth) = simulate_panel(cfg)?;
    let files = write_simulation(out, &panel, &truth)?;
    let table = summary_table(&panel);
    Ok(CommandOutput {
        stdout: table.render(format, &table)?,
        files,
    })
}

pub fn select_sector(panel: &Panel, sector: Sector) -> Panel {
    match sector {
        Sector::All => panel.clone(),
        Sector::Formal => panel.filter(|o| !o.informal),
        Sector::Informal => panel.filter(|o| o.informal),
    }
}

/// Reads the input panel and optional ground truth, then applies the sector
/// filter and sample rules.
pub fn load_input(cfg: &RunConfig) -> Result<(Panel, Option<GroundTruth>)> {
    let Some(path) = &cfg.input.panel else {
        bail!("no input panel: set [input] panel or pass --panel");
    };
    let loaded = load_csv(path, cfg.input.vz_ratio.as_deref(), &cfg.treated_state(), cfg.treatment_year())
        .with_context(|| format!("loading {}", path.display()))?;
    if !loaded.rejected.is_empty() {
        eprintln!("warning: {} rows rejected while loading {}", loaded.rejected.len(), path.display());
    }
    let truth = match &cfg.input.truth {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    Ok((prepare(&loaded.panel, cfg)?, truth))
}

pub fn prepare(panel: &Panel, cfg: &RunConfig) -> Result<Panel> {
    let panel = select_sector(panel, cfg.sample.sector);
    if panel.is_empty() {
        bail!("no observations in sector {:?}", cfg.sample.sector);
    }
    if cfg.sample.apply {
        Ok(apply_sample_rules(&panel, &cfg.sample.rules)?.0)
    } else {
        Ok(panel)
    }
}

/// Injected values for the terms a specification estimates, where the truth
/// file defines them.
pub fn truth_terms(spec: &EstimationSpec, truth: &GroundTruth, treatment_year: i32, sector: Sector) -> BTreeMap<String, f64> {
    let c = &truth.cohort_effects;
    let mut out = BTreeMap::new();
    if spec.treatment == Treatment::Continuous {
        return out;
    }
    let mut put = |term: &str, key: &str| {
        if let Some(v) = c.get(key) {
            out.insert(term.to_string(), *v);
        }
    };
    match (spec.family, spec.outcome) {
        (Family::EventStudy, Outcome::LogWage) => {
            let base = truth.att_by_year.get(&spec.reference_year).copied().unwrap_or(0.0);
            for (&y, &v) in &truth.att_by_year {
                if y == spec.reference_year || (spec.pool_pre_period && y < treatment_year) {
                    continue;
                }
                out.insert(format!("treat_{y}"), v - base);
            }
        }
        (_, Outcome::Retained) => put("treat", "retention"),
        (_, Outcome::Mover) => put("treat", "mover"),
        (_, Outcome::LogWage) => {
            if spec.interaction == Some(ExposureFlag::Activity) && sector == Sector::Informal {
                put("treat_x_exposed_activity", "informal_exposed_activity_gap");
            }
            put("treat", if sector == Sector::Formal { "att_post_formal" } else { "att_post" });
        }
    }
    out
}

pub fn model_label(spec: &EstimationSpec) -> String {
    let treat = match spec.treatment {
        Treatment::Binary => "Treat: Binary",
        Treatment::Continuous => "Treat: VZ Ratio x 100",
    };
    let family = match spec.family {
        Family::Twfe => "TWFE",
        Family::DoublyRobust => "DR",
        Family::EventStudy => "Event study",
        Family::LinearProbability => "LPM",
        Family::PooledOls => "Pooled OLS",
    };
    format!("{treat} ({family})")
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    #[serde(flatten)]
    pub result: EstimateResult,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub truth: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub bias: BTreeMap<String, f64>,
}

pub fn estimate_report(panel: &Panel, spec: &EstimationSpec, truth: Option<&GroundTruth>, sector: Sector) -> Result<EstimateReport> {
    let result = estimate(panel, spec)?;
    let truth = truth
        .map(|t| truth_terms(spec, t, panel.treatment_year, sector))
        .unwrap_or_default();
    Ok(EstimateReport {
        bias: bias(&result, &truth),
        truth,
        result,
    })
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, truth) = load_input(cfg)?;
    let report = estimate_report(&panel, &cfg.estimation, truth.as_ref(), cfg.sample.sector)?;
    let table = results_table(&[(model_label(&cfg.estimation), report.result.clone())])?;
    let table = with_truth(table, &report.result, &report.truth);
    let files = vec![
        write_file(out, "estimate.json", &json_bytes(&report)?)?,
        write_file(out, "estimate.csv", table.to_csv()?.as_bytes())?,
    ];
    let mut output = CommandOutput {
        stdout: table.render(format, &report)?,
        files,
    };
    if format == Format::Table {
        output.stdout.push_str("* p < 0.1, ** p < 0.05, *** p < 0.01 (normal approximation)\n");
    }
    Ok(output)
}

pub fn event_spec(cfg: &RunConfig) -> EstimationSpec {
    EstimationSpec {
        family: Family::EventStudy,
        ..cfg.estimation.clone()
    }
}

pub fn cmd_event_study(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, truth) = load_input(cfg)?;
    let spec = event_spec(cfg);
    let report = estimate_report(&panel, &spec, truth.as_ref(), cfg.sample.sector)?;
    let table = event_table(&report.result, spec.reference_year, &report.truth);
    let files = vec![
        write_file(out, "event_study.json", &json_bytes(&report)?)?,
        write_file(out, "event_study.csv", table.to_csv()?.as_bytes())?,
    ];
    Ok(CommandOutput {
        stdout: table.render(format, &report)?,
        files,
    })
}

/// SDID output in the shared synthetic-control shape. The synthetic path is
/// the weighted donor average shifted by the time-weighted pre-period gap.
pub fn sdid_report(agg: &AggregatePanel, s: &SdidSolution) -> SynthReport {
    let n_pre = agg.n_pre();
    let treated = agg.treated_index();
    let donors = agg.donor_indices();
    let synth: Vec<f64> = (0..agg.years.len())
        .map(|t| {
            donors
                .iter()
                .map(|&d| s.unit_weight(&agg.units[d]) * agg.outcomes[(d, t)])
                .sum()
        })
        .collect();
    let shift: f64 = agg.years[..n_pre]
        .iter()
        .enumerate()
        .map(|(t, y)| s.time_weights[y] * (agg.outcomes[(treated, t)] - synth[t]))
        .sum();
    let path: Vec<(i32, f64, f64)> = agg
        .years
        .iter()
        .enumerate()
        .map(|(t, &y)| (y, agg.outcomes[(treated, t)], synth[t] + shift))
        .collect();
    let mspe = path[..n_pre].iter().map(|(_, a, b)| (a - b).powi(2)).sum::<f64>() / n_pre as f64;
    SynthReport {
        method: s.method.clone(),
        weights: s.unit_weights.clone(),
        mspe,
        effect: s.effect,
        path,
        time_weights: Some(s.time_weights.clone()),
        ridge: Some(s.ridge),
    }
}

pub fn synth_outputs(dir: &Path, stem: &str, report: &SynthReport) -> Result<(Vec<PathBuf>, Table)> {
    let weights = weights_table(&report.weights, report.effect);
    let files = vec![
        write_file(dir, &format!("{stem}.json"), &json_bytes(report)?)?,
        write_file(dir, &format!("{stem}_path.csv"), scm_path_table(&report.path).to_csv()?.as_bytes())?,
        write_file(dir, &format!("{stem}_weights.csv"), weights.to_csv()?.as_bytes())?,
    ];
    Ok((files, weights))
}

pub fn cmd_scm(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, _) = load_input(cfg)?;
    let report = SynthReport::from(&scm_fit(&AggregatePanel::from_panel(&panel)?)?);
    let (files, table) = synth_outputs(out, "scm", &report)?;
    Ok(CommandOutput {
        stdout: table.render(format, &report)?,
        files,
    })
}

pub fn cmd_sdid(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, _) = load_input(cfg)?;
    let agg = AggregatePanel::from_panel(&panel)?;
    let report = sdid_report(&agg, &sdid_fit(&agg, cfg.synth.ridge)?);
    let (files, table) = synth_outputs(out, "sdid", &report)?;
    Ok(CommandOutput {
        stdout: table.render(format, &report)?,
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboRun {
    pub mode: PlaceboMode,
    pub placebos: Vec<PlaceboResult>,
}

pub fn run_placebos(panel: &Panel, spec: &EstimationSpec, modes: &[PlaceboMode]) -> Result<Vec<PlaceboRun>> {
    modes
        .iter()
        .map(|&mode| {
            Ok(PlaceboRun {
                mode,
                placebos: placebo_suite(panel, spec, mode)?,
            })
        })
        .collect()
}

pub fn placebo_table(runs: &[PlaceboRun]) -> Table {
    let mut t = Table::new(["mode", "treated_state", "treatment_year", "coef", "se", "stars"]);
    for run in runs {
        let mode = match run.mode {
            PlaceboMode::InSpace => "in_space",
            PlaceboMode::InTime => "in_time",
        };
        for p in &run.placebos {
            let (c, s) = (p.result.beta(), p.result.beta_se());
            t.push([
                mode.to_string(),
                p.treated_state.clone(),
                p.treatment_year.to_string(),
                format!("{c:.6}"),
                format!("{s:.6}"),
                stars(c, s).to_string(),
            ]);
        }
    }
    t
}

pub fn cmd_placebo(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (panel, _) = load_input(cfg)?;
    let runs = run_placebos(&panel, &cfg.estimation, &cfg.placebo.modes)?;
    let table = placebo_table(&runs);
    let files = vec![
        write_file(out, "placebo.json", &json_bytes(&runs)?)?,
        write_file(out, "placebo.csv", table.to_csv()?.as_bytes())?,
    ];
    Ok(CommandOutput {
        stdout: table.render(format, &runs)?,
        files,
    })
}

pub fn cmd_economy(cfg: &RunConfig, out: &Path, format: Format) -> Result<CommandOutput> {
    let (params, shock) = cfg.economy_params()?;
    let statics = comparative_statics_report(&params, &shock, 1.0)?;
    let border = cfg.border_params()?;
    let with = solve_border_town(&border, true)?;
    let rows = statics.rows();
    let mut buf = Vec::new();
    write_report_csv(&rows, &mut buf)?;
    #[derive(Serialize)]
    struct EconomyReport<'a> {
        comparative_statics: &'a borderlab::economy::ComparativeStatics,
        border_town: borderlab::economy::BorderTownEquilibrium,
    }
    let report = EconomyReport {
        comparative_statics: &statics,
        border_town: with,
    };
    let files = vec![
        write_file(out, "economy.csv", &buf)?,
        write_file(out, "economy.json", &json_bytes(&report)?)?,
    ];
    let mut table = Table::new(["scenario", "w_i", "w_l", "w_h", "m_i", "m_l", "m_h"]);
    for r in &rows {
        table.push(
            std::iter::once(r.scenario.clone())
                .chain([r.w_i, r.w_l, r.w_h, r.m_i, r.m_l, r.m_h].map(|v| format!("{v:.6}"))),
        );
    }
    Ok(CommandOutput {
        stdout: table.render(format, &report)?,
        files,
    })
}

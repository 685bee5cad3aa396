use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use borderlab::dgp::GroundTruth;
use borderlab::did::{
    estimate, heterogeneity_split, EstimateResult, EstimationSpec, ExposureFlag, Family, HeterogeneityDimension,
    Outcome, Treatment, Weighting,
};
use borderlab::panel::Panel;
use borderlab::synth::{scm_fit, sdid_fit, AggregatePanel};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Sector};
use crate::report::{event_table, results_table, summary_table, SynthReport, Table};
use crate::run::{
    model_label, placebo_table, prepare, run_placebos, sdid_report, select_sector, simulate_panel, truth_terms,
    write_file, write_simulation,
};

pub const STAGES: [&str; 11] = [
    "simulate",
    "main_did",
    "retention_lpm",
    "education_heterogeneity",
    "exposure_heterogeneity",
    "mover_lpm",
    "informal_pooled_ols",
    "event_study",
    "placebo",
    "scm",
    "sdid",
];

pub const MANIFEST: &str = "manifest.json";
pub const COMPARISON: &str = "truth_vs_estimate.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub name: String,
    pub status: StageStatus,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Hash of the resolved configuration, output block excluded.
    pub config_sha256: String,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub comparison: Table,
}

impl PipelineReport {
    pub fn failure(&self) -> Option<&StageRecord> {
        self.manifest.stages.iter().find(|s| s.status == StageStatus::Failed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Models<'a> {
    models: &'a BTreeMap<String, EstimateResult>,
}

struct State<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    formal: Option<Panel>,
    informal: Option<Panel>,
    truth: Option<GroundTruth>,
    outputs: Vec<String>,
    comparison: Table,
}

impl State<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(self.dir, name, bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut v = serde_json::to_vec_pretty(value)?;
        v.push(b'\n');
        self.write(name, &v)
    }

    fn formal(&self) -> Result<&Panel> {
        self.formal.as_ref().ok_or_else(|| anyhow!("no simulated panel"))
    }

    fn spec(&self, family: Family, treatment: Treatment) -> EstimationSpec {
        EstimationSpec {
            family,
            treatment,
            outcome: Outcome::LogWage,
            weighting: if family == Family::DoublyRobust {
                Weighting::InversePropensity
            } else {
                Weighting::Uniform
            },
            interaction: None,
            ..self.cfg.estimation.clone()
        }
    }

    fn compare(&mut self, stage: &str, model: &str, result: &EstimateResult, truth: BTreeMap<String, f64>) {
        for (term, t) in truth {
            if let Some(c) = result.coefficient(&term) {
                self.compare_value(stage, model, &term, c, t);
            }
        }
    }

    fn compare_value(&mut self, stage: &str, model: &str, term: &str, estimate: f64, truth: f64) {
        self.comparison.push([
            stage.to_string(),
            model.to_string(),
            term.to_string(),
            format!("{estimate:.6}"),
            format!("{truth:.6}"),
            format!("{:.6}", estimate - truth),
        ]);
    }

    fn truth_for(&self, spec: &EstimationSpec, sector: Sector) -> BTreeMap<String, f64> {
        match (&self.truth, &self.formal) {
            (Some(t), Some(p)) => truth_terms(spec, t, p.treatment_year, sector),
            _ => BTreeMap::new(),
        }
    }

    /// Writes `{stem}.json` and the regression table `{stem}.csv`.
    fn write_models(&mut self, stem: &str, models: &BTreeMap<String, EstimateResult>, order: &[String]) -> Result<()> {
        self.write_json(&format!("{stem}.json"), &Models { models })?;
        let cols: Vec<(String, EstimateResult)> = order.iter().map(|k| (k.clone(), models[k].clone())).collect();
        let table = results_table(&cols)?;
        self.write(&format!("{stem}.csv"), table.to_csv()?.as_bytes())
    }

    fn run_stage(&mut self, name: &str) -> Result<()> {
        match name {
            "simulate" => self.simulate(),
            "main_did" => self.main_did(),
            "retention_lpm" => self.retention(),
            "education_heterogeneity" => self.heterogeneity(name, HeterogeneityDimension::Education),
            "exposure_heterogeneity" => self.exposure(),
            "mover_lpm" => self.heterogeneity(name, HeterogeneityDimension::Mover),
            "informal_pooled_ols" => self.informal(),
            "event_study" => self.event_study(),
            "placebo" => self.placebo(),
            "scm" => self.scm(),
            "sdid" => self.sdid(),
            other => Err(anyhow!("unknown stage {other}")),
        }
    }

    fn simulate(&mut self) -> Result<()> {
        let (panel, truth) = simulate_panel(self.cfg)?;
        for f in write_simulation(self.dir, &panel, &truth)? {
            self.outputs.push(f.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
        self.write("summary.csv", summary_table(&panel).to_csv()?.as_bytes())?;
        let panel = prepare(&panel, &RunConfig {
            sample: crate::config::SampleBlock {
                sector: Sector::All,
                ..self.cfg.sample.clone()
            },
            ..self.cfg.clone()
        })?;
        self.formal = Some(select_sector(&panel, Sector::Formal));
        self.informal = Some(select_sector(&panel, Sector::Informal));
        self.truth = Some(truth);
        Ok(())
    }

    fn fit_models(&mut self, stage: &str, specs: Vec<EstimationSpec>) -> Result<()> {
        let panel = self.formal()?.clone();
        let mut models = BTreeMap::new();
        let mut order = Vec::new();
        for spec in specs {
            let label = model_label(&spec);
            let r = estimate(&panel, &spec)?;
            let truth = self.truth_for(&spec, Sector::Formal);
            self.compare(stage, &label, &r, truth);
            order.push(label.clone());
            models.insert(label, r);
        }
        self.write_models(stage, &models, &order)
    }

    fn main_did(&mut self) -> Result<()> {
        let specs = [
            (Family::Twfe, Treatment::Binary),
            (Family::Twfe, Treatment::Continuous),
            (Family::DoublyRobust, Treatment::Binary),
            (Family::DoublyRobust, Treatment::Continuous),
        ]
        .map(|(f, t)| self.spec(f, t))
        .to_vec();
        self.fit_models("main_did", specs)
    }

    fn retention(&mut self) -> Result<()> {
        let specs = [Treatment::Binary, Treatment::Continuous]
            .map(|t| EstimationSpec {
                outcome: Outcome::Retained,
                ..self.spec(Family::LinearProbability, t)
            })
            .to_vec();
        self.fit_models("retention_lpm", specs)
    }

    fn heterogeneity(&mut self, stage: &str, dim: HeterogeneityDimension) -> Result<()> {
        let spec = match dim {
            HeterogeneityDimension::Education => self.spec(Family::DoublyRobust, Treatment::Binary),
            _ => self.spec(Family::Twfe, Treatment::Binary),
        };
        let models = heterogeneity_split(self.formal()?, &spec, dim)?;
        if let Some(truth) = self.truth.clone() {
            for (cohort, r) in &models {
                let key = match dim {
                    HeterogeneityDimension::Mover => "mover".to_string(),
                    _ => cohort.clone(),
                };
                if let Some(t) = truth.cohort_effects.get(&key) {
                    self.compare_value(stage, cohort, "treat", r.beta(), *t);
                }
            }
        }
        let order: Vec<String> = models.keys().cloned().collect();
        self.write_models(stage, &models, &order)
    }

    fn exposure(&mut self) -> Result<()> {
        let spec = self.spec(Family::Twfe, Treatment::Binary);
        let mut models = BTreeMap::new();
        let mut order = Vec::new();
        for (flag, dim) in [
            ("activity", HeterogeneityDimension::ExposedActivity),
            ("occupation", HeterogeneityDimension::ExposedOccupation),
        ] {
            for (cohort, r) in heterogeneity_split(self.formal()?, &spec, dim)? {
                let label = format!("{cohort}_{flag}");
                let truth = self.truth.as_ref().and_then(|t| t.cohort_effects.get(&label).copied());
                if let Some(t) = truth {
                    self.compare_value("exposure_heterogeneity", &label, "treat", r.beta(), t);
                }
                order.push(label.clone());
                models.insert(label, r);
            }
        }
        self.write_models("exposure_heterogeneity", &models, &order)
    }

    fn informal(&mut self) -> Result<()> {
        let panel = self
            .informal
            .clone()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| anyhow!("no informal workers in the simulated panel; set dgp.informal_share above 0"))?;
        let spec = EstimationSpec {
            family: Family::PooledOls,
            fixed_effects: borderlab::did::FixedEffects::StateYear,
            cluster: borderlab::did::ClusterBy::State,
            interaction: Some(ExposureFlag::Activity),
            ..self.spec(Family::PooledOls, Treatment::Binary)
        };
        let r = estimate(&panel, &spec)?;
        let label = model_label(&spec);
        let truth = self.truth_for(&spec, Sector::Informal);
        self.compare("informal_pooled_ols", &label, &r, truth);
        let models: BTreeMap<String, EstimateResult> = [(label.clone(), r)].into_iter().collect();
        self.write_models("informal_pooled_ols", &models, &[label])
    }

    fn event_study(&mut self) -> Result<()> {
        let spec = self.spec(Family::EventStudy, Treatment::Binary);
        let r = estimate(self.formal()?, &spec)?;
        let truth = self.truth_for(&spec, Sector::Formal);
        self.compare("event_study", "Event study", &r, truth.clone());
        self.write_json("event_study.json", &r)?;
        let table = event_table(&r, spec.reference_year, &truth);
        self.write("event_study.csv", table.to_csv()?.as_bytes())
    }

    fn placebo(&mut self) -> Result<()> {
        let spec = self.spec(Family::Twfe, Treatment::Binary);
        let runs = run_placebos(self.formal()?, &spec, &self.cfg.placebo.modes)?;
        self.write_json("placebo.json", &runs)?;
        self.write("placebo.csv", placebo_table(&runs).to_csv()?.as_bytes())
    }

    fn synth_files(&mut self, stem: &str, report: &SynthReport) -> Result<()> {
        self.write_json(&format!("{stem}.json"), report)?;
        let path = crate::report::scm_path_table(&report.path);
        self.write(&format!("{stem}_path.csv"), path.to_csv()?.as_bytes())?;
        if let Some(t) = self.truth.as_ref().and_then(|t| t.cohort_effects.get("att_post_formal").copied()) {
            self.compare_value(stem, stem, "effect", report.effect, t);
        }
        Ok(())
    }

    fn scm(&mut self) -> Result<()> {
        let agg = AggregatePanel::from_panel(self.formal()?)?;
        let report = SynthReport::from(&scm_fit(&agg)?);
        self.synth_files("scm", &report)
    }

    fn sdid(&mut self) -> Result<()> {
        let agg = AggregatePanel::from_panel(self.formal()?)?;
        let report = sdid_report(&agg, &sdid_fit(&agg, self.cfg.synth.ridge)?);
        self.synth_files("sdid", &report)
    }
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output = Default::default();
    Ok(sha256_hex(&serde_json::to_vec(&c)?))
}

/// Runs every stage in order, stopping at the first failure. Outputs written
/// so far stay on disk; the manifest records each stage's status and hashes
/// every file this run wrote.
pub fn run_pipeline(cfg: &RunConfig, dir: &Path) -> Result<PipelineReport> {
    fs::create_dir_all(dir)?;
    let mut state = State {
        cfg,
        dir,
        formal: None,
        informal: None,
        truth: None,
        outputs: Vec::new(),
        comparison: Table::new(["stage", "model", "term", "estimate", "truth", "bias"]),
    };
    let mut stages = Vec::new();
    let mut failed = false;
    for (i, name) in STAGES.iter().enumerate() {
        if failed {
            stages.push(StageRecord {
                index: i + 1,
                name: name.to_string(),
                status: StageStatus::Skipped,
                outputs: Vec::new(),
                error: None,
            });
            continue;
        }
        let result = state.run_stage(name);
        let outputs = std::mem::take(&mut state.outputs);
        let (status, error) = match result {
            Ok(()) => (StageStatus::Ok, None),
            Err(e) => {
                failed = true;
                (StageStatus::Failed, Some(format!("{e:#}")))
            }
        };
        stages.push(StageRecord {
            index: i + 1,
            name: name.to_string(),
            status,
            outputs,
            error,
        });
    }
    write_file(dir, COMPARISON, state.comparison.to_csv()?.as_bytes())?;

    let mut names: Vec<String> = stages.iter().flat_map(|s| s.outputs.clone()).collect();
    names.push(COMPARISON.to_string());
    let files = names
        .into_iter()
        .map(|path| {
            let bytes = fs::read(dir.join(&path))?;
            Ok(FileRecord {
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
                path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "borderlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed(),
        config_sha256: config_hash(cfg)?,
        complete: !failed,
        stages,
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_file(dir, MANIFEST, &bytes)?;
    Ok(PipelineReport {
        dir: dir.to_path_buf(),
        manifest,
        comparison: state.comparison,
    })
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use borderlab::did::{EstimationSpec, PlaceboMode};
use borderlab::dgp::DgpConfig;
use borderlab::economy::{BorderTownParams, EconomyParams, ImmigrationShock};
use borderlab::panel::SampleRules;
use borderlab::synth::DEFAULT_RIDGE;
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT_DIR: &str = "borderlab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    #[default]
    All,
    Formal,
    Informal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleBlock {
    /// Apply the wage-tail rules before estimating.
    pub apply: bool,
    pub sector: Sector,
    pub rules: SampleRules,
}

impl Default for SampleBlock {
    fn default() -> Self {
        Self {
            apply: true,
            sector: Sector::All,
            rules: SampleRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    /// Move post-period wages in the treated state by the structural multipliers.
    pub shock_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBlock {
    pub ridge: f64,
}

impl Default for SynthBlock {
    fn default() -> Self {
        Self { ridge: DEFAULT_RIDGE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceboBlock {
    pub modes: Vec<PlaceboMode>,
}

impl Default for PlaceboBlock {
    fn default() -> Self {
        Self {
            modes: vec![PlaceboMode::InSpace, PlaceboMode::InTime],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBlock {
    pub panel: Option<PathBuf>,
    pub vz_ratio: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Defaults to the DGP block's treated state and treatment year.
    pub treated_state: Option<String>,
    pub treatment_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides `dgp.seed`.
    pub seed: Option<u64>,
    pub dgp: DgpConfig,
    pub simulate: SimulateBlock,
    /// Flat economy parameters: alpha, beta, l_bar, h_bar, informal_share,
    /// eta, mu, phi, psi, tau, nu, rho, delta_penalty.
    pub economy: BTreeMap<String, f64>,
    pub estimation: EstimationSpec,
    pub sample: SampleBlock,
    pub synth: SynthBlock,
    pub placebo: PlaceboBlock,
    pub input: InputBlock,
    pub output: OutputBlock,
}

const ECONOMY_KEYS: [&str; 13] = [
    "alpha",
    "beta",
    "l_bar",
    "h_bar",
    "informal_share",
    "eta",
    "mu",
    "phi",
    "psi",
    "tau",
    "nu",
    "rho",
    "delta_penalty",
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative input paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input.panel, &mut cfg.input.vz_ratio, &mut cfg.input.truth, &mut cfg.output.dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.dgp.seed = s;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.dgp.seed)
    }

    pub fn economy_params(&self) -> Result<(EconomyParams, ImmigrationShock)> {
        let params = EconomyParams::from_map(&self.economy)?;
        let shock = ImmigrationShock::from_map(&self.economy, params.informal_share)?;
        Ok((params, shock))
    }

    pub fn border_params(&self) -> Result<BorderTownParams> {
        Ok(BorderTownParams::from_map(&self.economy)?)
    }

    pub fn treated_state(&self) -> String {
        self.input.treated_state.clone().unwrap_or_else(|| self.dgp.treated_state.clone())
    }

    pub fn treatment_year(&self) -> i32 {
        self.input.treatment_year.unwrap_or(self.dgp.treatment_year)
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate().context("[dgp]")?;
        self.estimation.validate().context("[estimation]")?;
        if let Some(k) = self.economy.keys().find(|k| !ECONOMY_KEYS.contains(&k.as_str())) {
            bail!("[economy]: unknown key {k:?}");
        }
        self.economy_params().context("[economy]")?;
        if !(self.synth.ridge >= 0.0 && self.synth.ridge.is_finite()) {
            bail!("[synth]: ridge must be a nonnegative number");
        }
        for (name, p) in [
            ("panel", &self.input.panel),
            ("vz_ratio", &self.input.vz_ratio),
            ("truth", &self.input.truth),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("[input]: {name} file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// Output directory: explicit flag or `BORDERLAB_OUT`, then the config, then the default.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

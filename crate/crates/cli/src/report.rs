use std::collections::BTreeMap;

use anyhow::Result;
use borderlab::did::{write_results_table, EstimateResult};
use borderlab::panel::{Education, Panel};
use borderlab::synth::ScmSolution;
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Table,
}

/// Rows of strings with a header; renders as CSV or as aligned text.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let mut row: Vec<String> = row.into_iter().map(Into::into).collect();
        row.resize(self.header.len(), String::new());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell in the first row whose first column equals `key`.
    pub fn get(&self, key: &str, column: &str) -> Option<&str> {
        let c = self.column(column)?;
        self.rows.iter().find(|r| r[0] == key).map(|r| r[c].as_str())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = vec![line(&self.header)];
        out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.extend(self.rows.iter().map(|r| line(r)));
        out.join("\n") + "\n"
    }

    pub fn render(&self, format: Format, json: &impl Serialize) -> Result<String> {
        Ok(match format {
            Format::Json => serde_json::to_string_pretty(json)? + "\n",
            Format::Csv => self.to_csv()?,
            Format::Table => self.to_text(),
        })
    }
}

/// Regression table, one column per model, with stars and FE rows.
pub fn results_table(models: &[(String, EstimateResult)]) -> Result<Table> {
    let mut buf = Vec::new();
    write_results_table(&mut buf, models)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(buf.as_slice());
    let mut table = Table::new(rdr.headers()?.iter().map(str::to_string).collect::<Vec<_>>());
    for rec in rdr.records() {
        table.push(rec?.iter().map(str::to_string).collect::<Vec<_>>());
    }
    Ok(table)
}

/// Adds `Truth` and `Bias` columns next to the estimates of a one-model table.
pub fn with_truth(mut table: Table, result: &EstimateResult, truth: &BTreeMap<String, f64>) -> Table {
    if truth.is_empty() {
        return table;
    }
    table.header.extend(["Truth".to_string(), "Bias".to_string()]);
    for row in &mut table.rows {
        let (t, b) = match (truth.get(&row[0]), result.coefficient(&row[0])) {
            (Some(t), Some(c)) => (format!("{t:.4}"), format!("{:.4}", c - t)),
            _ => (String::new(), String::new()),
        };
        row.extend([t, b]);
    }
    table
}

pub fn bias(result: &EstimateResult, truth: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    truth
        .iter()
        .filter_map(|(k, t)| result.coefficient(k).map(|c| (k.clone(), c - t)))
        .collect()
}

/// Event-study path with the reference year as a zero row without a standard error.
pub fn event_table(result: &EstimateResult, reference_year: i32, truth: &BTreeMap<String, f64>) -> Table {
    let mut t = Table::new(["year", "coef", "se", "ci_low", "ci_high", "truth", "bias"]);
    let mut years: Vec<(i32, Option<(f64, f64)>)> = result
        .event_years
        .iter()
        .flatten()
        .map(|e| (e.year, Some((e.coef, e.se))))
        .collect();
    years.push((reference_year, None));
    years.sort_by_key(|(y, _)| *y);
    for (year, est) in years {
        let tr = truth.get(&format!("treat_{year}")).copied();
        let fmt = |v: f64| format!("{v:.6}");
        let mut row = vec![year.to_string()];
        match est {
            Some((c, s)) => row.extend([fmt(c), fmt(s), fmt(c - 1.96 * s), fmt(c + 1.96 * s)]),
            None => row.extend(["0".to_string(), String::new(), String::new(), String::new()]),
        }
        row.push(tr.map(fmt).unwrap_or_default());
        row.push(match (tr, est) {
            (Some(t), Some((c, _))) => fmt(c - t),
            _ => String::new(),
        });
        t.push(row);
    }
    t
}

pub fn scm_path_table(path: &[(i32, f64, f64)]) -> Table {
    let mut t = Table::new(["year", "treated", "synthetic", "gap"]);
    for (y, a, b) in path {
        t.push([y.to_string(), format!("{a:.6}"), format!("{b:.6}"), format!("{:.6}", a - b)]);
    }
    t
}

pub fn weights_table(weights: &BTreeMap<String, f64>, effect: f64) -> Table {
    let mut t = Table::new(["donor", "weight"]);
    for (d, w) in weights {
        t.push([d.clone(), format!("{w:.4}")]);
    }
    t.push(["effect".to_string(), format!("{effect:.4}")]);
    t
}

/// JSON shape shared by the synthetic-control commands.
#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub method: String,
    pub weights: BTreeMap<String, f64>,
    pub mspe: f64,
    pub effect: f64,
    pub path: Vec<(i32, f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_weights: Option<BTreeMap<i32, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

impl From<&ScmSolution> for SynthReport {
    fn from(s: &ScmSolution) -> Self {
        Self {
            method: "scm".into(),
            weights: s.weights.clone(),
            mspe: s.mspe,
            effect: s.effect,
            path: s.path.clone(),
            time_weights: None,
            ridge: None,
        }
    }
}

#[derive(Default)]
struct Group {
    workers: std::collections::BTreeSet<String>,
    rows: usize,
    wage: f64,
    hours: f64,
    age: f64,
    tenure: f64,
    female: f64,
    informal: f64,
    race: BTreeMap<String, f64>,
    education: [f64; 3],
}

/// Pre-treatment descriptive statistics by group.
pub fn summary_table(panel: &Panel) -> Table {
    let mut groups = [Group::default(), Group::default()];
    for o in panel.observations().iter().filter(|o| o.year < panel.treatment_year) {
        let g = &mut groups[usize::from(o.state != panel.treated_state)];
        g.workers.insert(o.worker_id.clone());
        g.rows += 1;
        g.wage += o.monthly_wage;
        g.hours += o.weekly_hours;
        g.age += o.age;
        g.tenure += o.tenure;
        g.female += f64::from(u8::from(o.female));
        g.informal += f64::from(u8::from(o.informal));
        *g.race.entry(o.race.clone()).or_default() += 1.0;
        g.education[Education::ALL.iter().position(|e| *e == o.education).unwrap_or(0)] += 1.0;
    }
    let races: std::collections::BTreeSet<String> =
        groups.iter().flat_map(|g| g.race.keys().cloned()).collect();
    let mut t = Table::new([
        "variable".to_string(),
        format!("treated ({})", panel.treated_state),
        "control".to_string(),
    ]);
    let mean = |g: &Group, v: f64| if g.rows == 0 { f64::NAN } else { v / g.rows as f64 };
    let mut stat = |name: &str, f: &dyn Fn(&Group) -> f64, digits: usize| {
        t.push([
            name.to_string(),
            format!("{:.digits$}", mean(&groups[0], f(&groups[0]))),
            format!("{:.digits$}", mean(&groups[1], f(&groups[1]))),
        ]);
    };
    stat("monthly_wage", &|g| g.wage, 2);
    stat("weekly_hours", &|g| g.hours, 2);
    stat("age", &|g| g.age, 2);
    stat("tenure_months", &|g| g.tenure, 2);
    stat("female", &|g| g.female, 3);
    for r in &races {
        stat(&format!("race_{r}"), &|g| g.race.get(r).copied().unwrap_or(0.0), 3);
    }
    for (i, e) in Education::ALL.iter().enumerate() {
        stat(&format!("education_{e}"), &|g| g.education[i], 3);
    }
    stat("informal", &|g| g.informal, 3);
    t.push([
        "workers".to_string(),
        groups[0].workers.len().to_string(),
        groups[1].workers.len().to_string(),
    ]);
    t.push(["observations".to_string(), groups[0].rows.to_string(), groups[1].rows.to_string()]);
    t
}

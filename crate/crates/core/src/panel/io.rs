use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{Education, Observation, Panel};
use crate::error::{Error, Result};

const REQUIRED: [&str; 16] = [
    "worker_id",
    "year",
    "state",
    "municipality",
    "monthly_wage",
    "weekly_hours",
    "retained",
    "occupation_code",
    "activity_code",
    "exposed_occupation",
    "exposed_activity",
    "female",
    "race",
    "age",
    "tenure",
    "education",
];
const OPTIONAL: [&str; 3] = ["informal", "age_sq", "tenure_sq"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub panel: Panel,
    pub rejected: Vec<RejectedRow>,
}

/// Loads the worker-year file and, optionally, the municipal immigrant-share file.
pub fn load_csv(
    panel_path: &Path,
    vz_ratio_path: Option<&Path>,
    treated_state: &str,
    treatment_year: i32,
) -> Result<LoadReport> {
    let (observations, rejected) = read_observations(File::open(panel_path)?)?;
    let ratios = match vz_ratio_path {
        Some(p) => load_vz_ratio_csv(p)?,
        None => BTreeMap::new(),
    };
    let panel = Panel::new(observations, treated_state, treatment_year, ratios)?;
    Ok(LoadReport { panel, rejected })
}

pub fn load_vz_ratio_csv(path: &Path) -> Result<BTreeMap<(String, i32), f64>> {
    read_vz_ratio(File::open(path)?)
}

enum FieldError {
    /// Unparseable; aborts the load.
    Parse(String),
    /// Parsed but outside its domain; the row is rejected.
    Domain(String),
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn raw(&self, name: &str) -> Option<&str> {
        self.index.get(name).and_then(|&i| self.record.get(i))
    }

    fn text(&self, name: &str) -> std::result::Result<String, FieldError> {
        self.raw(name)
            .map(str::to_string)
            .ok_or_else(|| FieldError::Parse(format!("missing field {name}")))
    }

    fn num(&self, name: &str) -> std::result::Result<f64, FieldError> {
        let s = self.text(name)?;
        s.trim()
            .parse::<f64>()
            .map_err(|_| FieldError::Parse(format!("{name}: cannot parse {s:?} as a number")))
    }

    fn int(&self, name: &str) -> std::result::Result<i32, FieldError> {
        let s = self.text(name)?;
        s.trim()
            .parse::<i32>()
            .map_err(|_| FieldError::Parse(format!("{name}: cannot parse {s:?} as an integer")))
    }

    fn flag(&self, name: &str) -> std::result::Result<bool, FieldError> {
        match self.int(name)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(FieldError::Domain(format!("{name} must be 0 or 1, got {v}"))),
        }
    }
}

fn parse_row(row: &Row) -> std::result::Result<Observation, FieldError> {
    let education = row
        .text("education")?
        .parse::<Education>()
        .map_err(|e| FieldError::Domain(e.to_string()))?;
    let obs = Observation {
        worker_id: row.text("worker_id")?,
        year: row.int("year")?,
        state: row.text("state")?,
        municipality: row.text("municipality")?,
        monthly_wage: row.num("monthly_wage")?,
        weekly_hours: row.num("weekly_hours")?,
        retained: row.flag("retained")?,
        occupation_code: row.text("occupation_code")?,
        activity_code: row.text("activity_code")?,
        exposed_occupation: row.flag("exposed_occupation")?,
        exposed_activity: row.flag("exposed_activity")?,
        female: row.flag("female")?,
        race: row.text("race")?,
        age: row.num("age")?,
        tenure: row.num("tenure")?,
        education,
        informal: if row.raw("informal").is_some() {
            row.flag("informal")?
        } else {
            false
        },
    };
    obs.check_domain().map_err(FieldError::Domain)?;
    if row.raw("age_sq").is_some() {
        let age_sq = row.num("age_sq")?;
        if (age_sq - obs.age_sq()).abs() > 1e-9 * obs.age_sq().max(1.0) {
            return Err(FieldError::Domain(format!(
                "age_sq {age_sq} != age^2 = {}",
                obs.age_sq()
            )));
        }
    }
    if row.raw("tenure_sq").is_some() {
        let tenure_sq = row.num("tenure_sq")?;
        if (tenure_sq - obs.tenure_sq()).abs() > 1e-9 * obs.tenure_sq().max(1.0) {
            return Err(FieldError::Domain(format!(
                "tenure_sq {tenure_sq} != tenure^2 = {}",
                obs.tenure_sq()
            )));
        }
    }
    Ok(obs)
}

/// Parses worker-year rows. Rows violating a domain rule are returned as
/// rejections; malformed rows abort with the offending line number.
pub fn read_observations<R: Read>(reader: R) -> Result<(Vec<Observation>, Vec<RejectedRow>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    for h in headers.iter() {
        let h = h.trim();
        if !REQUIRED.contains(&h) && !OPTIONAL.contains(&h) {
            return Err(Error::UnknownColumn(h.to_string()));
        }
    }
    if let Some(missing) = REQUIRED.iter().find(|c| !index.contains_key(**c)) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header lacks required column {missing}"),
        });
    }

    let mut observations = Vec::new();
    let mut rejected = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&Row {
            record: &record,
            index: &index,
        }) {
            Ok(o) => observations.push(o),
            Err(FieldError::Domain(reason)) => rejected.push(RejectedRow { line, reason }),
            Err(FieldError::Parse(message)) => {
                return Err(Error::Parse {
                    line: line as usize,
                    message,
                })
            }
        }
    }
    if observations.is_empty() && !rejected.is_empty() {
        return Err(Error::EmptyResult(format!("all {} rows were rejected", rejected.len())));
    }
    Ok((observations, rejected))
}

pub fn read_vz_ratio<R: Read>(reader: R) -> Result<BTreeMap<(String, i32), f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["municipality", "year", "ratio"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {expected:?}"),
        });
    }
    let mut map = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        let year: i32 = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad year {:?}", &record[1])))?;
        let ratio: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad ratio {:?}", &record[2])))?;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::domain(format!("line {line}: ratio {ratio} outside [0, 1]")));
        }
        if map.insert((record[0].to_string(), year), ratio).is_some() {
            return Err(parse_err(format!("duplicate ratio cell ({}, {year})", &record[0])));
        }
    }
    Ok(map)
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Canonical form: required columns in schema order plus `informal`.
pub fn write_csv<W: Write>(panel: &Panel, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.push("informal");
    wtr.write_record(&header)?;
    for o in panel.observations() {
        wtr.write_record([
            o.worker_id.clone(),
            o.year.to_string(),
            o.state.clone(),
            o.municipality.clone(),
            o.monthly_wage.to_string(),
            o.weekly_hours.to_string(),
            flag(o.retained).to_string(),
            o.occupation_code.clone(),
            o.activity_code.clone(),
            flag(o.exposed_occupation).to_string(),
            flag(o.exposed_activity).to_string(),
            flag(o.female).to_string(),
            o.race.clone(),
            o.age.to_string(),
            o.tenure.to_string(),
            o.education.to_string(),
            flag(o.informal).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_vz_ratio_csv<W: Write>(panel: &Panel, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["municipality", "year", "ratio"])?;
    for ((m, y), r) in panel.vz_ratio_map() {
        wtr.write_record([m.clone(), y.to_string(), r.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

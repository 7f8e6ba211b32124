//! Ingestion and preprocessing for the UCI Adult census files.
//!
//! Seven attributes are kept: `sex` (protected), `education` (treatment,
//! collapsed to five ordinal levels), `income` (outcome, `>50K` positive)
//! and four covariates binarized into codes 0/1:
//!
//! | covariate        | code 1                                   |
//! |------------------|------------------------------------------|
//! | `age`            | age > `age_split` (default 37, the median)|
//! | `marital_status` | Married-civ-spouse or Married-AF-spouse  |
//! | `workclass`      | Private                                  |
//! | `hours`          | hours-per-week ≥ `hours_split` (40)      |

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::io::is_missing;
use super::{Covariate, Dataset, Record, RawTable, Schema, Side};
use crate::error::{Error, Result};

pub const ADULT_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education_num",
    "marital_status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital_gain",
    "capital_loss",
    "hours_per_week",
    "native_country",
    "income",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AdultOptions {
    pub age_split: u32,
    pub hours_split: u32,
    pub married: Vec<String>,
    pub private_workclass: Vec<String>,
    pub match_attrs: Vec<String>,
}

impl Default for AdultOptions {
    fn default() -> Self {
        AdultOptions {
            age_split: 37,
            hours_split: 40,
            married: vec!["Married-civ-spouse".into(), "Married-AF-spouse".into()],
            private_workclass: vec!["Private".into()],
            match_attrs: vec!["age".into(), "marital_status".into(), "workclass".into()],
        }
    }
}

/// Five-level education coding.
pub fn education_level(label: &str) -> Option<u32> {
    Some(match label {
        "Preschool" | "1st-4th" | "5th-6th" => 0,
        "7th-8th" | "9th" | "10th" => 1,
        "11th" | "12th" | "HS-grad" => 2,
        "Some-college" | "Assoc-voc" | "Assoc-acdm" => 3,
        "Bachelors" | "Masters" | "Prof-school" | "Doctorate" => 4,
        _ => return None,
    })
}

pub fn adult_schema(match_attrs: &[String]) -> Schema {
    Schema {
        protected_attr: "sex".into(),
        protected_pos: "Male".into(),
        protected_neg: "Female".into(),
        treatment_attr: "education".into(),
        treatment_levels: (0..5).collect(),
        outcome_attr: "income".into(),
        outcome_pos: ">50K".into(),
        outcome_neg: "<=50K".into(),
        covariates: ["age", "marital_status", "workclass", "hours"]
            .into_iter()
            .map(|name| Covariate {
                name: name.into(),
                cardinality: 2,
            })
            .collect(),
        match_attrs: match_attrs.to_vec(),
    }
}

/// Reads `adult.data` / `adult.test`: no header, `, ` separated, test
/// labels carry a trailing period, and the test file opens with a
/// `|1x3 Cross validator` line.
pub fn read_uci_adult(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let mut row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if row.len() != ADULT_COLUMNS.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected 15 fields, found {}", lineno + 1, row.len()),
            });
        }
        if let Some(income) = row.last_mut() {
            if let Some(stripped) = income.strip_suffix('.') {
                *income = stripped.to_string();
            }
        }
        rows.push(row);
    }
    Ok(RawTable {
        columns: ADULT_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}

pub fn preprocess_adult(raw: &RawTable, opts: &AdultOptions) -> Result<Dataset> {
    let col = |name: &str| {
        raw.column(name)
            .ok_or_else(|| Error::Schema(format!("Adult table lacks column `{name}`")))
    };
    let c_age = col("age")?;
    let c_work = col("workclass")?;
    let c_edu = col("education")?;
    let c_mar = col("marital_status")?;
    let c_sex = col("sex")?;
    let c_hours = col("hours_per_week")?;
    let c_inc = col("income")?;
    let used = [c_age, c_work, c_edu, c_mar, c_sex, c_hours, c_inc];
    let schema = adult_schema(&opts.match_attrs);

    let mapping = |row: usize, column: usize, value: &str| Error::Mapping {
        row,
        column: raw.columns[column].clone(),
        value: value.to_string(),
    };
    let mut records = Vec::with_capacity(raw.rows.len());
    let mut dropped = 0;
    for (row, cells) in raw.rows.iter().enumerate() {
        if used.iter().any(|&c| is_missing(&cells[c])) {
            dropped += 1;
            continue;
        }
        let s = match cells[c_sex].as_str() {
            "Male" => Side::Plus,
            "Female" => Side::Minus,
            other => return Err(mapping(row, c_sex, other)),
        };
        let t = education_level(&cells[c_edu]).ok_or_else(|| mapping(row, c_edu, &cells[c_edu]))?;
        let y = match cells[c_inc].as_str() {
            ">50K" => 1,
            "<=50K" => 0,
            other => return Err(mapping(row, c_inc, other)),
        };
        let age: u32 = cells[c_age].parse().map_err(|_| mapping(row, c_age, &cells[c_age]))?;
        let hours: u32 = cells[c_hours]
            .parse()
            .map_err(|_| mapping(row, c_hours, &cells[c_hours]))?;
        let x = vec![
            u32::from(age > opts.age_split),
            u32::from(opts.married.iter().any(|m| *m == cells[c_mar])),
            u32::from(opts.private_workclass.iter().any(|w| *w == cells[c_work])),
            u32::from(hours >= opts.hours_split),
        ];
        records.push(Record {
            id: row as u64,
            s,
            t,
            x,
            y,
        });
    }
    Ok(Dataset::new(schema, records)?.with_dropped(dropped))
}

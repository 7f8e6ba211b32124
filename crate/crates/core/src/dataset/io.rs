//! CSV ingestion and write-back.
//!
//! Input files are UTF-8, comma-separated, with a header row. Cells that are
//! empty, `?` or `NA` after trimming count as missing; rows with a missing
//! value in any schema attribute are dropped and counted.
//!
//! Written files carry an `id` column followed by the schema attributes.
//! The protected attribute and the outcome are written as their labels,
//! treatment and covariates as integer codes, so a written file loads back
//! with no value maps and writes out byte-identically.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Record, Schema, Side};
use crate::error::{Error, Result};

/// Category label → integer code, per attribute. Attributes without a map
/// are read as integer codes.
pub type ValueMaps = BTreeMap<String, BTreeMap<String, u32>>;

/// An untyped table of strings with named columns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let columns = rdr.headers()?.iter().map(str::to_string).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
            // short rows are padded so the missing cells register as missing
            row.resize(columns.len(), String::new());
            rows.push(row);
        }
        Ok(RawTable { columns, rows })
    }
}

pub(crate) fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "?" | "NA")
}

fn lookup(
    maps: &ValueMaps,
    column: &str,
    cell: &str,
    row: usize,
) -> Result<u32> {
    let bad = || Error::Mapping {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    };
    match maps.get(column) {
        Some(map) => map.get(cell).copied().ok_or_else(bad),
        None => cell.parse::<u32>().map_err(|_| bad()),
    }
}

/// Maps a raw table onto `schema`. Row ids come from an `id` column when
/// present, otherwise from the 0-based row position.
pub fn parse_csv(table: &RawTable, schema: &Schema, maps: &ValueMaps) -> Result<Dataset> {
    schema.validate()?;
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let s_col = col(&schema.protected_attr)?;
    let t_col = col(&schema.treatment_attr)?;
    let y_col = col(&schema.outcome_attr)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| col(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let id_col = table.column("id");

    let mut records = Vec::with_capacity(table.rows.len());
    let mut dropped = 0;
    for (row, cells) in table.rows.iter().enumerate() {
        let used = [s_col, t_col, y_col].into_iter().chain(x_cols.iter().copied());
        if used.clone().any(|c| is_missing(&cells[c])) {
            dropped += 1;
            continue;
        }
        let s_cell = &cells[s_col];
        let s = if *s_cell == schema.protected_pos {
            Side::Plus
        } else if *s_cell == schema.protected_neg {
            Side::Minus
        } else {
            return Err(Error::Mapping {
                row,
                column: schema.protected_attr.clone(),
                value: s_cell.clone(),
            });
        };
        let y_cell = &cells[y_col];
        let y = if *y_cell == schema.outcome_pos {
            1
        } else if *y_cell == schema.outcome_neg {
            0
        } else {
            return Err(Error::Mapping {
                row,
                column: schema.outcome_attr.clone(),
                value: y_cell.clone(),
            });
        };
        let t = lookup(maps, &schema.treatment_attr, &cells[t_col], row)?;
        if schema.level_index(t).is_none() {
            return Err(Error::Mapping {
                row,
                column: schema.treatment_attr.clone(),
                value: cells[t_col].clone(),
            });
        }
        let x = schema
            .covariates
            .iter()
            .zip(&x_cols)
            .map(|(c, &j)| lookup(maps, &c.name, &cells[j], row))
            .collect::<Result<Vec<_>>>()?;
        let id = match id_col {
            Some(j) => cells[j].parse::<u64>().map_err(|_| Error::Mapping {
                row,
                column: "id".into(),
                value: cells[j].clone(),
            })?,
            None => row as u64,
        };
        records.push(Record { id, s, t, x, y });
    }

    let mut schema = schema.clone();
    for c in schema.covariates.iter_mut() {
        if c.cardinality == 0 {
            if let Some(map) = maps.get(&c.name) {
                c.cardinality = map.values().max().map_or(0, |m| m + 1);
            }
        }
    }
    Ok(Dataset::new(schema, records)?.with_dropped(dropped))
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, maps: &ValueMaps) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let table = RawTable::read(file)?;
    let d = parse_csv(&table, schema, maps)?;
    if d.dropped() > 0 {
        log::info!("{}: dropped {} rows with missing values", path.display(), d.dropped());
    }
    Ok(d)
}

pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let schema = d.schema();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(schema.attribute_names());
    w.write_record(&header)?;
    for r in d.records() {
        let mut row = vec![
            r.id.to_string(),
            schema.side_label(r.s).to_string(),
            r.t.to_string(),
        ];
        row.extend(r.x.iter().map(u32::to_string));
        row.push(if r.y == 1 {
            schema.outcome_pos.clone()
        } else {
            schema.outcome_neg.clone()
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

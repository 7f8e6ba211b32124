//! Records, schema, and the subgroup views every backend consumes.

mod adult;
mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adult::{adult_schema, preprocess_adult, read_uci_adult, AdultOptions};
pub use io::{load_csv, parse_csv, write_csv, RawTable, ValueMaps};

/// Default minimum number of comparators per side for situation testing.
pub const DEFAULT_K_MIN: usize = 10;

/// Which protected group a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// s⁺
    Plus,
    /// s⁻
    Minus,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }

    /// Node value used by the causal model: 1 for s⁺, 0 for s⁻.
    pub fn code(self) -> usize {
        match self {
            Side::Plus => 1,
            Side::Minus => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    /// Number of category codes; codes run `0..cardinality`. Zero means
    /// "infer from the data at load time".
    pub cardinality: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub protected_attr: String,
    pub protected_pos: String,
    pub protected_neg: String,
    pub treatment_attr: String,
    /// Ascending effort order.
    pub treatment_levels: Vec<u32>,
    pub outcome_attr: String,
    pub outcome_pos: String,
    pub outcome_neg: String,
    pub covariates: Vec<Covariate>,
    pub match_attrs: Vec<String>,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let levels = &self.treatment_levels;
        if levels.len() < 2 {
            return Err(Error::Schema("need at least two treatment levels".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema(format!(
                "treatment levels {levels:?} are not strictly increasing"
            )));
        }
        if self.protected_pos == self.protected_neg {
            return Err(Error::Schema("protected_pos equals protected_neg".into()));
        }
        if self.outcome_pos == self.outcome_neg {
            return Err(Error::Schema("outcome_pos equals outcome_neg".into()));
        }
        let mut names: Vec<&str> = vec![
            &self.protected_attr,
            &self.treatment_attr,
            &self.outcome_attr,
        ];
        names.extend(self.covariates.iter().map(|c| c.name.as_str()));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("attribute `{}` has more than one role", w[0])));
        }
        for m in &self.match_attrs {
            if self.covariate_index(m).is_none() {
                return Err(Error::Schema(format!("match attribute `{m}` is not a covariate")));
            }
        }
        Ok(())
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn level_index(&self, level: u32) -> Option<usize> {
        self.treatment_levels.binary_search(&level).ok()
    }

    pub fn n_levels(&self) -> usize {
        self.treatment_levels.len()
    }

    /// Every attribute name, in the column order used when writing CSV.
    pub fn attribute_names(&self) -> Vec<String> {
        let mut v = vec![self.protected_attr.clone(), self.treatment_attr.clone()];
        v.extend(self.covariate_names());
        v.push(self.outcome_attr.clone());
        v
    }

    pub fn side_label(&self, side: Side) -> &str {
        match side {
            Side::Plus => &self.protected_pos,
            Side::Minus => &self.protected_neg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: u64,
    pub s: Side,
    pub t: u32,
    pub x: Vec<u32>,
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    records: Vec<Record>,
    dropped: usize,
}

impl Dataset {
    /// Builds a dataset, checking every record against the schema.
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self> {
        schema.validate()?;
        for (row, r) in records.iter().enumerate() {
            if schema.level_index(r.t).is_none() {
                return Err(Error::Mapping {
                    row,
                    column: schema.treatment_attr.clone(),
                    value: r.t.to_string(),
                });
            }
            if r.y > 1 {
                return Err(Error::Mapping {
                    row,
                    column: schema.outcome_attr.clone(),
                    value: r.y.to_string(),
                });
            }
            if r.x.len() != schema.covariates.len() {
                return Err(Error::Schema(format!(
                    "record {} has {} covariates, schema has {}",
                    r.id,
                    r.x.len(),
                    schema.covariates.len()
                )));
            }
            for (c, &v) in schema.covariates.iter().zip(&r.x) {
                if c.cardinality > 0 && v >= c.cardinality {
                    return Err(Error::Mapping {
                        row,
                        column: c.name.clone(),
                        value: v.to_string(),
                    });
                }
            }
        }
        let mut schema = schema;
        for (j, c) in schema.covariates.iter_mut().enumerate() {
            if c.cardinality == 0 {
                let max = records.iter().map(|r| r.x[j]).max().unwrap_or(0);
                c.cardinality = (max + 1).max(2);
            }
        }
        Ok(Dataset {
            schema,
            records,
            dropped: 0,
        })
    }

    pub(crate) fn with_dropped(mut self, dropped: usize) -> Self {
        self.dropped = dropped;
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rows discarded at ingestion because of missing values.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn record(&self, id: u64) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn view(&self) -> DataView<'_> {
        DataView {
            data: self,
            rows: (0..self.records.len()).collect(),
        }
    }

    /// Same schema and covariates, new outcomes (one per record, in order).
    pub fn with_outcomes(&self, outcomes: &[u8]) -> Result<Dataset> {
        if outcomes.len() != self.records.len() {
            return Err(Error::InvalidArgument(format!(
                "{} outcomes for {} records",
                outcomes.len(),
                self.records.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(outcomes)
            .map(|(r, &y)| Record { y, ..r.clone() })
            .collect();
        Dataset::new(self.schema.clone(), records).map(|d| d.with_dropped(self.dropped))
    }
}

/// A read-only subset of a dataset's records.
#[derive(Debug, Clone)]
pub struct DataView<'a> {
    data: &'a Dataset,
    rows: Vec<usize>,
}

impl<'a> DataView<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn schema(&self) -> &'a Schema {
        &self.data.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Record> + '_ {
        let records = &self.data.records;
        self.rows.iter().map(move |&i| &records[i])
    }

    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> DataView<'a> {
        let records = &self.data.records;
        DataView {
            data: self.data,
            rows: self.rows.iter().copied().filter(|&i| keep(&records[i])).collect(),
        }
    }

    pub fn contains_id(&self, id: u64) -> bool {
        self.iter().any(|r| r.id == id)
    }

    pub fn ids(&self) -> Vec<u64> {
        self.iter().map(|r| r.id).collect()
    }

    /// Number of records at each treatment level, in schema order.
    pub fn level_counts(&self) -> Vec<usize> {
        let schema = self.schema();
        let mut counts = vec![0; schema.n_levels()];
        for r in self.iter() {
            if let Some(k) = schema.level_index(r.t) {
                counts[k] += 1;
            }
        }
        counts
    }

    pub fn outcome_mean(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.iter().map(|r| f64::from(r.y)).sum::<f64>() / self.len() as f64)
    }
}

/// Splits `d` into (D⁺, D⁻).
pub fn partition(d: &Dataset) -> Result<(DataView<'_>, DataView<'_>)> {
    if d.is_empty() {
        return Err(Error::DegeneratePartition("dataset is empty".into()));
    }
    let all = d.view();
    let plus = all.filter(|r| r.s == Side::Plus);
    let minus = all.filter(|r| r.s == Side::Minus);
    for (view, side) in [(&plus, Side::Plus), (&minus, Side::Minus)] {
        if view.is_empty() {
            return Err(Error::DegeneratePartition(format!(
                "no records with {} = {}",
                d.schema.protected_attr,
                d.schema.side_label(side)
            )));
        }
    }
    Ok((plus, minus))
}

/// Situation-testing comparators for record `id`: every record sharing its
/// treatment level and its values on `match_attrs`, split by group.
pub fn similar_subset<'a>(
    d: &'a Dataset,
    id: u64,
    match_attrs: &[String],
    k_min: usize,
) -> Result<(DataView<'a>, DataView<'a>)> {
    let target = d
        .record(id)
        .ok_or_else(|| Error::InvalidArgument(format!("no record with id {id}")))?;
    let cols = match_attrs
        .iter()
        .map(|m| {
            d.schema
                .covariate_index(m)
                .ok_or_else(|| Error::Schema(format!("match attribute `{m}` is not a covariate")))
        })
        .collect::<Result<Vec<_>>>()?;
    let same = d
        .view()
        .filter(|r| r.t == target.t && cols.iter().all(|&c| r.x[c] == target.x[c]));
    let plus = same.filter(|r| r.s == Side::Plus);
    let minus = same.filter(|r| r.s == Side::Minus);
    if plus.len() < k_min || minus.len() < k_min {
        return Err(Error::InsufficientComparators {
            record: id,
            plus: plus.len(),
            minus: minus.len(),
            k_min,
        });
    }
    Ok((plus, minus))
}

/// Which slice of the data an audit compares across groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AuditLevel {
    System,
    /// Records with `attr = value`; `attr` may be the treatment (original
    /// level) or a covariate.
    Group { attr: String, value: u32 },
    Individual { record: u64 },
}

impl fmt::Display for AuditLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditLevel::System => write!(f, "system"),
            AuditLevel::Group { attr, value } => write!(f, "group:{attr}={value}"),
            AuditLevel::Individual { record } => write!(f, "individual:{record}"),
        }
    }
}

impl std::str::FromStr for AuditLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse level `{s}`"));
        if s == "system" {
            return Ok(AuditLevel::System);
        }
        if let Some(rest) = s.strip_prefix("group:") {
            let (attr, value) = rest.split_once('=').ok_or_else(bad)?;
            return Ok(AuditLevel::Group {
                attr: attr.trim().to_string(),
                value: value.trim().parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("individual:") {
            return Ok(AuditLevel::Individual {
                record: rest.trim().parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

/// One side of an audit comparison.
///
/// `stratum` fixes covariate values; `treated_at` restricts members to an
/// observed treatment level while leaving the counterfactual level free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub side: Side,
    pub stratum: Vec<(usize, u32)>,
    pub treated_at: Option<u32>,
}

impl Subgroup {
    pub fn whole(side: Side) -> Self {
        Subgroup {
            side,
            stratum: Vec::new(),
            treated_at: None,
        }
    }

    pub fn in_pool(&self, r: &Record) -> bool {
        r.s == self.side && self.stratum.iter().all(|&(c, v)| r.x[c] == v)
    }

    pub fn contains(&self, r: &Record) -> bool {
        self.in_pool(r) && self.treated_at.is_none_or(|t| r.t == t)
    }

    /// Records the subgroup's expectations are taken over.
    pub fn members<'a>(&self, d: &'a Dataset) -> DataView<'a> {
        d.view().filter(|r| self.contains(r))
    }

    /// Same group and stratum at every treatment level: the records a
    /// counterfactual level can be estimated from.
    pub fn pool<'a>(&self, d: &'a Dataset) -> DataView<'a> {
        d.view().filter(|r| self.in_pool(r))
    }

    pub fn describe(&self, schema: &Schema) -> String {
        let mut parts = vec![format!("{}={}", schema.protected_attr, schema.side_label(self.side))];
        for &(c, v) in &self.stratum {
            parts.push(format!("{}={v}", schema.covariates[c].name));
        }
        if let Some(t) = self.treated_at {
            parts.push(format!("{}={t}", schema.treatment_attr));
        }
        parts.join(",")
    }
}

/// The (s⁺, s⁻) subgroups an audit at `level` compares.
pub fn level_subgroups(d: &Dataset, level: &AuditLevel, k_min: usize) -> Result<(Subgroup, Subgroup)> {
    let schema = d.schema();
    let (stratum, treated_at) = match level {
        AuditLevel::System => (Vec::new(), None),
        AuditLevel::Group { attr, value } => {
            if *attr == schema.treatment_attr {
                if schema.level_index(*value).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "{value} is not a treatment level"
                    )));
                }
                (Vec::new(), Some(*value))
            } else {
                let c = schema.covariate_index(attr).ok_or_else(|| {
                    Error::Schema(format!("group attribute `{attr}` is not a covariate or the treatment"))
                })?;
                (vec![(c, *value)], None)
            }
        }
        AuditLevel::Individual { record } => {
            similar_subset(d, *record, &schema.match_attrs, k_min)?;
            let r = d.record(*record).expect("checked by similar_subset");
            let stratum = schema
                .match_attrs
                .iter()
                .map(|m| {
                    let c = schema.covariate_index(m).expect("validated schema");
                    (c, r.x[c])
                })
                .collect();
            (stratum, Some(r.t))
        }
    };
    let plus = Subgroup {
        side: Side::Plus,
        stratum: stratum.clone(),
        treated_at,
    };
    let minus = Subgroup {
        side: Side::Minus,
        stratum,
        treated_at,
    };
    for g in [&plus, &minus] {
        if g.members(d).is_empty() {
            return Err(Error::DegeneratePartition(format!(
                "no records in {} at level {level}",
                g.describe(schema)
            )));
        }
    }
    Ok((plus, minus))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn partition_counts() {
        let recs = vec![
            rec(0, Side::Plus, 0, &[0], 1),
            rec(1, Side::Minus, 1, &[1], 0),
            rec(2, Side::Plus, 1, &[0], 0),
            rec(3, Side::Minus, 0, &[1], 1),
        ];
        let d = Dataset::new(schema(1, 2), recs).unwrap();
        let (p, m) = partition(&d).unwrap();
        assert_eq!((p.len(), m.len()), (2, 2));
        assert_eq!(p.ids(), vec![0, 2]);
    }

    #[test]
    fn partition_rejects_one_sided_data() {
        let recs = vec![rec(0, Side::Plus, 0, &[0], 1), rec(1, Side::Plus, 1, &[1], 0)];
        let d = Dataset::new(schema(1, 2), recs).unwrap();
        assert!(matches!(partition(&d), Err(Error::DegeneratePartition(_))));
    }

    #[test]
    fn identical_covariates_give_full_comparator_sets() {
        let recs: Vec<_> = (0..6)
            .map(|i| rec(i, if i < 3 { Side::Plus } else { Side::Minus }, 1, &[1, 0], (i % 2) as u8))
            .collect();
        let d = Dataset::new(schema(2, 3), recs).unwrap();
        for id in 0..6 {
            let (p, m) = similar_subset(&d, id, &d.schema().match_attrs, 1).unwrap();
            assert_eq!((p.len(), m.len()), (3, 3));
            assert!(p.contains_id(id) || m.contains_id(id));
        }
    }

    #[test]
    fn unique_profile_has_no_comparators() {
        let recs = vec![
            rec(0, Side::Minus, 0, &[1], 1),
            rec(1, Side::Plus, 0, &[0], 0),
            rec(2, Side::Minus, 0, &[0], 0),
        ];
        let d = Dataset::new(schema(1, 2), recs).unwrap();
        let err = similar_subset(&d, 0, &["x0".to_string()], 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientComparators { plus: 0, minus: 1, .. }));
    }

    #[test]
    fn similar_subset_matches_exhaustive_scan() {
        // two strata on x0, noise on x1 which is not matched
        let mut recs = Vec::new();
        for i in 0..10u64 {
            let s = if i % 3 == 0 { Side::Plus } else { Side::Minus };
            let stratum = (i % 2) as u32;
            recs.push(rec(i, s, 1, &[stratum, (i / 5) as u32], (i % 4 == 0) as u8));
        }
        let d = Dataset::new(schema(2, 2), recs).unwrap();
        let matched = vec!["x0".to_string()];
        for target in d.records() {
            let (p, m) = similar_subset(&d, target.id, &matched, 1).unwrap();
            let mut got: Vec<u64> = p.ids().into_iter().chain(m.ids()).collect();
            got.sort_unstable();
            let expected: Vec<u64> = d
                .records()
                .iter()
                .filter(|r| r.t == target.t && r.x[0] == target.x[0])
                .map(|r| r.id)
                .collect();
            assert_eq!(got, expected);
            assert!(p.iter().all(|r| r.s == Side::Plus && r.x[0] == target.x[0]));
            assert!(m.iter().all(|r| r.s == Side::Minus && r.x[0] == target.x[0]));
        }
    }

    #[test]
    fn schema_validation() {
        let mut s = schema(1, 3);
        s.treatment_levels = vec![0, 2, 1];
        assert!(s.validate().is_err());
        let mut s = schema(1, 3);
        s.treatment_levels = vec![0];
        assert!(s.validate().is_err());
        let mut s = schema(1, 3);
        s.protected_neg = s.protected_pos.clone();
        assert!(s.validate().is_err());
        let mut s = schema(1, 3);
        s.match_attrs = vec!["nope".into()];
        assert!(s.validate().is_err());
        let mut s = schema(1, 3);
        s.covariates[0].name = "t".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn level_parsing() {
        assert_eq!("system".parse::<AuditLevel>().unwrap(), AuditLevel::System);
        assert_eq!(
            "group:education=0".parse::<AuditLevel>().unwrap(),
            AuditLevel::Group {
                attr: "education".into(),
                value: 0
            }
        );
        assert_eq!(
            "individual:42".parse::<AuditLevel>().unwrap(),
            AuditLevel::Individual { record: 42 }
        );
        assert!("group:education".parse::<AuditLevel>().is_err());
    }
}

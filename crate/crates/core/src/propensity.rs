//! Generalized-propensity-score weighting.
//!
//! r(t, x) = P(T = t | X = x) comes from a multinomial logit over the
//! treatment levels with one-hot covariate codes as features. The
//! counterfactual mean of group "treated at t, moved to t′" reweights the
//! records observed at t′ by ω(t, t′) = r(t, x) / r(t′, x).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataView, Record};
use crate::error::{Error, Result};
use crate::regress::{fit_glm, GlmFit};

/// Weights in a cell are winsorized at this quantile.
pub const DEFAULT_CAP_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsModel {
    pub glm: GlmFit,
    pub levels: Vec<u32>,
    pub cardinalities: Vec<u32>,
    pub cap_quantile: f64,
}

fn one_hot(x: &[u32], cards: &[u32]) -> Vec<f64> {
    let mut f = Vec::new();
    for (&v, &card) in x.iter().zip(cards) {
        for code in 1..card {
            f.push(f64::from(u8::from(v == code)));
        }
    }
    f
}

/// Fits r(t, x) on `view`. Every treatment level must appear at least twice.
pub fn fit_gps(view: &DataView<'_>) -> Result<GpsModel> {
    let schema = view.schema();
    let cards: Vec<u32> = schema.covariates.iter().map(|c| c.cardinality).collect();
    for (level, count) in schema.treatment_levels.iter().zip(view.level_counts()) {
        if count < 2 {
            return Err(Error::MissingLevel {
                level: *level,
                count,
            });
        }
    }
    let features: Vec<Vec<f64>> = view.iter().map(|r| one_hot(&r.x, &cards)).collect();
    let labels: Vec<usize> = view
        .iter()
        .map(|r| schema.level_index(r.t).expect("validated dataset"))
        .collect();
    let glm = fit_glm(&features, &labels, schema.n_levels())?;
    if !glm.converged {
        log::warn!(
            "propensity model stopped after {} iterations with gradient norm {:.3e}",
            glm.iterations,
            glm.gradient_norm
        );
    }
    Ok(GpsModel {
        glm,
        levels: schema.treatment_levels.clone(),
        cardinalities: cards,
        cap_quantile: DEFAULT_CAP_QUANTILE,
    })
}

impl GpsModel {
    fn index(&self, level: u32) -> Result<usize> {
        self.levels
            .binary_search(&level)
            .map_err(|_| Error::InvalidArgument(format!("{level} is not a treatment level")))
    }

    /// r(·, x) over all levels.
    pub fn probabilities(&self, x: &[u32]) -> Vec<f64> {
        self.glm.probabilities(&one_hot(x, &self.cardinalities))
    }

    pub fn probability(&self, x: &[u32], level: u32) -> Result<f64> {
        Ok(self.probabilities(x)[self.index(level)?])
    }

    /// ω(t, t′) = r(t, x) / r(t′, x), before any capping; exactly 1 when
    /// `t == t_prime`.
    pub fn weight(&self, x: &[u32], t: u32, t_prime: u32) -> Result<f64> {
        let (a, b) = (self.index(t)?, self.index(t_prime)?);
        if a == b {
            return Ok(1.0);
        }
        let p = self.probabilities(x);
        Ok(p[a] / p[b])
    }
}

pub fn weight(m: &GpsModel, r: &Record, t: u32, t_prime: u32) -> Result<f64> {
    m.weight(&r.x, t, t_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub value: f64,
    /// (Σω)² / Σω² after capping.
    pub effective_size: f64,
    pub n: usize,
}

/// Nearest-rank quantile of a non-empty slice.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Self-normalized weighted mean of `ys` under `weights`, winsorized at
/// quantile `cap_quantile`.
pub fn weighted_cell(ys: &[f64], weights: &[f64], cap_quantile: f64) -> CellEstimate {
    assert_eq!(ys.len(), weights.len());
    assert!(!ys.is_empty(), "weighted mean of an empty cell");
    let cap = quantile(weights, cap_quantile);
    let capped: Vec<f64> = weights.iter().map(|w| w.min(cap)).collect();
    // rescale by the largest weight so equal weights become exactly 1
    let max = capped.iter().copied().fold(0.0, f64::max);
    let (mut num, mut den, mut sq) = (0.0, 0.0, 0.0);
    for (y, w) in ys.iter().zip(&capped) {
        let w = w / max;
        num += y * w;
        den += w;
        sq += w * w;
    }
    CellEstimate {
        value: num / den,
        effective_size: den * den / sq,
        n: ys.len(),
    }
}

/// Ê[Y(t′) | t] over the records of `view` observed at t′.
pub fn counterfactual_expectation(
    view: &DataView<'_>,
    m: &GpsModel,
    t: u32,
    t_prime: u32,
) -> Result<CellEstimate> {
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for r in view.iter().filter(|r| r.t == t_prime) {
        ys.push(f64::from(r.y));
        ws.push(m.weight(&r.x, t, t_prime)?);
    }
    if ys.is_empty() {
        return Err(Error::EmptyCell { level: t_prime });
    }
    Ok(weighted_cell(&ys, &ws, m.cap_quantile))
}

/// Entry (t, t′) = Ê[Y(t′) | t]; `None` where no record sits at t′.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualTable {
    pub levels: Vec<u32>,
    pub entries: Vec<Vec<Option<CellEstimate>>>,
}

pub fn build_table(view: &DataView<'_>, m: &GpsModel) -> Result<CounterfactualTable> {
    let levels = m.levels.clone();
    let mut entries = Vec::with_capacity(levels.len());
    for &t in &levels {
        let mut row = Vec::with_capacity(levels.len());
        for &tp in &levels {
            row.push(match counterfactual_expectation(view, m, t, tp) {
                Ok(cell) => Some(cell),
                Err(Error::EmptyCell { .. }) => None,
                Err(e) => return Err(e),
            });
        }
        entries.push(row);
    }
    Ok(CounterfactualTable { levels, entries })
}

impl CounterfactualTable {
    pub fn get(&self, t: u32, t_prime: u32) -> Option<CellEstimate> {
        let a = self.levels.binary_search(&t).ok()?;
        let b = self.levels.binary_search(&t_prime).ok()?;
        self.entries[a][b]
    }

    /// Rows are the observed level t, columns the counterfactual level t′;
    /// unavailable cells are `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in &self.levels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (t, row) in self.levels.iter().zip(&self.entries) {
            let _ = write!(out, "{t}");
            for cell in row {
                match cell {
                    Some(c) => {
                        let _ = write!(out, ",{:.6}", c.value);
                    }
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Counterfactual mean of `members` at level t′, mixing Ê[Y(t′) | t] over
/// the members' observed treatment distribution. Cells are estimated from
/// `pool`.
pub fn group_expectation(
    members: &DataView<'_>,
    pool: &DataView<'_>,
    m: &GpsModel,
    t_prime: u32,
) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptySubgroup("no members to average over".into()));
    }
    let n = members.len() as f64;
    let mut total = 0.0;
    for (&t, count) in m.levels.iter().zip(members.level_counts()) {
        if count == 0 {
            continue;
        }
        let cell = counterfactual_expectation(pool, m, t, t_prime)?;
        total += count as f64 / n * cell.value;
    }
    Ok(total)
}

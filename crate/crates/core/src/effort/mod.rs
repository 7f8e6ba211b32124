//! Minimum effort, effort discrepancy and the average effort discrepancy.

mod backend;
mod continuous;
mod detect;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::SubgroupLine;

pub use backend::{EffortBackend, RegressionBackend, RegressionMode, ScmBackend, WeightingBackend};
pub use continuous::{
    adaptive_simpson, aed_continuous, bisect_inverse, AedMethod, ContinuousAed, ContinuousCurve,
    FnCurve,
};
pub use detect::{detect, Branch, DetectOptions, VerdictReason, DEFAULT_TAU};
pub use report::{render_comparison, render_comparison_csv, AuditReport, CurveTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Regression,
    Weighting,
    Scm,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Weighting, Backend::Regression, Backend::Scm];

    pub fn title(self) -> &'static str {
        match self {
            Backend::Regression => "Regression",
            Backend::Weighting => "Weighting",
            Backend::Scm => "SCM",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Regression => "regression",
            Backend::Weighting => "weighting",
            Backend::Scm => "scm",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(Backend::Regression),
            "weighting" => Ok(Backend::Weighting),
            "scm" => Ok(Backend::Scm),
            other => Err(Error::InvalidArgument(format!("unknown backend `{other}`"))),
        }
    }
}

/// Outcome levels γ to audit at: a finite set or a continuous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GammaSpec {
    Discrete { values: Vec<f64> },
    Range { low: f64, high: f64 },
}

impl Default for GammaSpec {
    /// {0.1, 0.2, …, 0.9}
    fn default() -> Self {
        GammaSpec::Discrete {
            values: (1..10).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

impl GammaSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GammaSpec::Discrete { values } => {
                if values.is_empty() || values.iter().any(|g| !g.is_finite()) {
                    return Err(Error::InvalidArgument("γ set must be non-empty and finite".into()));
                }
                if values.iter().any(|&g| g <= 0.0 || g >= 1.0) {
                    log::warn!("γ values outside (0, 1) are unusual for probability outcomes");
                }
            }
            GammaSpec::Range { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidArgument(format!("γ range [{low}, {high}] is empty")));
                }
            }
        }
        Ok(())
    }

    /// `n` evenly spaced points for a range (endpoints included); the set
    /// itself for a discrete spec.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match self {
            GammaSpec::Discrete { values } => values.clone(),
            GammaSpec::Range { low, high } => {
                let n = n.max(2);
                (0..n)
                    .map(|i| low + (high - low) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}

/// Expected outcome of one subgroup as a function of treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCurve {
    pub backend: Backend,
    pub subgroup: String,
    pub levels: Vec<u32>,
    /// E[Y(t)] per level; `None` where the backend could not estimate it.
    pub values: Vec<Option<f64>>,
    /// Exact affine form, for the regression backend.
    pub line: Option<SubgroupLine>,
    /// Checked, never assumed: non-decreasing over the available levels
    /// (affine curves: positive slope).
    pub monotone: bool,
}

impl OutcomeCurve {
    pub fn tabulated(backend: Backend, subgroup: String, levels: Vec<u32>, values: Vec<Option<f64>>) -> Self {
        assert_eq!(levels.len(), values.len());
        let available: Vec<f64> = values.iter().flatten().copied().collect();
        let monotone = available.windows(2).all(|w| w[1] >= w[0]);
        OutcomeCurve {
            backend,
            subgroup,
            levels,
            values,
            line: None,
            monotone,
        }
    }

    pub fn affine(backend: Backend, subgroup: String, levels: Vec<u32>, line: SubgroupLine) -> Self {
        let values = levels.iter().map(|&l| Some(line.at(f64::from(l)))).collect();
        OutcomeCurve {
            backend,
            subgroup,
            levels,
            values,
            line: Some(line),
            monotone: line.slope > 0.0,
        }
    }

    /// The same values with the affine form dropped, so effort is found by
    /// scanning levels.
    pub fn without_line(&self) -> Self {
        OutcomeCurve::tabulated(self.backend, self.subgroup.clone(), self.levels.clone(), self.values.clone())
    }

    pub fn value_at(&self, level: u32) -> Option<f64> {
        let i = self.levels.iter().position(|&l| l == level)?;
        self.values[i]
    }
}

/// Minimum treatment reaching γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Psi {
    Achieved {
        /// Treatment value; real-valued for closed-form curves.
        value: f64,
        /// Smallest actual level at or above `value`; `None` when `value`
        /// lies beyond the highest level.
        level: Option<u32>,
    },
    Unachievable,
}

impl Psi {
    pub fn value(&self) -> Option<f64> {
        match self {
            Psi::Achieved { value, .. } => Some(*value),
            Psi::Unachievable => None,
        }
    }

    pub fn level(&self) -> Option<u32> {
        match self {
            Psi::Achieved { level, .. } => *level,
            Psi::Unachievable => None,
        }
    }

    pub fn is_achieved(&self) -> bool {
        matches!(self, Psi::Achieved { .. })
    }
}

/// Slack when rounding a real treatment up to a level.
const LEVEL_EPS: f64 = 1e-9;

fn ceiling_level(levels: &[u32], value: f64) -> Option<u32> {
    levels.iter().copied().find(|&l| f64::from(l) >= value - LEVEL_EPS)
}

/// Ψ(γ) for one curve. Affine curves with a positive slope use the closed
/// form; everything else scans levels in ascending order.
pub fn min_effort(curve: &OutcomeCurve, gamma: f64) -> Psi {
    if let Some(line) = curve.line {
        if let Ok(value) = line.inverse(gamma) {
            return Psi::Achieved {
                value,
                level: ceiling_level(&curve.levels, value),
            };
        }
    }
    curve
        .levels
        .iter()
        .zip(&curve.values)
        .find(|(_, v)| v.is_some_and(|v| v >= gamma))
        .map_or(Psi::Unachievable, |(&l, _)| Psi::Achieved {
            value: f64::from(l),
            level: Some(l),
        })
}

/// δ(γ) = Ψ⁺(γ) − Ψ⁻(γ); undefined when either side is unachievable.
pub fn effort_discrepancy(plus: &Psi, minus: &Psi) -> Option<f64> {
    Some(plus.value()? - minus.value()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortPoint {
    pub gamma: f64,
    pub psi_plus: Psi,
    pub psi_minus: Psi,
    pub delta: Option<f64>,
    /// δ on the rounded-up levels.
    pub delta_levels: Option<i64>,
}

impl EffortPoint {
    pub fn new(gamma: f64, psi_plus: Psi, psi_minus: Psi) -> Self {
        let delta_levels = match (psi_plus.level(), psi_minus.level()) {
            (Some(a), Some(b)) => Some(i64::from(a) - i64::from(b)),
            _ => None,
        };
        EffortPoint {
            gamma,
            psi_plus,
            psi_minus,
            delta: effort_discrepancy(&psi_plus, &psi_minus),
            delta_levels,
        }
    }

    /// Exactly one side reaches γ.
    pub fn one_sided(&self) -> bool {
        self.psi_plus.is_achieved() != self.psi_minus.is_achieved()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortProfile {
    pub points: Vec<EffortPoint>,
}

impl EffortProfile {
    pub fn build(plus: &OutcomeCurve, minus: &OutcomeCurve, gammas: &[f64]) -> Self {
        EffortProfile {
            points: gammas
                .iter()
                .map(|&g| EffortPoint::new(g, min_effort(plus, g), min_effort(minus, g)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AedSummary {
    pub value: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

/// Mean of the defined δ(γ); γ values with an undefined δ are excluded and
/// counted.
pub fn aed_discrete(profile: &EffortProfile) -> AedSummary {
    let defined: Vec<f64> = profile.points.iter().filter_map(|p| p.delta).collect();
    let excluded = profile.points.len() - defined.len();
    let value = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    AedSummary {
        value,
        used: defined.len(),
        excluded,
    }
}

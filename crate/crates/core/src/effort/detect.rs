//! The detection driver: curves in, verdict out.

use serde::{Deserialize, Serialize};

use crate::dataset::{level_subgroups, partition, AuditLevel, Dataset, DEFAULT_K_MIN};
use crate::error::Result;

use super::{
    aed_continuous, aed_discrete, AedMethod, EffortBackend, EffortProfile, GammaSpec, OutcomeCurve,
};
use super::report::{AuditReport, CurveTable};

/// Half a treatment level.
pub const DEFAULT_TAU: f64 = 0.5;

/// γ points used for a range on the numeric branch.
const RANGE_GRID: usize = 1000;
/// γ points shown in the profile of a closed-form range audit.
const RANGE_DISPLAY: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub gamma: GammaSpec,
    pub tau: f64,
    pub level: AuditLevel,
    pub k_min: usize,
    /// Scan tabulated levels even when an affine closed form exists.
    pub force_numeric: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            gamma: GammaSpec::default(),
            tau: DEFAULT_TAU,
            level: AuditLevel::System,
            k_min: DEFAULT_K_MIN,
            force_numeric: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Affine curves over a γ range: integral of the inverse.
    ClosedFormIntegral,
    /// Affine curves at discrete γ: Ψ = (γ − a) / b.
    ClosedFormInverse,
    /// Level scan on tabulated curves.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictReason {
    Threshold,
    UnachievableAsymmetry,
    /// No γ was reachable by both groups.
    Undefined,
}

fn out_of_range(c: &OutcomeCurve) -> bool {
    c.values.iter().flatten().any(|&v| !(0.0..=1.0).contains(&v))
}

fn mean_gap(plus: &OutcomeCurve, minus: &OutcomeCurve) -> Option<f64> {
    let gaps: Vec<f64> = plus
        .values
        .iter()
        .zip(&minus.values)
        .filter_map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Audits `d` at `opts.level` with the given backend.
pub fn detect(d: &Dataset, backend: &dyn EffortBackend, opts: &DetectOptions) -> Result<AuditReport> {
    opts.gamma.validate()?;
    partition(d)?;
    let (gp, gm) = level_subgroups(d, &opts.level, opts.k_min)?;
    let (mut plus, mut minus) = backend.curves(d, &gp, &gm)?;
    for c in [&plus, &minus] {
        if out_of_range(c) {
            log::warn!("{}: expected outcome outside [0, 1]", c.subgroup);
        }
        if !c.monotone {
            log::warn!("{}: outcome curve is not monotone in treatment", c.subgroup);
        }
    }

    let closed = !opts.force_numeric
        && plus.line.is_some_and(|l| l.slope > 0.0)
        && minus.line.is_some_and(|l| l.slope > 0.0);
    if !closed {
        plus = plus.without_line();
        minus = minus.without_line();
    }

    let (branch, profile, aed, aed_method) = match (&opts.gamma, closed) {
        (GammaSpec::Range { low, high }, true) => {
            let (lp, lm) = (plus.line.expect("closed"), minus.line.expect("closed"));
            let r = aed_continuous(&lp, &lm, *low, *high)?;
            let profile = EffortProfile::build(&plus, &minus, &opts.gamma.grid(RANGE_DISPLAY));
            (Branch::ClosedFormIntegral, profile, Some(r.value), Some(r.method))
        }
        (spec, closed) => {
            let profile = EffortProfile::build(&plus, &minus, &spec.grid(RANGE_GRID));
            let branch = if closed { Branch::ClosedFormInverse } else { Branch::Numeric };
            let aed = aed_discrete(&profile).value;
            let method = matches!(spec, GammaSpec::Range { .. }).then_some(AedMethod::Grid);
            (branch, profile, aed, method)
        }
    };
    let summary = aed_discrete(&profile);
    let asymmetric = profile.points.iter().any(|p| p.one_sided());
    let (verdict, reason) = if asymmetric {
        (true, VerdictReason::UnachievableAsymmetry)
    } else if let Some(a) = aed {
        (a.abs() >= opts.tau, VerdictReason::Threshold)
    } else {
        (false, VerdictReason::Undefined)
    };
    let level_deltas: Vec<f64> = profile.points.iter().filter_map(|p| p.delta_levels).map(|v| v as f64).collect();
    let aed_levels = (!level_deltas.is_empty()).then(|| level_deltas.iter().sum::<f64>() / level_deltas.len() as f64);

    let schema = d.schema();
    Ok(AuditReport {
        backend: backend.kind(),
        level: opts.level.clone(),
        protected: schema.protected_attr.clone(),
        treatment: schema.treatment_attr.clone(),
        plus_label: schema.protected_pos.clone(),
        minus_label: schema.protected_neg.clone(),
        plus_subgroup: plus.subgroup.clone(),
        minus_subgroup: minus.subgroup.clone(),
        branch,
        gamma: opts.gamma.clone(),
        tau: opts.tau,
        aed,
        aed_method,
        aed_levels,
        used: summary.used,
        excluded: summary.excluded,
        verdict,
        reason,
        mean_gap: mean_gap(&plus, &minus),
        curves: CurveTable {
            levels: plus.levels.clone(),
            plus: plus.values.clone(),
            minus: minus.values.clone(),
            plus_monotone: plus.monotone,
            minus_monotone: minus.monotone,
            plus_line: plus.line,
            minus_line: minus.line,
        },
        profile,
    })
}

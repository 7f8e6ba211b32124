//! Audit reports: JSON, a plain-text summary, and side-by-side curve tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::AuditLevel;
use crate::error::{Error, Result};
use crate::regress::SubgroupLine;

use super::detect::{Branch, VerdictReason};
use super::{AedMethod, Backend, EffortProfile, GammaSpec, Psi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub levels: Vec<u32>,
    pub plus: Vec<Option<f64>>,
    pub minus: Vec<Option<f64>>,
    pub plus_monotone: bool,
    pub minus_monotone: bool,
    pub plus_line: Option<SubgroupLine>,
    pub minus_line: Option<SubgroupLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub backend: Backend,
    pub level: AuditLevel,
    pub protected: String,
    pub treatment: String,
    pub plus_label: String,
    pub minus_label: String,
    pub plus_subgroup: String,
    pub minus_subgroup: String,
    pub branch: Branch,
    pub gamma: GammaSpec,
    pub tau: f64,
    pub profile: EffortProfile,
    /// Signed: negative when the s⁺ group needs less treatment.
    pub aed: Option<f64>,
    pub aed_method: Option<AedMethod>,
    /// AED on effort rounded up to actual levels.
    pub aed_levels: Option<f64>,
    pub used: usize,
    pub excluded: usize,
    pub verdict: bool,
    pub reason: VerdictReason,
    /// mean over levels of E⁺(t) − E⁻(t)
    pub mean_gap: Option<f64>,
    pub curves: CurveTable,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.digits$}"))
}

fn psi(p: &Psi) -> String {
    match p {
        Psi::Unachievable => "unachievable".into(),
        Psi::Achieved { value, level } => {
            let level = level.map_or_else(|| "above top".to_string(), |l| l.to_string());
            if value.fract() == 0.0 {
                format!("{value}")
            } else {
                format!("{value:.3} (level {level})")
            }
        }
    }
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "backend: {}", self.backend.title());
        let _ = writeln!(out, "level: {}", self.level);
        let _ = writeln!(out, "groups: {} vs {}", self.plus_subgroup, self.minus_subgroup);
        out.push('\n');
        out.push_str(&render_table(&[self]));
        out.push('\n');
        let _ = writeln!(out, "{:>8}  {:>22}  {:>22}  {:>8}", "gamma", "psi+", "psi-", "delta");
        let shown: Vec<_> = if self.profile.points.len() > 25 {
            let step = self.profile.points.len() / 10;
            self.profile.points.iter().step_by(step.max(1)).collect()
        } else {
            self.profile.points.iter().collect()
        };
        for p in shown {
            let _ = writeln!(
                out,
                "{:>8.3}  {:>22}  {:>22}  {:>8}",
                p.gamma,
                psi(&p.psi_plus),
                psi(&p.psi_minus),
                opt(p.delta, 3)
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "AED: {} (|AED| {}, {} gamma used, {} excluded)",
            opt(self.aed, 4),
            opt(self.aed.map(f64::abs), 4),
            self.used,
            self.excluded
        );
        let _ = writeln!(out, "tau: {}", self.tau);
        let reason = match self.reason {
            VerdictReason::Threshold => "threshold",
            VerdictReason::UnachievableAsymmetry => "unachievable-asymmetry",
            VerdictReason::Undefined => "undefined",
        };
        let _ = writeln!(
            out,
            "verdict: {} ({reason})",
            if self.verdict { "discrimination" } else { "fair" }
        );
        out
    }
}

fn check_compatible(reports: &[&AuditReport]) -> Result<()> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to compare".into()))?;
    for r in &reports[1..] {
        if r.level != first.level {
            return Err(Error::InvalidArgument(format!(
                "cannot compare audits at different levels: {} and {}",
                first.level, r.level
            )));
        }
        if r.curves.levels != first.curves.levels || r.treatment != first.treatment {
            return Err(Error::InvalidArgument("reports use different treatment levels".into()));
        }
    }
    Ok(())
}

fn columns<'a>(reports: &[&'a AuditReport]) -> Vec<(String, &'a [Option<f64>])> {
    let first = reports[0];
    let mut cols = Vec::new();
    for plus in [true, false] {
        for r in reports {
            let label = if plus { &first.plus_label } else { &first.minus_label };
            let values = if plus { &r.curves.plus } else { &r.curves.minus };
            cols.push((format!("{label} {}", r.backend.title()), values.as_slice()));
        }
    }
    cols
}

fn render_table(reports: &[&AuditReport]) -> String {
    let treatment = &reports[0].treatment;
    let cols = columns(reports);
    let width = cols.iter().map(|(h, _)| h.len()).max().unwrap_or(0).max(6);
    let tw = treatment.len().max(5);
    let mut out = format!("{treatment:<tw$}");
    for (h, _) in &cols {
        let _ = write!(out, "  {h:>width$}");
    }
    out.push('\n');
    for (i, level) in reports[0].curves.levels.iter().enumerate() {
        let _ = write!(out, "{level:<tw$}");
        for (_, values) in &cols {
            let _ = write!(out, "  {:>width$}", opt(values[i], 3));
        }
        out.push('\n');
    }
    out
}

/// Curve values of several audits at one level: rows are treatment levels,
/// columns are group × backend.
pub fn render_comparison(reports: &[AuditReport]) -> Result<String> {
    let refs: Vec<&AuditReport> = reports.iter().collect();
    check_compatible(&refs)?;
    let mut out = format!("level: {}\n", refs[0].level);
    out.push_str(&render_table(&refs));
    out.push('\n');
    for r in &refs {
        let _ = writeln!(
            out,
            "{:<10}  AED {:>8}  verdict {}",
            r.backend.title(),
            opt(r.aed, 4),
            if r.verdict { "discrimination" } else { "fair" }
        );
    }
    Ok(out)
}

/// The comparison table as CSV with full precision.
pub fn render_comparison_csv(reports: &[AuditReport]) -> Result<String> {
    let refs: Vec<&AuditReport> = reports.iter().collect();
    check_compatible(&refs)?;
    let cols = columns(&refs);
    let mut out = refs[0].treatment.clone();
    for (h, _) in &cols {
        let _ = write!(out, ",{h}");
    }
    out.push('\n');
    for (i, level) in refs[0].curves.levels.iter().enumerate() {
        out.push_str(&level.to_string());
        for (_, values) in &cols {
            match values[i] {
                Some(v) => {
                    let _ = write!(out, ",{v:?}");
                }
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

//! Discrimination removal: refit the two group outcome models under an
//! effort-discrepancy penalty, then redraw every outcome from them.
//!
//! The objective is
//!
//! ```text
//! (SSE⁺ + SSE⁻) / n + λ · AED²,   AED = (γ̄ − a⁺)/b⁺ − (γ̄ − a⁻)/b⁻
//! ```
//!
//! where a and b are each model's intercept and slope averaged over its own
//! group's covariates. Both terms are quadratic forms or rational functions
//! of the coefficients, so the objective and its gradient come from the
//! normal equations without touching the records again.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataView, Dataset, Side};
use crate::effort::{detect, AuditReport, DetectOptions, EffortBackend, GammaSpec};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::regress::{fit_ols, NormalEquations, OutcomeModel};

/// Below this average slope the barrier switches on.
pub const SLOPE_FLOOR: f64 = 1e-3;
const BARRIER_WEIGHT: f64 = 1.0;
const MAX_ITER: usize = 100_000;
const MAX_RESTARTS: usize = 5;
const STALL_WINDOW: usize = 10;
const STALL_TOL: f64 = 1e-9;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub aed: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting at the OLS value.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairModelPair {
    pub model_plus: OutcomeModel,
    pub model_minus: OutcomeModel,
    pub lambda: f64,
    pub gamma: GammaSpec,
    pub gamma_bar: f64,
    pub diagnostics: FitDiagnostics,
}

impl FairModelPair {
    pub fn model(&self, side: Side) -> &OutcomeModel {
        match side {
            Side::Plus => &self.model_plus,
            Side::Minus => &self.model_minus,
        }
    }
}

/// The γ the penalty evaluates effort at: the mean of a discrete set, and
/// (γ₂² − γ₁²)/2 for a range.
pub fn gamma_bar(spec: &GammaSpec) -> f64 {
    match spec {
        GammaSpec::Discrete { values } => values.iter().sum::<f64>() / values.len() as f64,
        GammaSpec::Range { low, high } => (high * high - low * low) / 2.0,
    }
}

/// Per-group pieces of the objective.
struct Group {
    ne: NormalEquations,
    /// a = u·β
    u: Vec<f64>,
    /// b = v·β
    v: Vec<f64>,
}

impl Group {
    fn new(view: &DataView<'_>) -> Result<Self> {
        if view.is_empty() {
            return Err(Error::EmptySubgroup("repair needs records in both groups".into()));
        }
        let k = view.schema().covariates.len();
        let mut means = vec![0.0; k];
        for r in view.iter() {
            for (m, &x) in means.iter_mut().zip(&r.x) {
                *m += f64::from(x);
            }
        }
        means.iter_mut().for_each(|m| *m /= view.len() as f64);
        let mut u = vec![0.0; 2 + 2 * k];
        let mut v = vec![0.0; 2 + 2 * k];
        u[0] = 1.0;
        v[1] = 1.0;
        u[2..2 + k].copy_from_slice(&means);
        v[2 + k..].copy_from_slice(&means);
        Ok(Group {
            ne: NormalEquations::from_view(view),
            u,
            v,
        })
    }

    /// (Ψ̄(γ̄), ∂Ψ̄/∂β) for an affine curve with positive slope.
    fn psi(&self, beta: &[f64], gbar: f64) -> (f64, Vec<f64>) {
        let a = dot(&self.u, beta);
        let b = dot(&self.v, beta);
        let psi = (gbar - a) / b;
        let grad = self.u.iter().zip(&self.v).map(|(u, v)| -(u + psi * v) / b).collect();
        (psi, grad)
    }
}

struct Problem {
    plus: Group,
    minus: Group,
    n: f64,
    lambda: f64,
    gbar: f64,
    p: usize,
}

impl Problem {
    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.p)
    }

    fn aed(&self, theta: &[f64]) -> f64 {
        let (bp, bm) = self.split(theta);
        self.plus.psi(bp, self.gbar).0 - self.minus.psi(bm, self.gbar).0
    }

    /// Objective and gradient; infinite when an average slope is not
    /// positive.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (bp, bm) = self.split(theta);
        let mut value = (self.plus.ne.rss(bp) + self.minus.ne.rss(bm)) / self.n;
        let mut grad: Vec<f64> = self
            .plus
            .ne
            .rss_gradient(bp)
            .into_iter()
            .chain(self.minus.ne.rss_gradient(bm))
            .map(|g| g / self.n)
            .collect();
        if self.lambda == 0.0 {
            return (value, grad);
        }
        for (g, beta, offset) in [(&self.plus, bp, 0), (&self.minus, bm, self.p)] {
            let b = dot(&g.v, beta);
            if b <= 0.0 {
                return (f64::INFINITY, grad);
            }
            if b < SLOPE_FLOOR {
                let l = (SLOPE_FLOOR / b).ln();
                value += BARRIER_WEIGHT * l * l;
                for (gi, vi) in grad[offset..offset + self.p].iter_mut().zip(&g.v) {
                    *gi -= BARRIER_WEIGHT * 2.0 * l / b * vi;
                }
            }
        }
        let (psi_p, dp) = self.plus.psi(bp, self.gbar);
        let (psi_m, dm) = self.minus.psi(bm, self.gbar);
        let aed = psi_p - psi_m;
        value += self.lambda * aed * aed;
        let scale = 2.0 * self.lambda * aed;
        for (gi, d) in grad[..self.p].iter_mut().zip(&dp) {
            *gi += scale * d;
        }
        for (gi, d) in grad[self.p..].iter_mut().zip(&dm) {
            *gi -= scale * d;
        }
        (value, grad)
    }
}

struct Run {
    theta: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Gradient descent with Barzilai–Borwein trial steps and Armijo
/// backtracking. `None` when no decreasing step can be found.
fn descend(problem: &Problem, start: &[f64], first_step: f64) -> Option<Run> {
    let mut theta = start.to_vec();
    let (mut f, mut g) = problem.eval(&theta);
    if !f.is_finite() {
        return None;
    }
    let mut trace = vec![f];
    let mut step = first_step;
    for it in 0..MAX_ITER {
        let gg = dot(&g, &g);
        if gg.sqrt() < 1e-14 {
            return Some(Run { theta, trace, iterations: it, converged: true });
        }
        let mut alpha = step;
        let (next, f_next, g_next) = loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - alpha * gi).collect();
            let (fc, gc) = problem.eval(&cand);
            if fc.is_finite() && fc <= f - ARMIJO_C * alpha * gg {
                break (cand, fc, gc);
            }
            alpha *= 0.5;
            if alpha < 1e-30 {
                return None;
            }
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-20, 1e20) } else { alpha * 2.0 };
        debug_assert!(f_next <= f);
        theta = next;
        f = f_next;
        g = g_next;
        trace.push(f);
        let k = trace.len() - 1;
        if k >= STALL_WINDOW && trace[k - STALL_WINDOW] - trace[k] < STALL_TOL {
            return Some(Run { theta, trace, iterations: it + 1, converged: true });
        }
    }
    Some(Run { theta, trace, iterations: MAX_ITER, converged: false })
}

/// Minimizes the penalized objective starting from the per-group OLS fits.
pub fn fit_fair(d: &Dataset, lambda: f64, gamma: &GammaSpec) -> Result<FairModelPair> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("λ must be a finite non-negative number, got {lambda}")));
    }
    gamma.validate()?;
    let plus_view = d.view().filter(|r| r.s == Side::Plus);
    let minus_view = d.view().filter(|r| r.s == Side::Minus);
    let ols_plus = fit_ols(&plus_view)?;
    let ols_minus = fit_ols(&minus_view)?;
    let p = ols_plus.n_coefficients();
    let problem = Problem {
        plus: Group::new(&plus_view)?,
        minus: Group::new(&minus_view)?,
        n: d.len() as f64,
        lambda,
        gbar: gamma_bar(gamma),
        p,
    };
    let start: Vec<f64> = ols_plus.to_vec().into_iter().chain(ols_minus.to_vec()).collect();

    let finish = |theta: &[f64], trace: Vec<f64>, iterations, restarts, converged| {
        let (bp, bm) = theta.split_at(p);
        let schema = d.schema();
        let covariates = schema.covariate_names();
        FairModelPair {
            model_plus: OutcomeModel::from_vec(&schema.treatment_attr, &covariates, bp),
            model_minus: OutcomeModel::from_vec(&schema.treatment_attr, &covariates, bm),
            lambda,
            gamma: gamma.clone(),
            gamma_bar: problem.gbar,
            diagnostics: FitDiagnostics {
                objective: problem.eval(theta).0,
                aed: problem.aed(theta),
                iterations,
                restarts,
                converged,
                trace,
            },
        }
    };

    if lambda == 0.0 {
        let f = problem.eval(&start).0;
        return Ok(finish(&start, vec![f], 0, 0, true));
    }
    for (slope, which) in [(dot(&problem.plus.v, &start[..p]), "s+"), (dot(&problem.minus.v, &start[p..]), "s-")] {
        if slope <= 0.0 {
            return Err(Error::Optimization(format!(
                "the {which} group's least-squares slope {slope:.3e} is not positive; effort is undefined"
            )));
        }
    }

    // A conservative first step: the inverse of the largest diagonal
    // curvature of the squared-error term.
    let curvature = problem
        .plus
        .ne
        .xtx
        .iter()
        .step_by(p + 1)
        .chain(problem.minus.ne.xtx.iter().step_by(p + 1))
        .fold(0.0f64, |m, &v| m.max(2.0 * v / problem.n));
    let mut first_step = 1.0 / curvature.max(1e-12);
    for restart in 0..=MAX_RESTARTS {
        match descend(&problem, &start, first_step) {
            Some(run) => {
                if !run.converged {
                    log::warn!("repair optimizer stopped after {MAX_ITER} iterations");
                }
                log::info!(
                    "repair converged in {} iterations: objective {:.6e}, AED {:.3e}",
                    run.iterations,
                    run.trace.last().copied().unwrap_or(f64::NAN),
                    problem.aed(&run.theta)
                );
                return Ok(finish(&run.theta, run.trace, run.iterations, restart, run.converged));
            }
            None => {
                log::warn!("line search failed; restarting with a smaller step");
                first_step *= 0.1;
            }
        }
    }
    Err(Error::Optimization(format!(
        "no descent step found after {MAX_RESTARTS} restarts"
    )))
}

/// Closed-form AED of the pair with group means taken from `d`.
pub fn model_aed(p: &FairModelPair, d: &Dataset) -> Result<f64> {
    let gbar = p.gamma_bar;
    let line = |side: Side| -> Result<f64> {
        p.model(side)
            .subgroup_line(&d.view().filter(|r| r.s == side))?
            .inverse(gbar)
    };
    Ok(line(Side::Plus)? - line(Side::Minus)?)
}

/// Redraws every outcome as Bernoulli(clamp(μ)), μ from the record's own
/// group model. Record `id` draws from stream `id` of a ChaCha8 generator
/// seeded with `seed`, so each draw is independent of record order.
pub fn regenerate(d: &Dataset, p: &FairModelPair, seed: u64) -> Result<Dataset> {
    let outcomes: Vec<u8> = d
        .records()
        .iter()
        .map(|r| {
            let mu = p.model(r.s).predict_record(r).clamp(0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r.id);
            u8::from(rng.random::<f64>() < mu)
        })
        .collect();
    d.with_outcomes(&outcomes)
}

type Cell = (Side, u32, Vec<u32>, u8);

fn contingency(d: &Dataset) -> BTreeMap<Cell, f64> {
    let mut cells = BTreeMap::new();
    for r in d.records() {
        *cells.entry((r.s, r.t, r.x.clone(), r.y)).or_insert(0.0) += 1.0;
    }
    cells
}

/// χ² of the repaired (S, T, X, Y) table against the original one. Cells
/// empty in the original use an expected count of 0.5.
pub fn utility_loss(original: &Dataset, repaired: &Dataset) -> Result<f64> {
    if original.schema() != repaired.schema() {
        return Err(Error::Schema("original and repaired data have different schemas".into()));
    }
    if original.len() != repaired.len() || original.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "record counts differ or are zero: {} vs {}",
            original.len(),
            repaired.len()
        )));
    }
    let strip = |d: &Dataset| -> BTreeMap<(Side, u32, Vec<u32>), usize> {
        let mut m = BTreeMap::new();
        for r in d.records() {
            *m.entry((r.s, r.t, r.x.clone())).or_insert(0) += 1;
        }
        m
    };
    if strip(original) != strip(repaired) {
        return Err(Error::InvalidArgument("repaired data changed attributes other than the outcome".into()));
    }
    let expected = contingency(original);
    let observed = contingency(repaired);
    let mut chi2 = 0.0;
    for (cell, &o) in &observed {
        let e = expected.get(cell).copied().unwrap_or(0.5);
        chi2 += (o - e) * (o - e) / e;
    }
    for (cell, &e) in &expected {
        if !observed.contains_key(cell) {
            chi2 += e;
        }
    }
    Ok(chi2)
}

/// Audits repaired data; a successful repair yields a "fair" verdict.
pub fn verify_repair(repaired: &Dataset, backend: &dyn EffortBackend, opts: &DetectOptions) -> Result<AuditReport> {
    detect(repaired, backend, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial: f64,
    pub final_value: f64,
    pub accepted_steps: usize,
}

/// What a repair run did, written next to the repaired data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairManifest {
    pub lambda: f64,
    pub gamma: GammaSpec,
    pub gamma_bar: f64,
    pub seed: u64,
    pub objective: f64,
    pub model_aed: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub trace: TraceSummary,
    pub model_plus: OutcomeModel,
    pub model_minus: OutcomeModel,
    pub utility_loss: f64,
    pub audit_aed: Option<f64>,
    pub audit_mean_gap: Option<f64>,
    pub audit_verdict: bool,
}

impl RepairManifest {
    pub fn new(p: &FairModelPair, seed: u64, loss: f64, audit: &AuditReport) -> Self {
        let diag = &p.diagnostics;
        RepairManifest {
            lambda: p.lambda,
            gamma: p.gamma.clone(),
            gamma_bar: p.gamma_bar,
            seed,
            objective: diag.objective,
            model_aed: diag.aed,
            iterations: diag.iterations,
            restarts: diag.restarts,
            converged: diag.converged,
            trace: TraceSummary {
                initial: diag.trace.first().copied().unwrap_or(diag.objective),
                final_value: diag.trace.last().copied().unwrap_or(diag.objective),
                accepted_steps: diag.trace.len().saturating_sub(1),
            },
            model_plus: p.model_plus.clone(),
            model_minus: p.model_minus.clone(),
            utility_loss: loss,
            audit_aed: audit.aed,
            audit_mean_gap: audit.mean_gap,
            audit_verdict: audit.verdict,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

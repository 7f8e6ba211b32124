//! Multinomial logit fitted by damped Newton iterations.
//!
//! Class 0 is the reference: its coefficient row is fixed at zero. Rows
//! with identical feature vectors are pooled before fitting, which keeps
//! each Newton step proportional to the number of distinct covariate
//! profiles rather than the number of records.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    pub gradient_tol: f64,
    /// A coefficient above this magnitude is taken as a sign of separation.
    pub coefficient_cap: f64,
    /// L2 penalty used for the refit after separation.
    pub fallback_ridge: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 200,
            gradient_tol: 1e-8,
            coefficient_cap: 30.0,
            fallback_ridge: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub n_classes: usize,
    pub n_features: usize,
    /// `n_classes` rows of `[intercept, w₁..w_p]`; row 0 is all zeros.
    pub coefficients: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// True when separation forced the L2-penalized refit.
    pub penalized: bool,
    pub log_likelihood_trace: Vec<f64>,
}

impl GlmFit {
    pub fn probabilities(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.n_features);
        let eta: Vec<f64> = self.coefficients.iter().map(|w| linear(w, features)).collect();
        softmax(&eta)
    }
}

fn linear(w: &[f64], features: &[f64]) -> f64 {
    w[0] + w[1..].iter().zip(features).map(|(a, b)| a * b).sum::<f64>()
}

fn softmax(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Distinct feature rows with per-class counts.
struct Pooled {
    rows: Vec<Vec<f64>>,
    counts: Vec<Vec<f64>>,
}

fn pool(features: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Pooled {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut counts: Vec<Vec<f64>> = Vec::new();
    for (f, &label) in features.iter().zip(labels) {
        let key: Vec<u64> = f.iter().map(|v| v.to_bits()).collect();
        let i = *index.entry(key).or_insert_with(|| {
            rows.push(f.clone());
            counts.push(vec![0.0; n_classes]);
            rows.len() - 1
        });
        counts[i][label] += 1.0;
    }
    Pooled { rows, counts }
}

struct Problem<'a> {
    data: &'a Pooled,
    n_classes: usize,
    dim: usize,
    ridge: f64,
}

impl Problem<'_> {
    fn weights(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.dim]];
        w.extend(theta.chunks(self.dim).map(<[f64]>::to_vec));
        w
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        theta
            .chunks(self.dim)
            .map(|c| c[1..].iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * self.ridge
            / 2.0
    }

    /// Penalized log-likelihood.
    fn objective(&self, theta: &[f64]) -> f64 {
        let w = self.weights(theta);
        let mut ll = 0.0;
        for (row, counts) in self.data.rows.iter().zip(&self.data.counts) {
            let eta: Vec<f64> = w.iter().map(|wk| linear(wk, row)).collect();
            let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + eta.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
            for (c, e) in counts.iter().zip(&eta) {
                if *c > 0.0 {
                    ll += c * (e - lse);
                }
            }
        }
        ll - self.penalty(theta)
    }

    /// Gradient and negative Hessian of the objective.
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = theta.len();
        let dim = self.dim;
        let k1 = self.n_classes - 1;
        let w = self.weights(theta);
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        let mut z = vec![0.0; dim];
        for (row, counts) in self.data.rows.iter().zip(&self.data.counts) {
            z[0] = 1.0;
            z[1..].copy_from_slice(row);
            let eta: Vec<f64> = w.iter().map(|wk| linear(wk, row)).collect();
            let pi = softmax(&eta);
            let total: f64 = counts.iter().sum();
            for a in 0..k1 {
                let resid = counts[a + 1] - total * pi[a + 1];
                for j in 0..dim {
                    grad[a * dim + j] += resid * z[j];
                }
                for b in 0..k1 {
                    let cov = total * pi[a + 1] * (f64::from(u8::from(a == b)) - pi[b + 1]);
                    if cov == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        let zj = cov * z[j];
                        let base = (a * dim + j) * m + b * dim;
                        for l in 0..dim {
                            hess[base + l] += zj * z[l];
                        }
                    }
                }
            }
        }
        if self.ridge > 0.0 {
            for a in 0..k1 {
                for j in 1..dim {
                    let i = a * dim + j;
                    grad[i] -= self.ridge * theta[i];
                    hess[i * m + i] += self.ridge;
                }
            }
        }
        (grad, hess)
    }
}

pub fn fit_glm(features: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<GlmFit> {
    fit_glm_with(features, labels, n_classes, &GlmOptions::default())
}

pub fn fit_glm_with(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {n_classes}")));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n_features = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != n_features) {
        return Err(Error::InvalidArgument("ragged feature matrix".into()));
    }
    let mut present = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::InvalidArgument(format!("label {l} >= {n_classes} classes")));
        }
        present[l] += 1;
    }
    if let Some(missing) = present.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("class {missing} has no observations")));
    }

    let data = pool(features, labels, n_classes);
    let fit = newton(&data, n_classes, n_features, 0.0, opts)?;
    let separated = fit
        .coefficients
        .iter()
        .flatten()
        .any(|c| !c.is_finite() || c.abs() > opts.coefficient_cap);
    if !separated {
        return Ok(fit);
    }
    log::warn!(
        "logistic fit separated (|coefficient| > {}); refitting with L2 penalty {}",
        opts.coefficient_cap,
        opts.fallback_ridge
    );
    let mut fit = newton(&data, n_classes, n_features, opts.fallback_ridge, opts)?;
    fit.penalized = true;
    Ok(fit)
}

fn newton(
    data: &Pooled,
    n_classes: usize,
    n_features: usize,
    ridge: f64,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    let dim = n_features + 1;
    let problem = Problem {
        data,
        n_classes,
        dim,
        ridge,
    };
    let m = (n_classes - 1) * dim;
    let mut theta = vec![0.0; m];
    let mut current = problem.objective(&theta);
    let mut trace = vec![current];
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (grad, hess) = problem.derivatives(&theta);
        grad_norm = norm(&grad);
        if grad_norm <= opts.gradient_tol {
            converged = true;
            break;
        }
        if theta.iter().any(|c| c.abs() > opts.coefficient_cap) && ridge == 0.0 {
            break;
        }
        iterations += 1;
        let step = solve_with_jitter(&hess, m, &grad)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + alpha * s).collect();
            let value = problem.objective(&trial);
            if value.is_finite() && value >= current {
                theta = trial;
                current = value;
                accepted = true;
                break;
            }
            alpha /= 2.0;
        }
        if !accepted {
            // no ascent direction left at working precision
            break;
        }
        trace.push(current);
    }
    if !converged {
        let (grad, _) = problem.derivatives(&theta);
        grad_norm = norm(&grad);
        converged = grad_norm <= opts.gradient_tol;
    }
    let mut coefficients = vec![vec![0.0; dim]];
    coefficients.extend(theta.chunks(dim).map(<[f64]>::to_vec));
    Ok(GlmFit {
        n_classes,
        n_features,
        coefficients,
        converged,
        iterations,
        gradient_norm: grad_norm,
        penalized: false,
        log_likelihood_trace: trace,
    })
}

fn solve_with_jitter(hess: &[f64], m: usize, grad: &[f64]) -> Result<Vec<f64>> {
    if let Ok(ch) = Cholesky::factor(hess, m) {
        return Ok(ch.solve(grad));
    }
    let scale = (0..m).map(|i| hess[i * m + i].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = 1e-10 * scale;
    for _ in 0..12 {
        let mut h = hess.to_vec();
        for i in 0..m {
            h[i * m + i] += jitter;
        }
        if let Ok(ch) = Cholesky::factor(&h, m) {
            return Ok(ch.solve(grad));
        }
        jitter *= 10.0;
    }
    Err(Error::Optimization("Newton system is not positive definite".into()))
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataView, Record};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, dot, Cholesky};

/// Linear model E[Y | T, X] = β₀ + β₁T + β₂·X + β₃·X T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub treatment: String,
    pub covariates: Vec<String>,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
}

/// Subgroup-averaged model: f(t) = intercept + slope · t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupLine {
    pub intercept: f64,
    pub slope: f64,
}

impl SubgroupLine {
    pub fn at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    /// Real-valued treatment reaching `gamma`; requires a positive slope.
    pub fn inverse(&self, gamma: f64) -> Result<f64> {
        if self.slope > 0.0 {
            Ok((gamma - self.intercept) / self.slope)
        } else {
            Err(Error::NonMonotone { slope: self.slope })
        }
    }
}

/// `[1, t, x₁..x_k, x₁t..x_k t]`
pub fn design_row(t: f64, x: &[u32]) -> Vec<f64> {
    let k = x.len();
    let mut row = Vec::with_capacity(2 + 2 * k);
    row.push(1.0);
    row.push(t);
    row.extend(x.iter().map(|&v| f64::from(v)));
    row.extend(x.iter().map(|&v| f64::from(v) * t));
    row
}

impl OutcomeModel {
    pub fn n_coefficients(&self) -> usize {
        2 + 2 * self.covariates.len()
    }

    /// Coefficients in design-row order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.beta0, self.beta1];
        v.extend(&self.beta2);
        v.extend(&self.beta3);
        v
    }

    pub fn from_vec(treatment: &str, covariates: &[String], v: &[f64]) -> Self {
        let k = covariates.len();
        assert_eq!(v.len(), 2 + 2 * k, "coefficient vector length");
        OutcomeModel {
            treatment: treatment.to_string(),
            covariates: covariates.to_vec(),
            beta0: v[0],
            beta1: v[1],
            beta2: v[2..2 + k].to_vec(),
            beta3: v[2 + k..].to_vec(),
        }
    }

    pub fn predict(&self, t: f64, x: &[u32]) -> f64 {
        let mut v = self.beta0 + self.beta1 * t;
        for ((b2, b3), &xi) in self.beta2.iter().zip(&self.beta3).zip(x) {
            let xi = f64::from(xi);
            v += b2 * xi + b3 * xi * t;
        }
        v
    }

    pub fn predict_record(&self, r: &Record) -> f64 {
        self.predict(f64::from(r.t), &r.x)
    }

    /// Averages intercept and slope over the subgroup's covariates.
    pub fn subgroup_line(&self, sub: &DataView<'_>) -> Result<SubgroupLine> {
        if sub.is_empty() {
            return Err(Error::EmptySubgroup("cannot average a model over zero records".into()));
        }
        let k = self.covariates.len();
        let mut means = vec![0.0; k];
        for r in sub.iter() {
            for (m, &v) in means.iter_mut().zip(&r.x) {
                *m += f64::from(v);
            }
        }
        let n = sub.len() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        Ok(self.line_at_means(&means))
    }

    pub fn line_at_means(&self, means: &[f64]) -> SubgroupLine {
        SubgroupLine {
            intercept: self.beta0 + dot(&self.beta2, means),
            slope: self.beta1 + dot(&self.beta3, means),
        }
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string(), self.treatment.clone()];
        names.extend(self.covariates.iter().cloned());
        names.extend(self.covariates.iter().map(|c| format!("{c}*{}", self.treatment)));
        names
    }

    /// One `name = value` line per coefficient; values use Rust's
    /// shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = format!("# outcome model: treatment = {}\n", self.treatment);
        for (name, v) in self.names().iter().zip(self.to_vec()) {
            let _ = writeln!(out, "{name} = {v:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("outcome model text: {m}"));
        let mut treatment = None;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# outcome model: treatment = ") {
                treatment = Some(rest.trim().to_string());
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| bad(format!("`{line}`")))?;
            let value: f64 = value.trim().parse().map_err(|_| bad(format!("`{line}`")))?;
            entries.push((name.trim().to_string(), value));
        }
        let treatment = treatment.ok_or_else(|| bad("missing treatment header".into()))?;
        if entries.len() < 2 || entries.len() % 2 != 0 {
            return Err(bad(format!("{} coefficients", entries.len())));
        }
        let k = (entries.len() - 2) / 2;
        let covariates: Vec<String> = entries[2..2 + k].iter().map(|(n, _)| n.clone()).collect();
        let values: Vec<f64> = entries.iter().map(|(_, v)| *v).collect();
        let model = OutcomeModel::from_vec(&treatment, &covariates, &values);
        if model.names() != entries.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>() {
            return Err(bad("coefficient names out of order".into()));
        }
        Ok(model)
    }
}

/// Sufficient statistics of a least-squares problem.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub p: usize,
    pub n: usize,
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl NormalEquations {
    pub fn from_view(view: &DataView<'_>) -> Self {
        let k = view.schema().covariates.len();
        let p = 2 + 2 * k;
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        for r in view.iter() {
            let row = design_row(f64::from(r.t), &r.x);
            let y = f64::from(r.y);
            add_outer(&mut xtx, &row, 1.0);
            for (a, v) in xty.iter_mut().zip(&row) {
                *a += v * y;
            }
            yty += y * y;
        }
        NormalEquations {
            p,
            n: view.len(),
            xtx,
            xty,
            yty,
        }
    }

    pub fn solve(&self, column_names: &[String]) -> Result<Vec<f64>> {
        match Cholesky::factor(&self.xtx, self.p) {
            Ok(ch) => Ok(ch.solve(&self.xty)),
            Err(cols) => Err(Error::SingularDesign {
                columns: cols.into_iter().map(|c| column_names[c].clone()).collect(),
            }),
        }
    }

    /// Residual sum of squares ‖y − Xβ‖².
    pub fn rss(&self, beta: &[f64]) -> f64 {
        let xb = crate::linalg::mat_vec(&self.xtx, beta);
        self.yty - 2.0 * dot(beta, &self.xty) + dot(beta, &xb)
    }

    /// ∇ of ‖y − Xβ‖²: 2(XᵀXβ − Xᵀy).
    pub fn rss_gradient(&self, beta: &[f64]) -> Vec<f64> {
        let xb = crate::linalg::mat_vec(&self.xtx, beta);
        xb.iter().zip(&self.xty).map(|(a, b)| 2.0 * (a - b)).collect()
    }
}

/// Least-squares fit of the interaction model on `view`.
pub fn fit_ols(view: &DataView<'_>) -> Result<OutcomeModel> {
    let schema = view.schema();
    if view.is_empty() {
        return Err(Error::EmptySubgroup("cannot fit a model on zero records".into()));
    }
    let covariates = schema.covariate_names();
    let template = OutcomeModel::from_vec(
        &schema.treatment_attr,
        &covariates,
        &vec![0.0; 2 + 2 * covariates.len()],
    );
    let ne = NormalEquations::from_view(view);
    let beta = ne.solve(&template.names())?;
    Ok(OutcomeModel::from_vec(&schema.treatment_attr, &covariates, &beta))
}

/// Subgroup-mean prediction at forced treatment `t`.
pub fn expected_outcome(m: &OutcomeModel, sub: &DataView<'_>, t: f64) -> Result<f64> {
    Ok(m.subgroup_line(sub)?.at(t))
}

/// Treatment at which the subgroup-mean prediction equals `gamma`.
pub fn min_treatment_closed(m: &OutcomeModel, sub: &DataView<'_>, gamma: f64) -> Result<f64> {
    m.subgroup_line(sub)?.inverse(gamma)
}

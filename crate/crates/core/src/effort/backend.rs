//! The three ways of estimating a subgroup's outcome curve.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Subgroup};
use crate::error::{Error, Result};
use crate::propensity::{fit_gps, group_expectation, GpsModel, DEFAULT_CAP_QUANTILE};
use crate::regress::fit_ols;
use crate::scm::{fit_cpts, CausalGraph, ScmModel, DEFAULT_ALPHA};

use super::{Backend, OutcomeCurve};

pub trait EffortBackend {
    fn kind(&self) -> Backend;

    /// Outcome curves for the s⁺ and s⁻ subgroups, fitted once per call.
    fn curves(&self, d: &Dataset, plus: &Subgroup, minus: &Subgroup) -> Result<(OutcomeCurve, OutcomeCurve)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMode {
    /// One model per protected group, each fitted on its own records.
    #[default]
    PerGroup,
    /// One model on all records; groups differ only through covariates.
    Pooled,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegressionBackend {
    pub mode: RegressionMode,
}

impl EffortBackend for RegressionBackend {
    fn kind(&self) -> Backend {
        Backend::Regression
    }

    fn curves(&self, d: &Dataset, plus: &Subgroup, minus: &Subgroup) -> Result<(OutcomeCurve, OutcomeCurve)> {
        let pooled = match self.mode {
            RegressionMode::Pooled => Some(fit_ols(&d.view())?),
            RegressionMode::PerGroup => None,
        };
        let curve = |g: &Subgroup| -> Result<OutcomeCurve> {
            let model = match &pooled {
                Some(m) => m.clone(),
                None => fit_ols(&d.view().filter(|r| r.s == g.side))?,
            };
            let line = model.subgroup_line(&g.members(d))?;
            Ok(OutcomeCurve::affine(
                Backend::Regression,
                g.describe(d.schema()),
                d.schema().treatment_levels.clone(),
                line,
            ))
        };
        Ok((curve(plus)?, curve(minus)?))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightingBackend {
    pub cap_quantile: f64,
}

impl Default for WeightingBackend {
    fn default() -> Self {
        WeightingBackend {
            cap_quantile: DEFAULT_CAP_QUANTILE,
        }
    }
}

impl WeightingBackend {
    fn curve(&self, d: &Dataset, g: &Subgroup, gps: &GpsModel) -> Result<OutcomeCurve> {
        let members = g.members(d);
        let pool = g.pool(d);
        let levels = d.schema().treatment_levels.clone();
        let mut values = Vec::with_capacity(levels.len());
        for &t in &levels {
            values.push(match group_expectation(&members, &pool, gps, t) {
                Ok(v) => Some(v),
                Err(Error::EmptyCell { level }) => {
                    log::warn!("{}: no records at level {level}; E[Y({t})] unavailable", g.describe(d.schema()));
                    None
                }
                Err(e) => return Err(e),
            });
        }
        Ok(OutcomeCurve::tabulated(Backend::Weighting, g.describe(d.schema()), levels, values))
    }
}

impl EffortBackend for WeightingBackend {
    fn kind(&self) -> Backend {
        Backend::Weighting
    }

    /// The system level uses one propensity model over all records; finer
    /// levels fit one per protected group.
    fn curves(&self, d: &Dataset, plus: &Subgroup, minus: &Subgroup) -> Result<(OutcomeCurve, OutcomeCurve)> {
        let system = plus.stratum.is_empty() && plus.treated_at.is_none();
        let fit = |view| -> Result<GpsModel> {
            let mut m = fit_gps(&view)?;
            m.cap_quantile = self.cap_quantile;
            Ok(m)
        };
        if system {
            let gps = fit(d.view())?;
            Ok((self.curve(d, plus, &gps)?, self.curve(d, minus, &gps)?))
        } else {
            let gp = fit(d.view().filter(|r| r.s == plus.side))?;
            let gm = fit(d.view().filter(|r| r.s == minus.side))?;
            Ok((self.curve(d, plus, &gp)?, self.curve(d, minus, &gm)?))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScmBackend {
    pub graph: CausalGraph,
    pub alpha: f64,
}

impl ScmBackend {
    pub fn new(graph: CausalGraph) -> Self {
        ScmBackend {
            graph,
            alpha: DEFAULT_ALPHA,
        }
    }

    fn curve(&self, d: &Dataset, g: &Subgroup, model: &ScmModel) -> Result<OutcomeCurve> {
        let schema = d.schema();
        let roles = model.roles.as_ref().expect("fitted from a dataset");
        let mut evidence = vec![(roles.protected, g.side.code())];
        evidence.extend(g.stratum.iter().map(|&(c, v)| (roles.covariates[c], v as usize)));
        let t0 = g
            .treated_at
            .map(|t| schema.level_index(t).expect("validated level"));
        let mut values = Vec::with_capacity(schema.n_levels());
        for t in 0..schema.n_levels() {
            let p = match t0 {
                Some(t0) => model.post_intervention_on_treated(t, t0, &evidence)?,
                None => model.post_intervention(t, &evidence)?,
            };
            values.push(Some(p));
        }
        Ok(OutcomeCurve::tabulated(
            Backend::Scm,
            g.describe(schema),
            schema.treatment_levels.clone(),
            values,
        ))
    }
}

impl EffortBackend for ScmBackend {
    fn kind(&self) -> Backend {
        Backend::Scm
    }

    fn curves(&self, d: &Dataset, plus: &Subgroup, minus: &Subgroup) -> Result<(OutcomeCurve, OutcomeCurve)> {
        let model = fit_cpts(d, &self.graph, self.alpha)?;
        Ok((self.curve(d, plus, &model)?, self.curve(d, minus, &model)?))
    }
}

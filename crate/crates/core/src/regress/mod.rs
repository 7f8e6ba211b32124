//! Outcome-regression backend and the shared logistic fitter.

mod glm;
mod ols;

pub use glm::{fit_glm, fit_glm_with, GlmFit, GlmOptions};
pub use ols::{
    design_row, expected_outcome, fit_ols, min_treatment_closed, NormalEquations, OutcomeModel,
    SubgroupLine,
};

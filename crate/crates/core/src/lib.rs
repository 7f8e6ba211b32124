//! Equality-of-effort fairness auditing.
//!
//! An audit asks how much treatment (an ordinal, legitimate attribute such as
//! education) each protected group needs before its expected outcome reaches
//! a level γ, and compares the two answers. Expected potential outcomes come
//! from one of three causal backends:
//!
//! * [`regress`]: a linear outcome model with treatment interactions,
//! * [`propensity`]: generalized-propensity-score weighting,
//! * [`scm`]: a discrete structural causal model over a supplied DAG.
//!
//! [`effort`] turns those outcome curves into minimum-effort profiles, average
//! effort discrepancies and verdicts, and [`removal`] repairs a biased dataset
//! by regenerating its outcomes from a pair of effort-balanced models.

pub mod dataset;
pub mod effort;
pub mod error;
pub mod linalg;
pub mod propensity;
pub mod regress;
pub mod removal;
pub mod scm;
pub mod synth;

pub use dataset::{AuditLevel, DataView, Dataset, Record, Schema, Side, Subgroup};
pub use effort::{
    detect, AuditReport, Backend, EffortBackend, GammaSpec, OutcomeCurve, Psi, RegressionBackend,
    RegressionMode, ScmBackend, WeightingBackend,
};
pub use error::{Error, Result};
pub use regress::OutcomeModel;
pub use removal::{fit_fair, regenerate, utility_loss, FairModelPair};

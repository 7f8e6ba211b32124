//! Run configuration: a TOML file, with command-line flags layered on top.
//!
//! Relative paths inside a config file are resolved against the file's own
//! directory; paths given as flags are resolved against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eqeffort::dataset::{
    load_csv, preprocess_adult, read_uci_adult, AdultOptions, Covariate, ValueMaps, DEFAULT_K_MIN,
};
use eqeffort::effort::{DetectOptions, RegressionMode, DEFAULT_TAU};
use eqeffort::propensity::DEFAULT_CAP_QUANTILE;
use eqeffort::scm::{load_graph, DEFAULT_ALPHA};
use eqeffort::synth::{self, SynthConfig};
use eqeffort::{AuditLevel, Backend, Dataset, EffortBackend, GammaSpec, RegressionBackend, Schema, ScmBackend, WeightingBackend};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    /// Raw UCI Adult files, preprocessed with the built-in recipe.
    Adult,
    /// Generated in-process from the synthetic structural equations.
    Synthetic,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
    // synthetic only
    pub n: Option<usize>,
    pub s_effect: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSection {
    pub protected: String,
    pub protected_pos: String,
    pub protected_neg: String,
    pub treatment: String,
    pub treatment_levels: Vec<u32>,
    pub outcome: String,
    pub outcome_pos: String,
    pub outcome_neg: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Missing entries are inferred from the data.
    #[serde(default)]
    pub cardinalities: BTreeMap<String, u32>,
    #[serde(default)]
    pub match_attrs: Vec<String>,
}

impl SchemaSection {
    fn to_schema(&self) -> Schema {
        Schema {
            protected_attr: self.protected.clone(),
            protected_pos: self.protected_pos.clone(),
            protected_neg: self.protected_neg.clone(),
            treatment_attr: self.treatment.clone(),
            treatment_levels: self.treatment_levels.clone(),
            outcome_attr: self.outcome.clone(),
            outcome_pos: self.outcome_pos.clone(),
            outcome_neg: self.outcome_neg.clone(),
            covariates: self
                .covariates
                .iter()
                .map(|name| Covariate {
                    name: name.clone(),
                    cardinality: self.cardinalities.get(name).copied().unwrap_or(0),
                })
                .collect(),
            match_attrs: self.match_attrs.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub backends: Vec<Backend>,
    pub level: String,
    pub gamma: Option<Vec<f64>>,
    pub gamma_range: Option<[f64; 2]>,
    pub tau: f64,
    pub k_min: usize,
    pub force_numeric: bool,
    pub graph: Option<PathBuf>,
    pub alpha: f64,
    pub regression_mode: RegressionMode,
    pub cap_quantile: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            backends: Backend::ALL.to_vec(),
            level: "system".into(),
            gamma: None,
            gamma_range: None,
            tau: DEFAULT_TAU,
            k_min: DEFAULT_K_MIN,
            force_numeric: false,
            graph: None,
            alpha: DEFAULT_ALPHA,
            regression_mode: RegressionMode::default(),
            cap_quantile: DEFAULT_CAP_QUANTILE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairSection {
    pub lambda: f64,
    pub seed: u64,
    /// Backend used to re-audit the repaired data.
    pub backend: Backend,
}

impl Default for RepairSection {
    fn default() -> Self {
        RepairSection {
            lambda: 5.0,
            seed: 1,
            backend: Backend::Regression,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub schema: Option<SchemaSection>,
    /// Label → code maps for categorical CSV columns.
    #[serde(default)]
    pub values: ValueMaps,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub repair: RepairSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backends: Vec<Backend>,
    pub level: Option<String>,
    pub gamma: Option<Vec<f64>>,
    pub gamma_range: Option<[f64; 2]>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub graph: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.data.path);
        rebase(base, &mut cfg.audit.graph);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if !o.backends.is_empty() {
            self.audit.backends = o.backends;
        }
        if let Some(level) = o.level {
            self.audit.level = level;
        }
        // the two gamma forms are exclusive; a flag replaces either
        if o.gamma.is_some() || o.gamma_range.is_some() {
            self.audit.gamma = o.gamma;
            self.audit.gamma_range = o.gamma_range;
        }
        if let Some(tau) = o.tau {
            self.audit.tau = tau;
        }
        if let Some(lambda) = o.lambda {
            self.repair.lambda = lambda;
        }
        if let Some(seed) = o.seed {
            self.repair.seed = seed;
        }
        if o.graph.is_some() {
            self.audit.graph = o.graph;
        }
        if let Some(out) = o.out {
            self.output.dir = out;
        }
    }

    pub fn gamma(&self) -> Result<GammaSpec> {
        let spec = match (&self.audit.gamma, self.audit.gamma_range) {
            (Some(_), Some(_)) => bail!("set either gamma or gamma_range, not both"),
            (Some(values), None) => GammaSpec::Discrete { values: values.clone() },
            (None, Some([low, high])) => GammaSpec::Range { low, high },
            (None, None) => GammaSpec::default(),
        };
        spec.validate()?;
        let values = match &spec {
            GammaSpec::Discrete { values } => values.clone(),
            GammaSpec::Range { low, high } => vec![*low, *high],
        };
        if values.iter().any(|g| !(0.0..=1.0).contains(g)) {
            log::warn!("gamma outside [0, 1]; linear-probability curves may still reach it");
        }
        Ok(spec)
    }

    pub fn detect_options(&self) -> Result<DetectOptions> {
        let level: AuditLevel = self.audit.level.parse()?;
        if !(self.audit.tau >= 0.0) {
            bail!("tau must be non-negative, got {}", self.audit.tau);
        }
        if matches!(level, AuditLevel::Individual { .. }) && self.audit.k_min == 0 {
            bail!("individual audits need k_min >= 1");
        }
        Ok(DetectOptions {
            gamma: self.gamma()?,
            tau: self.audit.tau,
            level,
            k_min: self.audit.k_min,
            force_numeric: self.audit.force_numeric,
        })
    }

    /// Checks everything that does not need the data, so bad configs fail
    /// before any fitting.
    pub fn validate(&self, backends: &[Backend]) -> Result<()> {
        self.detect_options()?;
        if backends.contains(&Backend::Scm) && self.audit.graph.is_none() && self.data.format != DataFormat::Synthetic {
            bail!("the scm backend needs a causal graph (audit.graph or --graph)");
        }
        match self.data.format {
            DataFormat::Synthetic => {}
            _ if self.data.path.is_none() => bail!("data.path is required"),
            DataFormat::Csv if self.schema.is_none() => bail!("csv data needs a [schema] section"),
            _ => {}
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let d = match self.data.format {
            DataFormat::Synthetic => synth::generate(&SynthConfig {
                n: self.data.n.unwrap_or(20_000),
                s_effect: self.data.s_effect.unwrap_or(0.15),
                seed: self.data.seed.unwrap_or(0),
            }),
            DataFormat::Adult => {
                let path = self.data.path.as_ref().context("data.path is required")?;
                let raw = read_uci_adult(path).with_context(|| format!("reading {}", path.display()))?;
                preprocess_adult(&raw, &AdultOptions::default())?
            }
            DataFormat::Csv => {
                let path = self.data.path.as_ref().context("data.path is required")?;
                let schema = self.schema.as_ref().context("csv data needs a [schema] section")?.to_schema();
                load_csv(path, &schema, &self.values).with_context(|| format!("loading {}", path.display()))?
            }
        };
        if d.dropped() > 0 {
            log::info!("dropped {} rows with missing values", d.dropped());
        }
        log::info!("loaded {} records", d.len());
        Ok(d)
    }

    pub fn backend(&self, kind: Backend, d: &Dataset) -> Result<Box<dyn EffortBackend>> {
        Ok(match kind {
            Backend::Regression => Box::new(RegressionBackend {
                mode: self.audit.regression_mode,
            }),
            Backend::Weighting => Box::new(WeightingBackend {
                cap_quantile: self.audit.cap_quantile,
            }),
            Backend::Scm => {
                let graph = match (&self.audit.graph, self.data.format) {
                    (Some(path), _) => load_graph(path, d.schema()).with_context(|| format!("loading graph {}", path.display()))?,
                    (None, DataFormat::Synthetic) => synth::graph(),
                    (None, _) => bail!("the scm backend needs a causal graph (audit.graph or --graph)"),
                };
                Box::new(ScmBackend {
                    graph,
                    alpha: self.audit.alpha,
                })
            }
        })
    }
}

//! `eqeffort`: audit tabular decision data for equality of effort, repair it,
//! and compare audit reports.
//!
//! Exit codes: 0 fair (or repair effective), 2 discrimination detected (or
//! repair ineffective), 1 error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use eqeffort::effort::{render_comparison, render_comparison_csv};
use eqeffort::removal::{fit_fair, regenerate, utility_loss, verify_repair, RepairManifest};
use eqeffort::{AuditReport, Backend};

use config::{Overrides, RunConfig};

/// Environment variable holding the log filter (`error`..`trace`).
const LOG_ENV: &str = "EQEFFORT_LOG";

#[derive(Parser)]
#[command(name = "eqeffort", version, about = "Equality-of-effort discrimination audits and repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect effort discrepancies with one or more backends.
    Audit(RunArgs),
    /// Fit fair outcome models, regenerate outcomes and re-audit.
    Repair(RunArgs),
    /// Merge audit reports into one comparison table.
    Report {
        /// Audit report JSON files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for comparison.txt and comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Backends to run (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    backend: Vec<Backend>,
    /// system, group:<attr>=<value> or individual:<record id>.
    #[arg(long)]
    level: Option<String>,
    /// Discrete outcome levels, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "gamma_range")]
    gamma: Option<Vec<f64>>,
    /// Continuous outcome range as low,high.
    #[arg(long, value_delimiter = ',')]
    gamma_range: Option<Vec<f64>>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Causal graph file for the scm backend.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let gamma_range = match self.gamma_range.as_deref() {
            None => None,
            Some(&[low, high]) => Some([low, high]),
            Some(_) => anyhow::bail!("--gamma-range takes exactly two values: low,high"),
        };
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(Overrides {
            backends: self.backend,
            level: self.level,
            gamma: self.gamma,
            gamma_range,
            tau: self.tau,
            lambda: self.lambda,
            seed: self.seed,
            graph: self.graph,
            out: self.out,
        });
        Ok(cfg)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn slug(report: &AuditReport) -> String {
    let level: String = report
        .level
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    format!("{}-{level}", report.backend)
}

/// Returns whether any backend found discrimination.
fn audit(cfg: &RunConfig) -> Result<bool> {
    cfg.validate(&cfg.audit.backends)?;
    let opts = cfg.detect_options()?;
    let d = cfg.load_data()?;
    fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let mut reports = Vec::new();
    for &kind in &cfg.audit.backends {
        let backend = cfg.backend(kind, &d)?;
        let report = eqeffort::detect(&d, backend.as_ref(), &opts).with_context(|| format!("{kind} audit"))?;
        let stem = cfg.output.dir.join(slug(&report));
        write(&stem.with_extension("json"), &report.to_json()?)?;
        let text = report.to_text();
        write(&stem.with_extension("txt"), &text)?;
        println!("{text}");
        reports.push(report);
    }
    if reports.len() > 1 {
        let table = render_comparison(&reports)?;
        write(&cfg.output.dir.join("comparison.txt"), &table)?;
        write(&cfg.output.dir.join("comparison.csv"), &render_comparison_csv(&reports)?)?;
        println!("{table}");
    }
    Ok(reports.iter().any(|r| r.verdict))
}

/// Returns whether the repaired data still shows discrimination.
fn repair(cfg: &RunConfig) -> Result<bool> {
    let kind = cfg.repair.backend;
    cfg.validate(&[kind])?;
    let opts = cfg.detect_options()?;
    let d = cfg.load_data()?;
    fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let pair = fit_fair(&d, cfg.repair.lambda, &opts.gamma)?;
    log::info!(
        "fit: objective {:.6}, model AED {:.3e}, {} iterations, {} restarts",
        pair.diagnostics.objective,
        pair.diagnostics.aed,
        pair.diagnostics.iterations,
        pair.diagnostics.restarts
    );
    let repaired = regenerate(&d, &pair, cfg.repair.seed)?;
    let loss = utility_loss(&d, &repaired)?;
    let backend = cfg.backend(kind, &repaired)?;
    let report = verify_repair(&repaired, backend.as_ref(), &opts)?;

    let dir = &cfg.output.dir;
    let csv_path = dir.join("repaired.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    eqeffort::dataset::write_csv(&repaired, std::io::BufWriter::new(file))?;
    let manifest = RepairManifest::new(&pair, cfg.repair.seed, loss, &report);
    write(&dir.join("repair-manifest.json"), &manifest.to_json()?)?;
    write(&dir.join(format!("repaired-{}.json", slug(&report))), &report.to_json()?)?;

    println!("{}", report.to_text());
    println!("utility loss (chi-square): {loss:.3}");
    if report.verdict {
        println!("repair ineffective: the repaired data still shows discrimination");
    }
    Ok(report.verdict)
}

fn report(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        reports.push(AuditReport::from_json(&text).with_context(|| format!("malformed report {}", p.display()))?);
    }
    let table = render_comparison(&reports)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("comparison.txt"), &table)?;
        write(&dir.join("comparison.csv"), &render_comparison_csv(&reports)?)?;
    }
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let flagged = match cli.command {
        Command::Audit(args) => audit(&args.resolve()?)?,
        Command::Repair(args) => repair(&args.resolve()?)?,
        Command::Report { reports, out } => {
            report(&reports, out.as_deref())?;
            false
        }
    };
    Ok(if flagged { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version are not failures
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

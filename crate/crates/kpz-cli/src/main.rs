//! `kpz`: run experiments from a TOML config and record them in a manifest.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kpz::io::ExperimentManifest;
use serde_json::json;

use crate::config::SchemaError;
use crate::run::{ChecksFailed, Run};

/// Default output root when `--out` is not given; each subcommand writes
/// into its own directory below it.
const OUT_ENV: &str = "KPZ_OUT_DIR";

#[derive(Parser)]
#[command(name = "kpz", version, about = "Lattice KPZ / stochastic heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json to replay its config snapshot.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lambda=0.1 --set scaling.epsilons=[1,0.5]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: `$KPZ_OUT_DIR/<subcommand>`, else `kpz-out/<subcommand>`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Evolve one trajectory and write height snapshots.
    Simulate,
    /// Path-integral estimates of w(T, a) on one noise realization.
    Polymer,
    /// Leading-order renormalized constants.
    Renorm,
    /// Scale-uniformity checks of the multi-scale kernel bounds.
    Powercount,
    /// Exact identities of the cluster-expansion combinatorics.
    ClusterSelftest,
    /// Rescaled connected two-point functions across dyadic ε.
    Scaling,
    /// CSV inputs for the figures: covariance, power counting, drift, collapse.
    ReportData,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Polymer => "polymer",
            Command::Renorm => "renorm",
            Command::Powercount => "powercount",
            Command::ClusterSelftest => "cluster-selftest",
            Command::Scaling => "scaling",
            Command::ReportData => "report-data",
        }
    }
}

fn out_dir(common: &Common, sub: &str) -> PathBuf {
    if let Some(o) = &common.out {
        return o.clone();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("kpz-out"));
    root.join(sub)
}

fn execute(cmd: Command, common: &Common, out: PathBuf) -> Result<(PathBuf, String)> {
    let start = Instant::now();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the worker pool")?;
    }
    let mut table = match &common.config {
        Some(p) => config::load(p)?,
        None => toml::Table::new(),
    };
    for o in &common.overrides {
        config::apply_override(&mut table, o)?;
    }
    let mut run = Run::new(table, common.seed, common.replicas, out)?;
    let stale = run.dir().join("error.json");
    if stale.exists() {
        std::fs::remove_file(&stale)?;
    }
    match cmd {
        Command::Simulate => commands::simulate(&mut run)?,
        Command::Polymer => commands::polymer(&mut run)?,
        Command::Renorm => commands::renorm(&mut run)?,
        Command::Powercount => commands::powercount(&mut run)?,
        Command::ClusterSelftest => commands::cluster_selftest(&mut run)?,
        Command::Scaling => commands::scaling(&mut run)?,
        Command::ReportData => commands::report_data(&mut run)?,
    }
    let config = serde_json::to_value(&run.table)?;
    let mut manifest = ExperimentManifest::new(cmd.name(), config, run.seed, run.replicas);
    for rel in &run.outputs {
        manifest.add_output(run.dir(), rel)?;
    }
    manifest.finish(start.elapsed().as_secs_f64());
    let path = run.dir().join("manifest.json");
    manifest.write(&path)?;
    if !run.failed.is_empty() {
        return Err(ChecksFailed(run.failed.clone()).into());
    }
    Ok((path, manifest.hash))
}

/// Machine-readable record for a failed run: printed to stderr and, when
/// possible, written as `error.json` next to the outputs.
fn error_record(sub: &str, err: &anyhow::Error) -> (serde_json::Value, u8) {
    if let Some(s) = err.downcast_ref::<SchemaError>() {
        let rec = json!({ "status": "error", "subcommand": sub, "kind": "schema", "keys": s.keys(), "message": s.to_string() });
        return (rec, 2);
    }
    if let Some(c) = err.downcast_ref::<ChecksFailed>() {
        let rec = json!({ "status": "error", "subcommand": sub, "kind": "check_failed", "checks": c.0, "message": c.to_string() });
        return (rec, 3);
    }
    let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
    (json!({ "status": "error", "subcommand": sub, "kind": "runtime", "message": chain.join(": ") }), 1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = cli.command.name();
    let out = out_dir(&cli.common, sub);
    match execute(cli.command, &cli.common, out.clone()) {
        Ok((manifest, hash)) => {
            println!("{}", json!({ "status": "ok", "subcommand": sub, "manifest": manifest, "hash": hash }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (rec, code) = error_record(sub, &e);
            eprintln!("{rec}");
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), format!("{rec:#}\n"));
            }
            ExitCode::from(code)
        }
    }
}

//! Command line front end. Every flag override funnels through the same
//! key=value channel as the config file, so flag and file semantics
//! cannot drift apart. Errors print one JSON object to stderr and exit
//! nonzero; written file paths print one per line to stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use temporal_flow::pipeline::{self, RunConfig};
use temporal_flow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "temporal-flow",
    version,
    about = "Sliding-window passing analysis: graphlet profiles, entropy curves, and flow metrics"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key=value config file. TEMPORAL_FLOW_CONFIG names a fallback path.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Events CSV file.
    #[arg(long, global = true, value_name = "FILE")]
    events: Option<PathBuf>,

    /// Roster CSV file.
    #[arg(long, global = true, value_name = "FILE")]
    roster: Option<PathBuf>,

    /// Outcome-code mapping file; the builtin mapping when absent.
    #[arg(long, global = true, value_name = "FILE")]
    outcome_map: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Tabular output format: csv or json.
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<String>,

    /// Possession classes to analyze: ball-in, ball-out, or both.
    #[arg(long = "type", global = true, value_name = "TYPE")]
    type_filter: Option<String>,

    /// Significance level for the sequential profile scan.
    #[arg(long, global = true, value_name = "A")]
    alpha: Option<f64>,

    /// Seed for bootstrap resampling and synthetic generation.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Bootstrap resamples for effect-size intervals.
    #[arg(long, global = true, value_name = "N")]
    resamples: Option<usize>,

    /// Window duration in seconds.
    #[arg(long, global = true, value_name = "S")]
    window_s: Option<f64>,

    /// Window step in seconds; must divide the duration.
    #[arg(long, global = true, value_name = "S")]
    step_s: Option<f64>,

    /// Holm-adjust each scan family instead of raw sequential stopping.
    #[arg(long, global = true)]
    holm: bool,

    /// Rank-test observation unit: player or position.
    #[arg(long, global = true, value_name = "UNIT")]
    kw_unit: Option<String>,

    /// Also write the per-window snapshot dump.
    #[arg(long, global = true)]
    snapshots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the inputs; write the accounting summary.
    Ingest,
    /// Write graphlet class profiles and entropy curves per shot clock.
    Profiles,
    /// Scan shot-clock profiles for the first significant change.
    Scan,
    /// Write play-level and window-level flow metrics.
    Metrics,
    /// Write the statistical test table.
    Tests,
    /// Generate a seeded synthetic events/roster pair.
    Synth {
        /// Number of possessions to generate.
        #[arg(long, value_name = "N")]
        n_possessions: Option<usize>,
    },
    /// Run every stage and bundle all outputs into report.json.
    Report,
}

fn build_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load_base(common.config.as_deref())?;
    let path_str = |p: &PathBuf| p.display().to_string();
    if let Some(v) = &common.events {
        config.apply_kv("events", &path_str(v))?;
    }
    if let Some(v) = &common.roster {
        config.apply_kv("roster", &path_str(v))?;
    }
    if let Some(v) = &common.outcome_map {
        config.apply_kv("outcome_map", &path_str(v))?;
    }
    if let Some(v) = &common.out {
        config.apply_kv("out", &path_str(v))?;
    }
    if let Some(v) = &common.format {
        config.apply_kv("format", v)?;
    }
    if let Some(v) = &common.type_filter {
        config.apply_kv("type", v)?;
    }
    if let Some(v) = common.alpha {
        config.apply_kv("alpha", &v.to_string())?;
    }
    if let Some(v) = common.seed {
        config.apply_kv("seed", &v.to_string())?;
    }
    if let Some(v) = common.resamples {
        config.apply_kv("resamples", &v.to_string())?;
    }
    if let Some(v) = common.window_s {
        config.apply_kv("window_s", &v.to_string())?;
    }
    if let Some(v) = common.step_s {
        config.apply_kv("step_s", &v.to_string())?;
    }
    if common.holm {
        config.apply_kv("holm", "true")?;
    }
    if let Some(v) = &common.kw_unit {
        config.apply_kv("kw_unit", v)?;
    }
    if common.snapshots {
        config.apply_kv("snapshots", "true")?;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let config = build_config(&cli.common)?;
    match &cli.command {
        Command::Ingest => pipeline::cmd_ingest(&config),
        Command::Profiles => pipeline::cmd_profiles(&config),
        Command::Scan => pipeline::cmd_scan(&config),
        Command::Metrics => pipeline::cmd_metrics(&config),
        Command::Tests => pipeline::cmd_tests(&config),
        Command::Synth { n_possessions } => pipeline::cmd_synth(&config, *n_possessions),
        Command::Report => pipeline::cmd_report(&config),
    }
}

fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": { "kind": e.kind(), "message": e.to_string() }
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

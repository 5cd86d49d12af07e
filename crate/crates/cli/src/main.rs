//! `trackgym`: run baseline search policies over seeded episode batches.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use trackgym_core::config::Diagnostic;
use trackgym_core::experiment::{self, BatchSummary, EpisodeRecord};
use trackgym_core::{PolicyKind, RunConfig};

const SEED_ENV: &str = "TRACKGYM_SEED";

#[derive(Parser)]
#[command(name = "trackgym", version, about = "Radar search-and-track episode runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes per policy and print the summary table.
    Run(RunArgs),
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Run one batch per value of a single config key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config key, e.g. `tracker.sigma_v0`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config; defaults apply for anything it omits.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set scenario.target_count=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// One or more policies (comma-separated); defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<PolicyKind>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Base seed; episode i uses seed + i. Also settable via TRACKGYM_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write per-step track and truth states.
    #[arg(long)]
    log_states: bool,
    /// Write SVG line charts of the per-step means.
    #[arg(long)]
    plots: bool,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(1),
            Failure::Runtime(_) => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::Validate { config } => validate(&config),
        Command::Sweep { run, param, values } => sweep(&run, &param, &values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            f.exit_code()
        }
    }
}

fn join(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

fn validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    match RunConfig::from_toml_str(&text) {
        Ok(_) => {
            println!("{}: valid", path.display());
            Ok(())
        }
        Err(diags) => {
            for d in &diags {
                println!("{}: {d}", path.display());
            }
            Err(Failure::Config(format!(
                "{} problem(s) in {}",
                diags.len(),
                path.display()
            )))
        }
    }
}

/// File, then `TRACKGYM_SEED`, then flags; later sources win.
fn resolve_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml_str(&text).map_err(|d| Failure::Config(join(&d)))?
        }
        None => RunConfig::default(),
    };
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.run.base_seed = raw
            .trim()
            .parse()
            .map_err(|e| Failure::Config(format!("{SEED_ENV}={raw}: {e}")))?;
    }
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config = config
            .with_override(key.trim(), value.trim())
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(n) = args.episodes {
        config.run.episodes = n;
    }
    if let Some(s) = args.seed {
        config.run.base_seed = s;
    }
    if let Some(o) = &args.output {
        config.run.output_dir = o.display().to_string();
    }
    if let Some(t) = args.threads {
        config.run.threads = t;
    }
    config.run.log_states |= args.log_states;
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Failure::Config(join(&issues)));
    }
    Ok(config)
}

struct PolicyBatch {
    summary: BatchSummary,
    records: Vec<EpisodeRecord>,
}

/// Runs every requested policy into `<dir>/<policy>/`.
fn run_policies(
    config: &RunConfig,
    policies: &[PolicyKind],
    dir: &Path,
    plots: bool,
) -> Result<Vec<PolicyBatch>, Failure> {
    let mut batches = Vec::new();
    for &policy in policies {
        let mut c = config.clone();
        c.run.policy = policy;
        let records = experiment::run_batch(&c).map_err(|e| Failure::Runtime(e.to_string()))?;
        let out_dir = dir.join(policy.name());
        experiment::write_batch(&records, &out_dir).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_text(&out_dir.join("config.toml"), &c.to_toml_string())?;
        for r in records.iter().filter(|r| r.failed()) {
            eprintln!(
                "warning: {policy} episode {} (seed {}) failed: {}",
                r.episode,
                r.seed,
                r.error.as_deref().unwrap_or_default()
            );
        }
        if plots {
            write_plots(&records, &out_dir.join("plots"))?;
        }
        batches.push(PolicyBatch {
            summary: BatchSummary::from_records(policy, &records),
            records,
        });
    }
    Ok(batches)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_plots(records: &[EpisodeRecord], dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    for (name, metric) in plot::METRICS {
        let series = plot::mean_series(records, metric);
        write_text(&dir.join(format!("{name}.svg")), &plot::line_chart_svg(name, &series))?;
    }
    Ok(())
}

fn policies_or_default(args: &RunArgs, config: &RunConfig) -> Vec<PolicyKind> {
    if args.policy.is_empty() {
        vec![config.run.policy]
    } else {
        args.policy.clone()
    }
}

fn print_report(batches: &[PolicyBatch]) {
    let summaries: Vec<BatchSummary> = batches.iter().map(|b| b.summary.clone()).collect();
    print!("{}", experiment::format_table(&summaries));
    for pair in batches.windows(2) {
        if let Some(w) = experiment::compare_cov_norms(&pair[0].records, &pair[1].records) {
            println!(
                "Welch ||P|| {} vs {}: t = {:.3}, df = {:.1}, p = {:.3e}",
                pair[0].summary.policy, pair[1].summary.policy, w.t, w.degrees_of_freedom, w.p_value
            );
        }
    }
}

fn check_failures(batches: &[PolicyBatch]) -> Result<(), Failure> {
    let failed: usize = batches.iter().map(|b| b.summary.failed).sum();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} episode(s) failed")));
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = resolve_config(args)?;
    let policies = policies_or_default(args, &config);
    let dir = PathBuf::from(&config.run.output_dir);
    let batches = run_policies(&config, &policies, &dir, args.plots)?;
    print_report(&batches);
    check_failures(&batches)
}

#[derive(Serialize)]
struct SweepLine<'a> {
    param: &'a str,
    value: &'a str,
    #[serde(flatten)]
    summary: &'a BatchSummary,
}

fn sweep(args: &RunArgs, param: &str, values: &[String]) -> Result<(), Failure> {
    let base = resolve_config(args)?;
    let policies = policies_or_default(args, &base);
    // Reject bad values before anything runs.
    let configs = values
        .iter()
        .map(|v| {
            base.with_override(param, v)
                .map(|c| (v.as_str(), c))
                .map_err(|e| Failure::Config(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let root = PathBuf::from(&base.run.output_dir);
    fs::create_dir_all(&root).map_err(|e| Failure::Runtime(format!("{}: {e}", root.display())))?;
    let mut lines = String::new();
    let mut all = Vec::new();
    for (value, config) in configs {
        println!("== {param} = {value}");
        let batches = run_policies(&config, &policies, &root.join(format!("{param}={value}")), args.plots)?;
        print_report(&batches);
        for b in &batches {
            let line = SweepLine {
                param,
                value,
                summary: &b.summary,
            };
            lines.push_str(&serde_json::to_string(&line).map_err(|e| Failure::Runtime(e.to_string()))?);
            lines.push('\n');
        }
        all.extend(batches);
    }
    write_text(&root.join("sweep.jsonl"), &lines)?;
    check_failures(&all)
}

//! Command-line entry point: `run` one experiment, `grid` a hyperparameter
//! search, `analyze` a trained model or the linear theory, `report` a
//! directory of run records. Exit code 0 on success, 2 on configuration
//! errors, 3 when a run diverged.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rnncl::harness::analyze::{
    analyze_fisher, analyze_pca, analyze_subspace, analyze_theory, HEAD_RANK_THRESHOLD,
    PCA_THRESHOLD,
};
use rnncl::harness::grid::grid_search;
use rnncl::harness::report::{emit_report, read_records_dir, record_json};
use rnncl::harness::{run_experiment, ConfigMap, ExperimentConfig};
use rnncl::{Error, Result};

#[derive(Parser)]
#[command(name = "rnncl", version, about = "Continual-learning experiments on recurrent copy tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (flat key=value lines, optional [sections]).
    #[arg(long)]
    config: PathBuf,
    /// Override any config key, e.g. `--set lr=0.005`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load_map(&self) -> Result<ConfigMap> {
        let mut map = ConfigMap::from_file(&self.config)?;
        for assignment in &self.set {
            map.set_override(assignment)?;
        }
        Ok(map)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig::from_map(&self.load_map()?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one sequential-task experiment and write its run record.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory receiving the record JSON (default `runs/`).
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Search a config grid (pipe-separated values) and re-run the winner.
    Grid {
        #[command(flatten)]
        config: ConfigArgs,
        /// Keep at most this many grid points (seeded subsample).
        #[arg(long)]
        cap: Option<usize>,
        /// Comma-separated seeds; the first one drives the search.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Directory receiving `grid.json` (default `runs/`).
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Inspect a trained model or the linear capacity construction.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Collect run records from a directory into one report file.
    Report {
        /// Directory holding `*.json` run records.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: ReportFormat,
        /// Directory receiving `report.<format>` (default `.`).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Intrinsic dimensionality of the hidden state per timestep.
    Pca {
        #[command(flatten)]
        config: ConfigArgs,
        /// Cumulative explained-variance threshold.
        #[arg(long, default_value_t = PCA_THRESHOLD)]
        threshold: f64,
    },
    /// Diagonal-Fisher statistics of one parameter view.
    Fisher {
        #[command(flatten)]
        config: ConfigArgs,
        /// Shared-parameter view to summarize.
        #[arg(long, default_value = "w_hh")]
        view: String,
    },
    /// Pairwise output-head subspace similarity.
    Subspace {
        #[command(flatten)]
        config: ConfigArgs,
        /// Singular-value cutoff relative to the largest.
        #[arg(long, default_value_t = HEAD_RANK_THRESHOLD)]
        rank_threshold: f64,
    },
    /// Linear interference construction plus the exact queue network.
    Theory {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    fn name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Svg => "svg",
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rnncl: {}", e);
            match e {
                Error::Config(_) => ExitCode::from(2),
                Error::Diverged { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Grid { config, cap, seeds, out } => cmd_grid(&config, cap, &seeds, &out),
        Command::Analyze { what } => cmd_analyze(what),
        Command::Report { input, format, out } => {
            let records = read_records_dir(&input)?;
            let path = emit_report(&records, &out, format.name())?;
            println!("{} records -> {}", records.len(), path.display());
            Ok(())
        }
    }
}

fn cmd_run(config: &ConfigArgs, out: &PathBuf) -> Result<()> {
    let cfg = config.load()?;
    let record = run_experiment(&cfg)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{}_seed{}.json", record.config_hash, record.seed));
    std::fs::write(&path, record_json(&record)?)?;
    match &record.status {
        rnncl::harness::RunStatus::Ok => {
            let (during, fin) = rnncl::harness::during_final_metrics(&record)?;
            println!(
                "{} {} K={} seed={}: during {:.4} final {:.4} ({:.1}s) -> {}",
                record.method,
                record.variant,
                record.k_tasks,
                record.seed,
                during,
                fin,
                record.wall_s,
                path.display()
            );
            Ok(())
        }
        rnncl::harness::RunStatus::Failed { task, iter, what } => {
            // The record is on disk either way; the exit code says diverged.
            eprintln!("run failed at task {} iteration {}: {} -> {}", task, iter, what, path.display());
            Err(Error::Diverged { iter: *iter, what: what.clone() })
        }
    }
}

fn cmd_grid(config: &ConfigArgs, cap: Option<usize>, seeds: &[u64], out: &PathBuf) -> Result<()> {
    let map = config.load_map()?;
    let outcome = grid_search(&map, cap, seeds)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("grid.json");
    let json = serde_json::to_string_pretty(&outcome)
        .map_err(|e| Error::Invalid(format!("serialize grid outcome: {}", e)))?;
    std::fs::write(&path, json + "\n")?;
    println!("searched {} configurations -> {}", outcome.ranked.len(), path.display());
    for c in outcome.ranked.iter().take(5) {
        let overrides: Vec<String> =
            c.overrides.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
        println!(
            "  final {:.4} during {:.4} {} [{}]",
            c.final_acc,
            c.during,
            if c.ok { "ok" } else { "failed" },
            overrides.join(" ")
        );
    }
    println!(
        "best on {} seed(s): final {:.4} (variance {:.2e})",
        outcome.per_seed.len(),
        outcome.final_mean,
        outcome.final_variance
    );
    Ok(())
}

fn cmd_analyze(what: AnalyzeCommand) -> Result<()> {
    let json = match what {
        AnalyzeCommand::Pca { config, threshold } => to_json(&analyze_pca(&config.load()?, threshold)?)?,
        AnalyzeCommand::Fisher { config, view } => to_json(&analyze_fisher(&config.load()?, &view)?)?,
        AnalyzeCommand::Subspace { config, rank_threshold } => {
            to_json(&analyze_subspace(&config.load()?, rank_threshold)?)?
        }
        AnalyzeCommand::Theory { config } => to_json(&analyze_theory(&config.load()?)?)?,
    };
    println!("{}", json);
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(format!("serialize: {}", e)))
}

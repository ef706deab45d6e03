use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use localgt::harness::config::PartitionMode;
use localgt::harness::{
    build_hybrid, build_mixing, build_partition, comparison_table, load_data, run_experiment,
    run_sweep, write_outputs, ConfigError, ExperimentConfig, HarnessError, RunOutput, SweepAxis,
};
use localgt::topology::{max_degree_mixing, Graph};

/// Simulate decentralized optimization runs from TOML configs.
#[derive(Parser)]
#[command(name = "localgt", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run a single trial with this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path (overrides output.csv).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress and summary lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Also write one CSV per trial.
    #[arg(long, global = true)]
    per_trial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run one experiment per value of a single axis.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check a config and print OK.
    Validate { config: PathBuf },
    /// Print lambda_w of the max-degree mixing matrix for an edge-list file
    /// (or for the topology of a `.toml` config).
    Spectral { graph: PathBuf },
    /// Print the per-agent data assignment of the first trial.
    PartitionDump { config: PathBuf },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, g: &Global) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = &g.out {
        cfg.output.csv = Some(out.clone());
    }
    cfg.output.per_trial |= g.per_trial;
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { config } => {
            load(config, g)?;
            println!("OK");
        }
        Command::Spectral { graph } => {
            let w = if graph.extension().is_some_and(|e| e == "toml") {
                build_mixing(&load(graph, g)?)?
            } else {
                let text = std::fs::read_to_string(graph)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", graph.display())))?;
                let parsed = Graph::parse_edge_list(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", graph.display())))?;
                max_degree_mixing(&parsed).map_err(|e| Failure::Runtime(e.to_string()))?
            };
            println!("lambda_w {:?}", w.lambda_w());
        }
        Command::PartitionDump { config } => {
            let cfg = load(config, g)?;
            let (train, _) = load_data(&cfg)?;
            let seed = cfg.run.seeds[0];
            let dump = if cfg.data.partition == PartitionMode::Hybrid {
                build_hybrid(&cfg, &train, seed)?
                    .coupling
                    .assignment()
                    .to_dump()
            } else {
                build_partition(&cfg, &train, seed)?.to_dump()
            };
            print!("{dump}");
        }
        Command::Run { config } => {
            let cfg = load(config, g)?;
            let result = run_experiment(&cfg);
            let out = match &result {
                Ok(out) => out,
                Err(HarnessError::Diverged { partial, .. }) => partial.as_ref(),
                Err(_) => return Err(result.unwrap_err().into()),
            };
            emit(&cfg, out, g)?;
            result?;
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = load(config, g)?;
            let points = run_sweep(&cfg, *axis, values)?;
            for p in &points {
                if let Some(csv) = &p.config.output.csv {
                    let path = sweep_csv_path(csv, *axis, &p.value);
                    write_outputs(&p.output, &path, p.config.output.per_trial)?;
                }
            }
            print!("{}", comparison_table(*axis, &points));
        }
    }
    Ok(())
}

/// `run.csv` becomes `run.<axis>=<value>.csv`.
fn sweep_csv_path(csv: &Path, axis: SweepAxis, value: &str) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    csv.with_file_name(format!("{stem}.{axis}={value}.csv"))
}

fn emit(cfg: &ExperimentConfig, out: &RunOutput, g: &Global) -> Result<(), Failure> {
    if let Some(csv) = &cfg.output.csv {
        write_outputs(out, csv, cfg.output.per_trial)?;
    }
    if g.quiet {
        return Ok(());
    }
    eprintln!(
        "{}: {} trial(s), lambda_w {:.6}, {:.2?}",
        out.algorithm.name(),
        out.trials.len(),
        out.lambda_w,
        out.wall_clock
    );
    if let Some(last) = out.final_record() {
        let acc = last
            .test_acc
            .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        eprintln!(
            "round {} messages {} train_loss {:.6e} test_acc {} stat_gap {:.6e}",
            last.round, last.comm_messages, last.train_loss, acc, last.stat_gap
        );
    }
    for t in &out.thresholds {
        let hit = t
            .round
            .map_or_else(|| "never".to_string(), |r| r.to_string());
        eprintln!("{:?} {} reached at round {hit}", t.metric, t.value);
    }
    if cfg.output.csv.is_none() {
        print!(
            "{}",
            localgt::harness::records_to_csv(&out.records, out.is_hybrid())
        );
    }
    Ok(())
}

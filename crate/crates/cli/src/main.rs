use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedsvm_core::harness::{compare_strategies, parse_config, run_experiment, sv_sweep, RunConfig};
use fedsvm_core::Error;

#[derive(Parser)]
#[command(name = "fedsvm", version, about = "Federated learning simulations with SVM-guided aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Replace the config's seeds, e.g. `--seed-override 0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Evaluate every N rounds (the final round is always evaluated).
    #[arg(long)]
    eval_stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over all configured seeds.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several configs that differ only in strategy and tabulate them.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Support-vector counts over a grid of embedding sizes and client counts.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        clients: Vec<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

enum Failure {
    Config(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig, Failure> {
    let mut c = parse_config(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e),
        e => e.into(),
    })?;
    if let Some(seeds) = &o.seed_override {
        c = c.with_seeds(seeds.clone());
    }
    if let Some(dir) = &o.output_dir {
        c.output_dir = dir.clone();
    }
    if let Some(stride) = o.eval_stride {
        c.eval_stride = stride;
    }
    c.validate()?;
    Ok(c)
}

fn failed_seeds(n: usize) -> Result<(), Failure> {
    if n == 0 {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{n} seed(s) failed")))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let c = load(&config, &overrides)?;
            let report = run_experiment(&c)?;
            print!("{}", std::fs::read_to_string(c.output_dir.join("summary.txt")).unwrap_or_default());
            failed_seeds(report.failures.len())
        }
        Command::Compare { configs, overrides } => {
            let configs = configs
                .iter()
                .map(|p| load(p, &overrides))
                .collect::<Result<Vec<_>, _>>()?;
            let dir = overrides
                .output_dir
                .clone()
                .unwrap_or_else(|| configs[0].output_dir.clone());
            let (table, reports) = compare_strategies(&configs, &dir)?;
            print!("{}", table.render_text());
            failed_seeds(reports.iter().map(|r| r.failures.len()).sum())
        }
        Command::Sweep {
            config,
            dims,
            clients,
            overrides,
        } => {
            let c = load(&config, &overrides)?;
            let cells = sv_sweep(&c, &dims, &clients, &c.output_dir)?;
            println!("{:>6} {:>6} {:>6} {:>10} {:>8}", "d", "C", "round", "sv_count", "f1");
            for cell in &cells {
                println!(
                    "{:>6} {:>6} {:>6} {:>10.2} {:>8.4}",
                    cell.embedding_dim,
                    cell.clients_per_round,
                    cell.round,
                    cell.mean_sv_count().unwrap_or(f64::NAN),
                    cell.mean_f1().unwrap_or(f64::NAN)
                );
            }
            failed_seeds(cells.iter().map(|c| c.failed_seeds).sum())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

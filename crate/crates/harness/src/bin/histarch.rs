use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use histarch_core::Algorithm;
use histarch_harness::output::{read_config_file, recompute_tables, render_table, write_results};
use histarch_harness::{run_experiment, ExperimentConfig, HarnessError, Result};

#[derive(Parser)]
#[command(name = "histarch", version, about = "Benchmark HR-CMA-ES against its baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write tables and run records to --out.
    Run(RunArgs),
    /// Recompute the tables of a result directory from its stored runs.
    Stats {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with the same fields as the flags; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Problem dimension of the suite: 2d, 10d or 30d.
    #[arg(long)]
    suite: Option<String>,
    /// Comma-separated subset of hr, cmaes, cnrga_lru, cnrga.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Comma-separated problem names to keep from the suite.
    #[arg(long, value_delimiter = ',')]
    problems: Option<Vec<String>>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seeds both the suite's shifts/rotations and the runs.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    error_floor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    gnuplot: bool,
    #[arg(long)]
    dump_tree: bool,
    #[arg(long, env = "HISTARCH_WORKERS")]
    workers: Option<usize>,
}

fn parse_suite(s: &str) -> Result<usize> {
    match s.to_ascii_lowercase().as_str() {
        "2d" => Ok(2),
        "10d" => Ok(10),
        "30d" => Ok(30),
        other => Err(HarnessError::Config(format!("unknown suite '{other}' (expected 2d, 10d or 30d)"))),
    }
}

fn build_config(args: RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(path) => read_config_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &args.suite {
        c.dim = parse_suite(s)?;
    }
    if let Some(list) = &args.algos {
        c.algorithms = list.iter().map(|a| a.parse::<Algorithm>()).collect::<Result<_, _>>()?;
    }
    if let Some(p) = args.problems {
        c.problems = p;
    }
    if let Some(b) = args.budget {
        c.budget = b;
    }
    if let Some(r) = args.runs {
        c.runs = r;
    }
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(s) = args.seed {
        c.suite_seed = s;
        c.base_seed = s;
    }
    if let Some(f) = args.error_floor {
        c.error_floor = f;
    }
    if let Some(o) = args.out {
        c.out = o;
    }
    c.trace |= args.trace;
    c.gnuplot |= args.gnuplot;
    c.dump_tree |= args.dump_tree;
    if args.workers.is_some() {
        c.workers = args.workers;
    }
    c.validate()?;
    Ok(c)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = build_config(args)?;
            let result = run_experiment(&config)?;
            write_results(&config, &result)?;
            print!("{}", render_table(&result.table));
            eprintln!("results written to {}", config.out.display());
        }
        Command::Stats { input } => {
            let table = recompute_tables(&input)?;
            print!("{}", render_table(&table));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

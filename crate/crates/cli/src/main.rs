use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rottcc_core::harness::{self, Scenario};
use rottcc_core::AlgorithmId;

#[derive(Parser)]
#[command(name = "rottcc", version, about = "Run loss-differentiation scenarios on a simulated MANET")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV reports.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run this seed only, instead of the scenario's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated algorithm ids, replacing the scenario's list.
        #[arg(long, value_delimiter = ',')]
        algo: Option<Vec<String>>,
        /// Also dump per-run event, sender and sample traces into <out>/trace.
        #[arg(long)]
        trace: bool,
    },
    /// List the available algorithm ids.
    ListAlgos,
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    harness::parse_scenario(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(
    path: &Path,
    out: &Path,
    seed: Option<u64>,
    algo: Option<Vec<String>>,
    trace: bool,
) -> Result<()> {
    let mut scenario = load(path)?;
    if let Some(seed) = seed {
        scenario.seeds = vec![seed];
    }
    if let Some(list) = algo {
        let algos = list
            .iter()
            .map(|s| s.trim().parse::<AlgorithmId>())
            .collect::<Result<Vec<_>, _>>()?;
        if algos.is_empty() {
            bail!("--algo needs at least one algorithm id");
        }
        scenario.algorithms = algos;
    }
    let batch = harness::run_batch(&scenario, trace)
        .with_context(|| format!("running scenario `{}`", scenario.name))?;
    harness::write_report(&batch.report, out)?;
    if trace {
        let dir = out.join("trace");
        for (key, output) in &batch.outputs {
            harness::write_traces(key, output, &dir)?;
        }
    }
    println!(
        "{}: {} runs, reports in {}",
        scenario.name,
        batch.report.cells.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            algo,
            trace,
        } => run(&scenario, &out, seed, algo, trace),
        Command::ListAlgos => {
            for a in AlgorithmId::ALL {
                println!("{:<10} {}", a.as_str(), a.describe());
            }
            Ok(())
        }
        Command::Validate { scenario } => load(&scenario).map(|s| {
            let points = s.points().len();
            println!(
                "{}: ok ({} point(s), {} algorithm(s), {} seed(s))",
                s.name,
                points,
                s.algorithms.len(),
                s.seeds.len()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

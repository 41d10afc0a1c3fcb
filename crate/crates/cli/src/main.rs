use std::path::PathBuf;
use std::process::ExitCode;

use capalloc_core::experiments::{
    allocate_portfolio, optimize_portfolio, run_experiment, AllocateMethod, CovarianceSource,
    ExperimentName, ExperimentSpec, RunConfig, Solver, DEFAULT_MC_SAMPLES,
};
use capalloc_core::portfolio::load_portfolio;
use capalloc_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capalloc", version, about = "Capital allocation and local capital optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate a portfolio's capital to its units.
    Allocate {
        #[arg(long)]
        portfolio: PathBuf,
        /// standalone, euler, shapley, mc, linear or hierarchy
        #[arg(long)]
        method: AllocateMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the local capital optimization around the current position.
    Optimize {
        #[arg(long)]
        portfolio: PathBuf,
        /// identity, rho=<value> or file:<path>
        #[arg(long, default_value = "identity")]
        cov: CovarianceSource,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        z: f64,
        /// full or crude
        #[arg(long, default_value = "full")]
        solver: Solver,
        /// Shrinkage toward the diagonal for file covariances.
        #[arg(long, default_value_t = 0.0)]
        shrinkage: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce one of the tables or figures as CSV.
    Experiment {
        /// table1, table2, table3, fig1, fig2 or fig3
        #[arg(long)]
        name: ExperimentName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> capalloc_core::Result<()> {
    match cli.command {
        Command::Allocate { portfolio, method, seed, samples, out } => {
            let p = load_portfolio(&portfolio)?;
            let config = RunConfig { samples, seed, ..RunConfig::default() };
            let report = allocate_portfolio(&p, method, &config)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("allocation.csv");
            report.write(&path)?;
            println!("total {}", report.allocation.total());
            println!("wrote {}", path.display());
        }
        Command::Optimize { portfolio, cov, epsilon, z, solver, shrinkage, seed, samples, out } => {
            let p = load_portfolio(&portfolio)?;
            let config = RunConfig { samples, seed, shrinkage };
            let report = optimize_portfolio(&p, &cov, epsilon, z, solver, &config)?;
            for (key, value) in report.summary() {
                println!("{key} {value}");
            }
            for path in report.write(&out, "optimization")? {
                println!("wrote {}", path.display());
            }
        }
        Command::Experiment { name, seed, samples, out } => {
            let spec = ExperimentSpec { name, seed, samples, out_dir: out };
            for path in run_experiment(&spec)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        2
    } else {
        1
    }
}

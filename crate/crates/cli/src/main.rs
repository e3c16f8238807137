//! `cocm`: command-line front end for the cost-of-capital margin engines.

mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Failure};
use output::{Format, Table};

#[derive(Parser)]
#[command(name = "cocm", version, about = "Cost-of-capital margin valuation")]
struct Cli {
    /// Worker threads for the parallel engines.
    #[arg(long, global = true, env = "COCM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Seed for Monte Carlo commands, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact nested binomial valuation of a term life portfolio, swept over T.
    Binomial(Common),
    /// Gaussian approximation of one or more cohorts, swept over T.
    GaussianApprox(Common),
    /// Best estimate, SCR and Method 2 risk margin, swept over T.
    Eiopa(Common),
    /// AR(1) cash flow: coefficients β and value intercepts δ.
    Ar(Common),
    /// Gaussian cash flow value and bounds.
    Gaussian(Common),
    /// Exact tree valuation and nested Monte Carlo.
    Oracle(Common),
}

type Runner = fn(&str, &Context) -> Result<Table, Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    let (common, runner): (Common, Runner) = match cli.command {
        Command::Binomial(c) => (c, commands::binomial),
        Command::GaussianApprox(c) => (c, commands::gaussian_approx),
        Command::Eiopa(c) => (c, commands::eiopa),
        Command::Ar(c) => (c, commands::ar),
        Command::Gaussian(c) => (c, commands::gaussian),
        Command::Oracle(c) => (c, commands::oracle),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let ctx = Context {
        base: common
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
        seed: common.seed,
    };
    let table = runner(&text, &ctx)?;
    let written = match &common.out {
        Some(path) => File::create(path).and_then(|f| {
            let mut w = BufWriter::new(f);
            table.write(common.format, &mut w)?;
            w.flush()
        }),
        None => table.write(common.format, io::stdout().lock()),
    };
    written.map_err(|e| Failure::Config(format!("cannot write output: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report(&Failure::Config(e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

fn report(f: &Failure) {
    let doc = serde_json::json!({ "error": f.kind(), "message": f.message() });
    eprintln!("{doc}");
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ife_core::assembly::Method;
use ife_core::benchmarks::BenchmarkId;
use ife_core::experiment::{format_table, run, DumpPaths, OutputFormat, RunConfig};

#[derive(Parser)]
#[command(
    name = "ife-lab",
    version,
    about = "Convergence studies for partially penalized IFE methods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement study and print its convergence table.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Circle,
    Cardioid,
    Ring,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sym,
    Inc,
    Nonsym,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(clap::Args)]
struct RunArgs {
    benchmark: Benchmark,
    #[arg(long, value_enum, default_value = "sym")]
    method: MethodArg,
    /// Coefficients on the minus and plus sides.
    #[arg(long, num_args = 2, value_names = ["B_MINUS", "B_PLUS"])]
    beta: Option<Vec<f64>>,
    /// Penalty parameter; defaults depend on the method.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Refinement levels; level n has grid spacing 1/n.
    #[arg(long, num_args = 1..)]
    levels: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    #[arg(long)]
    dump_system: Option<PathBuf>,
    #[arg(long)]
    dump_recovery: Option<PathBuf>,
    /// Permit levels above 512.
    #[arg(long)]
    allow_large: bool,
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("IFE_LAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("IFE_LAB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("IFE_LAB_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run_command(args: RunArgs) -> Result<()> {
    let benchmark = match args.benchmark {
        Benchmark::Circle => BenchmarkId::Circle,
        Benchmark::Cardioid => BenchmarkId::Cardioid,
        Benchmark::Ring => BenchmarkId::Ring,
    };
    let method = match args.method {
        MethodArg::Sym => Method::Symmetric,
        MethodArg::Inc => Method::Incomplete,
        MethodArg::Nonsym => Method::Nonsymmetric,
    };
    let mut config = RunConfig::new(benchmark, method);
    if let Some(b) = &args.beta {
        config = config.with_beta(b[0], b[1]);
    }
    if let Some(levels) = &args.levels {
        config = config.with_levels(levels);
    }
    config.sigma0 = args.sigma0;
    config.allow_large = args.allow_large;
    config.format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Markdown => OutputFormat::Markdown,
    };
    config.dumps = DumpPaths {
        mesh: args.dump_mesh,
        system: args.dump_system,
        recovery: args.dump_recovery,
    };

    let output = run(&config)?;
    let table = format_table(&output.table, config.format);
    match &args.out {
        Some(path) => {
            std::fs::write(path, table).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => run_command(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Refinement studies: the per-level pipeline and table formatting.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assembly::{solve_linear, solve_semilinear, Method, PenaltyConfig, ProblemSpec};
use crate::benchmarks::BenchmarkId;
use crate::error::{Error, Result};
use crate::ife::FemSpace;
use crate::metrics::{compute_errors, ConvergenceTable, ErrorReport};
use crate::recovery::Recovery;
use crate::solver::SolverOptions;

/// Largest level accepted without an explicit opt-in.
pub const LARGE_LEVEL: usize = 512;
/// Relative snapping tolerance used when the default one leaves a degenerate cut.
pub const RETRY_SNAP_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" => Ok(OutputFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DumpPaths {
    pub mesh: Option<PathBuf>,
    pub system: Option<PathBuf>,
    pub recovery: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub benchmark: BenchmarkId,
    pub method: Method,
    pub beta: Option<(f64, f64)>,
    pub sigma0: Option<f64>,
    pub levels: Vec<usize>,
    pub format: OutputFormat,
    pub dumps: DumpPaths,
    pub allow_large: bool,
    pub solver: SolverOptions,
}

impl RunConfig {
    pub fn new(benchmark: BenchmarkId, method: Method) -> Self {
        RunConfig {
            benchmark,
            method,
            beta: None,
            sigma0: None,
            levels: benchmark.default_levels(),
            format: OutputFormat::Csv,
            dumps: DumpPaths::default(),
            allow_large: false,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_levels(mut self, levels: &[usize]) -> Self {
        self.levels = levels.to_vec();
        self
    }

    pub fn with_beta(mut self, beta_minus: f64, beta_plus: f64) -> Self {
        self.beta = Some((beta_minus, beta_plus));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument("no levels given".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "levels must be strictly increasing".into(),
            ));
        }
        if let Some(&big) = self.levels.iter().find(|&&n| n > LARGE_LEVEL) {
            if !self.allow_large {
                return Err(Error::InvalidArgument(format!(
                    "level {big} exceeds {LARGE_LEVEL}; pass --allow-large to run it"
                )));
            }
        }
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma0 must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// One refinement level's results.
#[derive(Clone, Debug)]
pub struct LevelResult {
    pub report: ErrorReport,
    pub newton_iterations: Option<usize>,
    pub linear_iterations: usize,
    pub penalty: PenaltyConfig,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub levels: Vec<LevelResult>,
    pub table: ConvergenceTable,
}

/// Builds and classifies the mesh and the IFE space, retrying once with a looser
/// snapping tolerance if an interface element is degenerate.
pub fn build_space(benchmark: BenchmarkId, spec: &ProblemSpec, n: usize) -> Result<FemSpace> {
    let space = benchmark
        .mesh(n)?
        .classify(&spec.level_set)
        .and_then(|m| FemSpace::new(m, &*spec.beta_minus, &*spec.beta_plus));
    match space {
        Err(Error::DegenerateCut { element, rcond }) => {
            log::warn!(
                "n={n}: degenerate cut in element {element} (rcond {rcond:.2e}); reclassifying with snap tolerance {RETRY_SNAP_TOLERANCE:e}"
            );
            let mesh = benchmark
                .mesh(n)?
                .classify_with_snap(&spec.level_set, RETRY_SNAP_TOLERANCE)?;
            FemSpace::new(mesh, &*spec.beta_minus, &*spec.beta_plus)
        }
        other => other,
    }
}

fn max_beta(space: &FemSpace, spec: &ProblemSpec) -> f64 {
    space
        .mesh()
        .vertices
        .iter()
        .flat_map(|p| [(spec.beta_minus)(*p), (spec.beta_plus)(*p)])
        .fold(0.0, f64::max)
}

/// Dump path for one level: unchanged for single-level runs, `<path>.n<level>` otherwise.
pub fn level_path(path: &Path, n: usize, multi: bool) -> PathBuf {
    if multi {
        let mut s = path.as_os_str().to_owned();
        s.push(format!(".n{n}"));
        PathBuf::from(s)
    } else {
        path.to_path_buf()
    }
}

pub fn run_level(config: &RunConfig, spec: &ProblemSpec, n: usize) -> Result<LevelResult> {
    let start = Instant::now();
    let multi = config.levels.len() > 1;
    let space = build_space(config.benchmark, spec, n)?;
    let t_space = start.elapsed().as_secs_f64();
    if let Some(p) = &config.dumps.mesh {
        space.mesh().dump(&level_path(p, n, multi))?;
    }

    let mut penalty = PenaltyConfig::for_method(config.method, max_beta(&space, spec));
    if let Some(s) = config.sigma0 {
        penalty.sigma0 = s;
    }

    let (u_h, newton_iterations, linear_iterations) = if spec.nonlinearity.is_some() {
        let (u, stats) = solve_semilinear(&space, spec, &penalty, &config.solver)?;
        log::info!(
            "n={n}: Newton converged in {} iterations (residual {:.2e})",
            stats.iterations,
            stats.residual
        );
        if let Some(p) = &config.dumps.system {
            let sys = crate::assembly::assemble(&space, spec, &penalty)?;
            write_system(&sys, &level_path(p, n, multi))?;
        }
        (u, Some(stats.iterations), stats.linear_iterations)
    } else {
        let (u, stats, sys) = solve_linear(&space, spec, &penalty, &config.solver)?;
        if let Some(p) = &config.dumps.system {
            write_system(&sys, &level_path(p, n, multi))?;
        }
        (u, None, stats.iterations)
    };
    let t_solve = start.elapsed().as_secs_f64();

    let recovery = Recovery::new(space.mesh())?;
    let field = recovery.recover(&space, &u_h);
    if let Some(p) = &config.dumps.recovery {
        field.dump(&recovery.submesh, &level_path(p, n, multi))?;
    }
    let t_recover = start.elapsed().as_secs_f64();

    let mut report = compute_errors(
        &space,
        &u_h,
        Some((&recovery.submesh, &field)),
        spec,
        &penalty,
    )?;
    report.level = n;
    report.h = 1.0 / n as f64;
    let seconds = start.elapsed().as_secs_f64();
    log::info!(
        "n={n}: {} dofs, {} interface elements; space {:.2}s, solve {:.2}s ({} linear iterations), recovery {:.2}s, errors {:.2}s",
        report.dofs,
        report.interface_elements,
        t_space,
        t_solve - t_space,
        linear_iterations,
        t_recover - t_solve,
        seconds - t_recover
    );
    Ok(LevelResult {
        report,
        newton_iterations,
        linear_iterations,
        penalty,
        seconds,
    })
}

fn write_system(sys: &crate::assembly::AssembledSystem, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    sys.write_coordinate(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Runs every level in order; errors carry the failing level.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.benchmark.problem(config.beta)?;
    let mut levels = Vec::with_capacity(config.levels.len());
    for &n in &config.levels {
        let r = run_level(config, &spec, n).map_err(|e| Error::AtLevel {
            level: n,
            source: Box::new(e),
        })?;
        levels.push(r);
    }
    let table = ConvergenceTable::new(levels.iter().map(|l| l.report.clone()).collect())?;
    Ok(RunOutput { levels, table })
}

pub const CSV_HEADER: &str = "h,De,order,Die,order,Dre,order,eta,effectivity";

/// Six significant digits with a signed two-digit exponent, e.g. `7.20000e-02`.
pub fn sci(v: f64) -> String {
    let s = format!("{v:.5e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", e.abs())
        }
        None => s,
    }
}

fn order_cell(orders: &[f64], row: usize) -> String {
    if row == 0 {
        String::new()
    } else {
        format!("{:.2}", orders[row - 1])
    }
}

fn table_cells(table: &ConvergenceTable) -> Vec<[String; 9]> {
    let de = table.orders(|r| r.de);
    let die = table.orders(|r| r.die);
    let dre = table.orders(|r| r.dre);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            [
                format!("1/{}", r.level),
                sci(r.de),
                order_cell(&de, i),
                sci(r.die),
                order_cell(&die, i),
                sci(r.dre),
                order_cell(&dre, i),
                sci(r.eta),
                sci(r.effectivity),
            ]
        })
        .collect()
}

pub fn format_csv(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in table_cells(table) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn format_markdown(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    let header = CSV_HEADER.split(',').collect::<Vec<_>>();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in table_cells(table) {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

pub fn format_table(table: &ConvergenceTable, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => format_csv(table),
        OutputFormat::Markdown => format_markdown(table),
    }
}

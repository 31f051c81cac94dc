use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The interface crosses a mesh edge more than once.
    #[error("mesh too coarse: interface crosses edge {edge} ({a} -> {b}) more than once")]
    MeshTooCoarse { edge: usize, a: usize, b: usize },

    #[error("no sign change of the level set on segment ({0:?}) -> ({1:?})")]
    NoSignChange([f64; 2], [f64; 2]),

    #[error(
        "degenerate cut in element {element}: IFE basis system is singular (rcond {rcond:.3e})"
    )]
    DegenerateCut { element: usize, rcond: f64 },

    #[error("mesh has not been classified against a level set")]
    Unclassified,

    #[error("nonzero flux jump is not supported")]
    NonzeroFluxJump,

    #[error("problem has no nonlinearity")]
    MissingNonlinearity,

    #[error("problem has no exact solution")]
    MissingExactSolution,

    #[error("gradient recovery is degenerate at vertex {vertex} ({x}, {y})")]
    RecoveryDegenerate { vertex: usize, x: f64, y: f64 },

    #[error(
        "{solver} did not converge in {iterations} iterations (relative residual {residual:.3e})"
    )]
    SolverDiverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

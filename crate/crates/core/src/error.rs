use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("overparameterized sieve: {columns} columns for {rows} usable observations")]
    OverparameterizedSieve { columns: usize, rows: usize },

    #[error("underdetermined least squares: {rows} rows, {cols} columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("path diverged at step {step}")]
    PathDiverged { step: usize },

    #[error("horizon {horizon} exceeds sample ({usable} usable observations)")]
    HorizonExceedsSample { horizon: usize, usable: usize },

    #[error("unknown built-in DGP id {0} (expected 1..=7)")]
    UnknownDgp(u8),

    #[error("explosive linear part: companion spectral radius {0:.6} >= 1")]
    Explosive(f64),

    #[error("data carries no true innovations")]
    MissingInnovations,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("relaxation function incompatible with shock {delta}: worst margin {margin:.6}")]
    IncompatibleShock { delta: f64, margin: f64 },

    #[error("{failed} of {total} replications failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("malformed file {path}: {msg}")]
    Parse { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

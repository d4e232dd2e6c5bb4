use std::path::PathBuf;

/// Every failure the laboratory can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 16")]
    NotPowerOfTwo(usize),
    #[error("half length must be positive and finite, got {0}")]
    InvalidHalfLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("no traveling wave exists for (omega, c) = ({omega}, {c})")]
    RegimeUnsupported { omega: f64, c: f64 },
    #[error("profile tail {value:e} at the box edge exceeds 1e-10; enlarge the box")]
    TailTooFat { value: f64 },
    #[error("finite-difference step leaves the subcritical regime at (omega, c) = ({omega}, {c})")]
    StepBreaksRegime { omega: f64, c: f64 },
    #[error("field has not decayed at the left edge: |v(-L)| = {edge:e}, sup = {sup:e}")]
    LeftTailNotDecayed { edge: f64, sup: f64 },
    #[error("non-finite value after step ending at t = {time}")]
    NonFinite { time: f64 },
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("eigensolver failed: {0}")]
    SolverFailure(String),
    #[error("constraints are linearly dependent on the grid")]
    RankDeficient,
    #[error("Newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("iterate left the subcritical regime at (omega, c) = ({omega}, {c})")]
    RegimeLost { omega: f64, c: f64 },
    #[error("separation {0} is below the floor of 10")]
    SeparationTooSmall(f64),
    #[error("speed ratio undefined: c1 == c2 or omega1 == omega2")]
    UndefinedSpeedRatio,
    #[error("fit failed at t = {time}: {source}")]
    FitFailed {
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("pair parameters violate the speed conditions: {0}")]
    SpeedConditions(String),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

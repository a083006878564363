use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("resolution must be even, got {0}")]
    OddResolution(usize),
    #[error("resolution {0} outside the supported range [8, 4096]")]
    ResolutionOutOfRange(usize),
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("numerical blow-up at t = {t}")]
    BlowUp { t: f64 },
    #[error("time step {dt} exceeds the advective stability bound {bound}; reduce dt below {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("run has {0} snapshot(s), at least 2 are required")]
    EmptyRun(usize),
    #[error("missing series: {0}")]
    MissingSeries(String),
    #[error("time grids differ")]
    TimeGridMismatch,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, range: &'static str) -> Self {
        Error::OutOfRange { name, value, range }
    }
}

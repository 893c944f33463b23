use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("bandwidth {bandwidth} Hz exceeds sample rate {sample_rate} Hz")]
    Aliasing { bandwidth: f64, sample_rate: f64 },

    #[error("frame segments need {needed} samples but the PRI holds {available}")]
    FrameOverflow { needed: usize, available: usize },

    #[error("{what} = {value} outside [{min}, {max}]")]
    Domain {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("time {t} s outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("effective delay {delay} s violates the cyclic-prefix guard [{min}, {max}]")]
    GuardViolation { delay: f64, min: f64, max: f64 },

    #[error("sidelink dropout at subcarrier {subcarrier}: |D_sl| = {magnitude:e}")]
    SidelinkDropout { subcarrier: usize, magnitude: f64 },

    #[error("window [{start}, {end}) exceeds stream of {len} samples")]
    Bounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("all-zero input: {0}")]
    ZeroInput(&'static str),

    #[error("grid mismatch between images")]
    GridMismatch,

    #[error("point outside pixel grid")]
    OutsideGrid,

    #[error("no -3 dB crossing on the {0} side of the peak")]
    NoCrossing(&'static str),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::Aliasing { .. } => "aliasing",
            Error::FrameOverflow { .. } => "frame_overflow",
            Error::Domain { .. } => "domain",
            Error::OutOfRange { .. } => "out_of_range",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::GuardViolation { .. } => "guard_violation",
            Error::SidelinkDropout { .. } => "sidelink_dropout",
            Error::Bounds { .. } => "bounds",
            Error::ZeroInput(_) => "zero_input",
            Error::GridMismatch => "grid_mismatch",
            Error::OutsideGrid => "outside_grid",
            Error::NoCrossing(_) => "no_crossing",
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

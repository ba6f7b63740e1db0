//! Error type shared by every analysis stage.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("series too short: {got} valid samples, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("tau {tau} out of range 1..={max}")]
    TauOutOfRange { tau: usize, max: usize },

    #[error("log-price transform requires positive prices; sample {index} is {value}")]
    LogNonpositive { index: usize, value: f64 },

    #[error("empty return series")]
    EmptySeries,

    #[error("tau grid max {tau_max} exceeds series length / 4 = {limit}")]
    GridTooLarge { tau_max: usize, limit: usize },

    #[error("fit range holds {got} grid points, need at least {need}")]
    DegenerateRange { got: usize, need: usize },

    #[error("non-positive moment X_p(tau) at p={p}, tau={tau}; the p grid reaches too far for this data")]
    NonpositiveMoment { p: f64, tau: usize },

    #[error("{axis} value {value} is not on the table grid")]
    GridMismatch { axis: &'static str, value: f64 },

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("only {got} delta-rho pairs, need at least 3")]
    InsufficientPoints { got: usize },

    #[error("scatter slope {slope} is not positive; the data do not exhibit a hierarchy")]
    DegenerateSlope { slope: f64 },

    #[error("GESS abscissa has near-zero spread; the series is monofractal at this resolution")]
    MonofractalDegenerate,

    #[error("beta {0} outside the open interval (0, 1)")]
    BetaOutOfRange(f64),

    #[error("invalid synthesis spec: {0}")]
    SpecInvalid(String),

    #[error("Hurst exponent {0} outside the open interval (0, 1)")]
    InvalidH(f64),

    #[error("length {0} unsupported: circulant synthesis needs a power of two >= 2")]
    LengthUnsupported(usize),

    #[error("every (p, q) pair in the flatness scan hit a degenerate denominator")]
    AllPairsDegenerate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tag an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

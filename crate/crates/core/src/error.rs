use thiserror::Error;

/// Errors raised by the simulation layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Hilbert layout: {0}")]
    InvalidLayout(String),

    #[error("mode index {index} out of range for a {modes}-mode layout")]
    InvalidMode { index: usize, modes: usize },

    #[error("layout mismatch: expected {expected:?}, found {found:?}")]
    LayoutMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("generator is not anti-Hermitian (max deviation {0:.3e})")]
    NotAntiHermitian(f64),

    #[error("time evolution did not converge: {0}")]
    Convergence(String),

    #[error("truncation leakage on mode {mode}: top-level population {population:.3e} exceeds {limit:.1e}")]
    TruncationLeak {
        mode: usize,
        population: f64,
        limit: f64,
    },

    #[error("order {order} is not below the Fock cutoff {cutoff}")]
    OrderTooHigh { order: usize, cutoff: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical corruption: {0}")]
    Numerical(String),

    #[error("empty conditioning window around {target} (half-width {window})")]
    EmptyWindow { target: f64, window: f64 },

    #[error("standard form not reached (residual {0:.3e})")]
    NotReducible(f64),

    #[error("no sign change of {witness} in [{lo}, {hi}]")]
    NoSignChange { witness: String, lo: f64, hi: f64 },

    #[error("at {name} = {value}: {source}")]
    AtParameter {
        name: String,
        value: f64,
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Attaches the swept parameter value to a physics-layer error.
    pub fn at(self, name: &str, value: f64) -> Self {
        match self {
            e @ (Error::Config(_) | Error::Io(_) | Error::AtParameter { .. }) => e,
            e => Error::AtParameter {
                name: name.to_string(),
                value,
                source: Box::new(e),
            },
        }
    }

    /// Strips parameter context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtParameter { source, .. } => source.root(),
            e => e,
        }
    }
}

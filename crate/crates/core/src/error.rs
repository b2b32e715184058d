use std::path::PathBuf;

/// Errors raised by the simulation and measurement routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{what}: {freq_hz} Hz is not below the Nyquist limit {nyquist_hz} Hz")]
    FrequencyOutOfRange {
        what: String,
        freq_hz: f64,
        nyquist_hz: f64,
    },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: f64, actual: f64 },

    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("zero-magnitude IQ sample at index {index}")]
    ZeroMagnitude { index: usize },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("system under test returned {actual} samples for a {expected}-sample probe")]
    Contract { expected: usize, actual: usize },

    #[error("fundamental near {freq_hz} Hz not found above the noise floor")]
    Detection { freq_hz: f64 },

    #[error("config error in stage `{stage}`: {reason}")]
    Config { stage: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn nyquist(what: impl Into<String>, freq_hz: f64, sample_rate_hz: f64) -> Self {
        Error::FrequencyOutOfRange {
            what: what.into(),
            freq_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        }
    }

    /// True for errors caused by bad user input (arguments, files, config)
    /// rather than a fault inside the library.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Calibration(_) | Error::Contract { .. })
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_below_nyquist(what: &str, freq_hz: f64, sample_rate_hz: f64) -> Result<()> {
    if freq_hz.abs() < sample_rate_hz / 2.0 {
        Ok(())
    } else {
        Err(Error::nyquist(what, freq_hz, sample_rate_hz))
    }
}

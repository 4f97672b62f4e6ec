use core::fmt;

use crate::model::SuffixKey;

/// A run of a synthesizer hit a negative target count.
///
/// The run is aborted rather than clamped: clamping would make the next
/// release inconsistent with the prefix that was already published.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaddingFailure {
    /// Round at which the negative count appeared.
    pub t: usize,
    /// Offending suffix bin.
    pub suffix: SuffixKey,
    /// The (negative) target count.
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    LengthMismatch { expected: usize, found: usize },
    NonBinary { index: usize, value: u8 },
    OutOfOrderRound { expected: usize, found: usize },
    RoundOutOfRange { t: usize, available: usize },
    WindowTooLong { k: usize, t: usize },
    WindowUnsupported { k: usize },
    InvalidParameter(&'static str),
    NegativeScale,
    ScaleTooLarge,
    HorizonExceeded { horizon: usize },
    MissingPredecessor { b: usize, t: usize },
    AlreadyReleased { b: usize, t: usize },
    PaddingExhausted(PaddingFailure),
    /// A query asks for a statistic the synthesizer does not preserve.
    UnsupportedQuery { query_window: usize, synth_window: Option<usize> },
    EnumerationTooLarge { k: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected} values, found {found}")
            }
            Error::NonBinary { index, value } => {
                write!(f, "value {value} at position {index} is not 0 or 1")
            }
            Error::OutOfOrderRound { expected, found } => {
                write!(f, "out-of-order round: expected t={expected}, got t={found}")
            }
            Error::RoundOutOfRange { t, available } => {
                write!(f, "round {t} is not available (have {available} rounds)")
            }
            Error::WindowTooLong { k, t } => {
                write!(f, "window of length {k} is undefined at round {t}")
            }
            Error::WindowUnsupported { k } => write!(f, "window length {k} is not supported"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::NegativeScale => f.write_str("noise scale must be non-negative"),
            Error::ScaleTooLarge => f.write_str("noise scale exceeds the supported range"),
            Error::HorizonExceeded { horizon } => {
                write!(f, "stream fed past its horizon of {horizon} rounds")
            }
            Error::MissingPredecessor { b, t } => {
                write!(f, "monotone bank is missing a predecessor of (b={b}, t={t})")
            }
            Error::AlreadyReleased { b, t } => {
                write!(f, "value for (b={b}, t={t}) was already released")
            }
            Error::PaddingExhausted(p) => write!(
                f,
                "padding exhausted at round {}: bin {} has count {}",
                p.t, p.suffix, p.count
            ),
            Error::UnsupportedQuery { query_window, synth_window } => match synth_window {
                Some(k) => write!(
                    f,
                    "unsupported window: query spans {query_window} rounds but the synthesizer preserves windows of {k}"
                ),
                None => write!(
                    f,
                    "unsupported query: window query of length {query_window} on cumulative synthetic data"
                ),
            },
            Error::EnumerationTooLarge { k } => {
                write!(f, "refusing to enumerate 2^{k} suffix bins")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;

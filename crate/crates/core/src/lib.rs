//! Continual release of differentially private synthetic longitudinal
//! bit data.
//!
//! Two synthesizers are provided. [`window::WindowSynthesizer`] keeps every
//! length-`k` window histogram accurate; [`cumulative::CumulativeSynthesizer`]
//! keeps "ever reached weight `b` by round `t`" counts accurate and
//! monotone. Both run under ρ-zCDP with exact discrete Gaussian noise and
//! only ever append to the released records.

#![no_std]

extern crate alloc;

pub mod counter;
pub mod cumulative;
pub mod error;
pub mod model;
pub mod privacy;
pub mod query;
pub mod sampler;
pub mod window;

pub use counter::{CounterKind, MonotoneBank, StreamCounter, TreeCounter};
pub use cumulative::{CumulativeSynthConfig, CumulativeSynthesizer};
pub use error::{Error, PaddingFailure, Result};
pub use model::{
    BitPanel, LongitudinalDataset, RoundUpdate, SuffixHistogram, SuffixKey, SyntheticStore,
};
pub use privacy::{BudgetSchedule, PrivacyBudget};
pub use query::{QuerySpec, Support};
pub use sampler::NoiseScale;
pub use window::{WindowSynthConfig, WindowSynthesizer};

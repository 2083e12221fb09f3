//! pulseforge-core: remote-photoplethysmography (rPPG) heart-rate estimation
//! on top of plain `f64` numerics.
//!
//! The crate is organized bottom-up:
//!
//! * [`signal`] - waveforms, power spectra, a first-order Butterworth bandpass,
//!   resampling, standardization, frame differencing, and the PSD-peak
//!   heart-rate readout.
//! * [`mstmap`] - multi-scale spatial-temporal maps built from per-ROI pixel
//!   statistics, plus their binary/CSV serialization.
//! * [`loss`] - the self-supervised spectral objectives and the supervised
//!   fine-tuning objectives, every one with an analytic gradient.
//! * [`model`] - a spatial-temporal transformer over MSTmap windows and a
//!   small spatiotemporal video encoder, with hand-written backward passes.
//! * [`synth`] - seeded synthetic pulse/ROI/video generators used for
//!   verification and examples.
//! * [`pipeline`] - AdamW, augmentation, the training loops, inference,
//!   and evaluation utilities.
//!
//! Everything is deterministic given explicit seeds: no global RNG state, no
//! hash-ordered iteration on any output path.

// Index loops mirror the subscripts in the gradient derivations; iterator
// rewrites would obscure them.
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

pub mod loss;
pub mod model;
pub mod mstmap;
pub mod pipeline;
pub mod signal;
pub mod synth;

/// Error taxonomy shared by the whole crate.
///
/// `InvalidArgument` marks caller contract violations, `DegenerateInput`
/// marks inputs that are structurally fine but numerically unusable
/// (all-zero spectra and the like), `ShapeMismatch` covers disagreeing
/// dimensions, and `Format` covers malformed files.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        CoreError::DegenerateInput(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::ShapeMismatch(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        CoreError::Format(msg.into())
    }

    /// True for errors that describe bad data files or I/O rather than a
    /// violated numeric contract. The CLI maps these to a different exit code.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, CoreError::Io(_) | CoreError::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

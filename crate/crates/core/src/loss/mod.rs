//! Training objectives, each returning its scalar value together with an
//! analytic gradient with respect to the differentiated inputs.
//!
//! The self-supervised losses ([`bandwidth_loss`], [`sparsity_loss`],
//! [`variance_loss`], [`periodicity_loss`], [`total_selfsup_loss`]) operate on
//! time-domain waveforms and differentiate through the PSD. The contrastive
//! losses operate on power spectra and return per-spectrum gradients that
//! chain back to waveforms via [`crate::signal::fft_psd_vjp`]. The supervised
//! losses ([`pearson_loss`], [`mcc_loss`], [`finetune_loss`]) compare
//! predictions against ground truth.

use crate::signal::{default_n_fft, BandLimits, Spectrum};
use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

mod contrastive;
mod selfsup;
mod supervised;

pub use contrastive::{contrastive_pretrain_loss, supervised_contrastive_loss, ContrastiveLoss};
pub use selfsup::{
    bandwidth_loss, periodicity_loss, sparsity_loss, total_selfsup_loss, variance_loss,
    SelfSupLoss,
};
pub use supervised::{
    finetune_loss, mcc_loss, pearson_loss, pearson_loss_with_mode, FinetuneInputs, FinetuneLoss,
    PearsonMode,
};

/// Shared knobs for all objectives.
///
/// `delta_f_bins` is the half-width (in PSD bins) of the exclusion zone
/// around the in-band peak in the sparsity loss; `n_segments` is the segment
/// count of the periodicity loss; `alpha`/`beta` weight the Pearson and MCC
/// terms of the fine-tuning objective. `n_fft` pins the PSD grid of the
/// waveform losses; `None` keeps the per-length default. A zero-padded grid
/// smears even a pure tone across neighbouring bins, so tests that reason
/// about single-bin spectra must set `n_fft` to the signal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub band: BandLimits,
    pub delta_f_bins: usize,
    pub n_segments: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub n_fft: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            band: BandLimits::physiological(),
            delta_f_bins: 6,
            n_segments: 3,
            alpha: 0.1,
            beta: 0.2,
            n_fft: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_f_bins == 0 {
            return Err(CoreError::invalid("delta_f_bins must be >= 1"));
        }
        if self.n_segments < 2 {
            return Err(CoreError::invalid("n_segments must be >= 2"));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) || self.alpha < 0.0 || self.beta < 0.0
        {
            return Err(CoreError::invalid("alpha and beta must be finite and >= 0"));
        }
        if let Some(n) = self.n_fft {
            if !n.is_power_of_two() {
                return Err(CoreError::invalid("n_fft override must be a power of two"));
            }
        }
        Ok(())
    }

    /// PSD grid length for a signal of `len` samples: the override when set,
    /// otherwise the signal-processing default.
    pub fn psd_n_fft(&self, len: usize) -> usize {
        self.n_fft.unwrap_or_else(|| default_n_fft(len))
    }
}

/// A scalar objective with gradients, one per differentiated input, each
/// matching that input's length.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

// ── Shared helpers ──────────────────────────────────────────────────────────

/// In-band bin range of a spectrum, or a degenerate-input error when the band
/// misses the grid entirely.
pub(crate) fn band_range(spec: &Spectrum, band: &BandLimits) -> Result<(usize, usize)> {
    spec.band_bin_range(band).ok_or_else(|| {
        CoreError::invalid(format!(
            "band [{}, {}] Hz covers no spectrum bins (bin width {})",
            band.low,
            band.high,
            spec.bin_width()
        ))
    })
}

/// In-band slice of a spectrum normalized to unit sum, together with the sum.
pub(crate) fn normalized_band_slice(
    spec: &Spectrum,
    lo: usize,
    hi: usize,
) -> Result<(Vec<f64>, f64)> {
    let slice = &spec.powers()[lo..=hi];
    let total: f64 = slice.iter().sum();
    if total < crate::signal::POWER_GUARD {
        return Err(CoreError::degenerate(
            "in-band spectral power is zero".to_string(),
        ));
    }
    Ok((slice.iter().map(|p| p / total).collect(), total))
}

/// Gradient through `f = v / sum(v)`: given `g = dL/df`, returns `dL/dv`.
pub(crate) fn unit_sum_vjp(f_norm: &[f64], total: f64, g: &[f64]) -> Vec<f64> {
    let dot: f64 = g.iter().zip(f_norm).map(|(gi, fi)| gi * fi).sum();
    g.iter()
        .zip(f_norm)
        .map(|(gi, _)| (gi - dot) / total)
        .collect()
}

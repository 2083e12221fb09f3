//! Signal numerics shared by every other module: uniformly sampled waveforms,
//! one-sided power spectra, bandpass filtering, resampling, standardization,
//! frame differencing, and the PSD-peak heart-rate readout.

use crate::{CoreError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub mod fft;
mod filter;
mod io;
mod video;

pub use filter::{bandpass_butter1, design_bandpass_butter1, Biquad};
pub use io::{read_waveform_csv, write_waveform_csv};
pub use video::{frame_diff, frame_diff_raw, read_video_cube, write_video_cube, VideoCube};

// Physiological band used as the default everywhere a band is needed:
// 0.66 Hz .. 3.0 Hz, i.e. roughly 40..180 beats per minute.
pub const DEFAULT_BAND_LOW_HZ: f64 = 0.66;
pub const DEFAULT_BAND_HIGH_HZ: f64 = 3.0;

/// Guard below which a variance is treated as zero.
pub(crate) const VAR_GUARD: f64 = 1e-12;

/// Guard below which a total spectral power is treated as zero.
pub(crate) const POWER_GUARD: f64 = 1e-20;

// ── Waveform ────────────────────────────────────────────────────────────────

/// A uniformly sampled real signal. Always at least two samples, all finite,
/// with a strictly positive sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    fs: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(CoreError::invalid(format!(
                "waveform needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !fs.is_finite() || fs <= 0.0 {
            return Err(CoreError::invalid(format!(
                "sampling rate must be finite and positive, got {fs}"
            )));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::invalid(format!(
                "non-finite sample at index {bad}"
            )));
        }
        Ok(Waveform { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor guarantees >= 2 samples
    }

    /// Time spanned by the samples: (len - 1) / fs seconds.
    pub fn duration_s(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.fs
    }
}

// ── Spectrum ────────────────────────────────────────────────────────────────

/// One-sided power spectrum. Bin `i` sits at frequency `i * bin_width` and
/// holds `|DFT[i]|^2` of the (zero-padded) signal; no normalization and no
/// doubling of the symmetric bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bin_width: f64,
    powers: Vec<f64>,
    n_fft: usize,
}

impl Spectrum {
    pub fn new(bin_width: f64, powers: Vec<f64>, n_fft: usize) -> Result<Self> {
        if !bin_width.is_finite() || bin_width <= 0.0 {
            return Err(CoreError::invalid(format!(
                "bin width must be finite and positive, got {bin_width}"
            )));
        }
        if powers.is_empty() {
            return Err(CoreError::invalid("spectrum must have at least one bin"));
        }
        if powers.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CoreError::invalid("spectrum powers must be finite and >= 0"));
        }
        if powers.len() != n_fft / 2 + 1 {
            return Err(CoreError::shape(format!(
                "one-sided spectrum of an {n_fft}-point DFT must have {} bins, got {}",
                n_fft / 2 + 1,
                powers.len()
            )));
        }
        Ok(Spectrum {
            bin_width,
            powers,
            n_fft,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_bins(&self) -> usize {
        self.powers.len()
    }

    pub fn freq_of_bin(&self, i: usize) -> f64 {
        i as f64 * self.bin_width
    }

    /// Inclusive bin-index range whose frequencies fall inside `band`,
    /// or `None` when the band covers no bins of this grid.
    pub fn band_bin_range(&self, band: &BandLimits) -> Option<(usize, usize)> {
        let lo = ((band.low / self.bin_width) - 1e-9).ceil().max(0.0) as usize;
        let hi_f = ((band.high / self.bin_width) + 1e-9).floor();
        if hi_f < 0.0 {
            return None;
        }
        let hi = (hi_f as usize).min(self.powers.len() - 1);
        (lo <= hi).then_some((lo, hi))
    }
}

// ── BandLimits ──────────────────────────────────────────────────────────────

/// A frequency band in Hz. `0 < low < high`; callers that apply a band to a
/// sampled signal must also keep `high` below the Nyquist rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimits {
    pub low: f64,
    pub high: f64,
}

impl BandLimits {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) || low <= 0.0 || high <= low {
            return Err(CoreError::invalid(format!(
                "band limits must satisfy 0 < low < high, got [{low}, {high}]"
            )));
        }
        Ok(BandLimits { low, high })
    }

    /// The 0.66 Hz .. 3.0 Hz physiological default.
    pub fn physiological() -> Self {
        BandLimits {
            low: DEFAULT_BAND_LOW_HZ,
            high: DEFAULT_BAND_HIGH_HZ,
        }
    }

    pub fn validate_for_fs(&self, fs: f64) -> Result<()> {
        if self.high >= fs / 2.0 {
            return Err(CoreError::invalid(format!(
                "band high edge {} Hz must stay below Nyquist ({} Hz)",
                self.high,
                fs / 2.0
            )));
        }
        Ok(())
    }
}

impl Default for BandLimits {
    fn default() -> Self {
        BandLimits::physiological()
    }
}

// ── PSD ─────────────────────────────────────────────────────────────────────

/// Default DFT size for a signal of `len` samples: the smallest power of two
/// at or above `max(1024, 4 * len)`.
pub fn default_n_fft(len: usize) -> usize {
    (4 * len).max(1024).next_power_of_two()
}

/// One-sided PSD of `w`, zero-padded to `n_fft` points.
/// `n_fft` must be a power of two and at least the signal length.
pub fn fft_psd(w: &Waveform, n_fft: usize) -> Result<Spectrum> {
    if !fft::is_power_of_two(n_fft) {
        return Err(CoreError::invalid(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if n_fft < w.len() {
        return Err(CoreError::invalid(format!(
            "n_fft {} is smaller than the signal length {}",
            n_fft,
            w.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (dst, &s) in buf.iter_mut().zip(w.samples()) {
        *dst = Complex64::new(s, 0.0);
    }
    fft::fft_pow2(&mut buf, false);
    let n_bins = n_fft / 2 + 1;
    let powers: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
    Spectrum::new(w.fs() / n_fft as f64, powers, n_fft)
}

/// Vector-Jacobian product through `fft_psd`: the gradient of
/// `sum_k upstream[k] * P_k` with respect to the time samples.
///
/// With `X = DFT(x)` and `P_k = |X_k|^2`, `dP_k/dx_n = 2 Re(conj(X_k) W^{kn})`,
/// so the full gradient is `2 Re(DFT(y))` truncated to the signal length,
/// where `y_k = upstream[k] * conj(X_k)` on the one-sided bins and 0 elsewhere.
pub fn fft_psd_vjp(w: &Waveform, n_fft: usize, upstream: &[f64]) -> Result<Vec<f64>> {
    if !fft::is_power_of_two(n_fft) || n_fft < w.len() {
        return Err(CoreError::invalid(format!(
            "n_fft {} invalid for signal length {}",
            n_fft,
            w.len()
        )));
    }
    let n_bins = n_fft / 2 + 1;
    if upstream.len() != n_bins {
        return Err(CoreError::shape(format!(
            "upstream gradient has {} entries, spectrum has {} bins",
            upstream.len(),
            n_bins
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (dst, &s) in buf.iter_mut().zip(w.samples()) {
        *dst = Complex64::new(s, 0.0);
    }
    fft::fft_pow2(&mut buf, false);

    let mut y = vec![Complex64::new(0.0, 0.0); n_fft];
    for k in 0..n_bins {
        y[k] = buf[k].conj() * upstream[k];
    }
    fft::fft_pow2(&mut y, false);

    Ok(y[..w.len()].iter().map(|c| 2.0 * c.re).collect())
}

// ── Heart-rate readout ──────────────────────────────────────────────────────

/// Heart rate in beats per minute from the strongest in-band PSD bin.
/// Ties break toward the lower frequency. The band must cover at least
/// two bins of the spectrum's grid.
pub fn hr_from_psd(spec: &Spectrum, band: &BandLimits) -> Result<f64> {
    let (lo, hi) = spec.band_bin_range(band).ok_or_else(|| {
        CoreError::invalid(format!(
            "band [{}, {}] Hz covers no bins at width {} Hz",
            band.low,
            band.high,
            spec.bin_width()
        ))
    })?;
    if hi - lo + 1 < 2 {
        return Err(CoreError::invalid(format!(
            "band [{}, {}] Hz covers fewer than 2 bins at width {} Hz",
            band.low,
            band.high,
            spec.bin_width()
        )));
    }
    let mut best = lo;
    let mut best_p = spec.powers()[lo];
    for i in lo + 1..=hi {
        if spec.powers()[i] > best_p {
            best = i;
            best_p = spec.powers()[i];
        }
    }
    Ok(60.0 * spec.freq_of_bin(best))
}

// ── Resampling ──────────────────────────────────────────────────────────────

/// Linear resampling onto a uniform grid at (approximately) `fs_target`,
/// spanning exactly the same duration; both endpoints are preserved.
///
/// The output has `round(duration * fs_target) + 1` samples. Grid positions
/// are computed from integer ratios, so resampling at the original rate is
/// bit-exact.
pub fn resample_linear(w: &Waveform, fs_target: f64) -> Result<Waveform> {
    if !fs_target.is_finite() || fs_target <= 0.0 {
        return Err(CoreError::invalid(format!(
            "target rate must be finite and positive, got {fs_target}"
        )));
    }
    let duration = w.duration_s();
    let m = (duration * fs_target).round().max(1.0) as usize + 1;
    let src_last = (w.len() - 1) as f64;
    let out: Vec<f64> = (0..m)
        .map(|i| {
            // Source position as an integer ratio: i * (len-1) / (m-1).
            let pos = (i * (w.len() - 1)) as f64 / (m - 1) as f64;
            let pos = pos.min(src_last);
            let i0 = pos.floor() as usize;
            if i0 + 1 >= w.len() {
                w.samples()[w.len() - 1]
            } else {
                let frac = pos - i0 as f64;
                w.samples()[i0] * (1.0 - frac) + w.samples()[i0 + 1] * frac
            }
        })
        .collect();
    Waveform::new(out, fs_target)
}

// ── Standardization ─────────────────────────────────────────────────────────

/// Zero-mean, unit-variance rescaling using population statistics.
/// Signals with variance below the guard come back as all zeros.
pub fn standardize(w: &Waveform) -> Waveform {
    let n = w.len() as f64;
    let mean = w.samples().iter().sum::<f64>() / n;
    let var = w.samples().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let samples = if var < VAR_GUARD {
        vec![0.0; w.len()]
    } else {
        let inv_std = 1.0 / var.sqrt();
        w.samples().iter().map(|v| (v - mean) * inv_std).collect()
    };
    Waveform {
        samples,
        fs: w.fs(),
    }
}

/// Vector-Jacobian product through [`standardize`]: given the gradient of a
/// scalar with respect to the standardized output, returns its gradient with
/// respect to the raw samples. Zero when the guard fired.
pub fn standardize_vjp(raw: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != upstream.len() {
        return Err(CoreError::shape(format!(
            "standardize_vjp: raw has {} samples, upstream has {}",
            raw.len(),
            upstream.len()
        )));
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < VAR_GUARD {
        return Ok(vec![0.0; raw.len()]);
    }
    let inv_std = 1.0 / var.sqrt();
    let z: Vec<f64> = raw.iter().map(|v| (v - mean) * inv_std).collect();
    let g_mean = upstream.iter().sum::<f64>() / n;
    let gz_mean = upstream.iter().zip(&z).map(|(g, zi)| g * zi).sum::<f64>() / n;
    Ok(upstream
        .iter()
        .zip(&z)
        .map(|(g, zi)| (g - g_mean - zi * gz_mean) * inv_std)
        .collect())
}

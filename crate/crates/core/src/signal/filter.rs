//! First-order Butterworth bandpass with zero-phase (forward-backward)
//! application.
//!
//! The analog prototype `H(s) = B s / (s^2 + B s + w0^2)` (a first-order
//! lowpass mapped to bandpass) is discretized with the bilinear transform
//! after pre-warping both edge frequencies. Forward-backward filtering with
//! zero initial state squares the magnitude response and cancels the phase.

use super::{BandLimits, Waveform};
use crate::{CoreError, Result};

/// Normalized biquad coefficients (a0 = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Design the digital biquad for a first-order Butterworth bandpass.
pub fn design_bandpass_butter1(band: &BandLimits, fs: f64) -> Result<Biquad> {
    if !fs.is_finite() || fs <= 0.0 {
        return Err(CoreError::invalid(format!("fs must be positive, got {fs}")));
    }
    band.validate_for_fs(fs)?;

    let k = 2.0 * fs;
    // Pre-warped analog edge frequencies.
    let wl = k * (std::f64::consts::PI * band.low / fs).tan();
    let wh = k * (std::f64::consts::PI * band.high / fs).tan();
    let w0_sq = wl * wh;
    let bw = wh - wl;

    let a0 = k * k + bw * k + w0_sq;
    Ok(Biquad {
        b0: bw * k / a0,
        b1: 0.0,
        b2: -bw * k / a0,
        a1: (2.0 * w0_sq - 2.0 * k * k) / a0,
        a2: (k * k - bw * k + w0_sq) / a0,
    })
}

/// Single forward pass, direct form II transposed, zero initial state.
fn filter_forward(c: &Biquad, x: &[f64]) -> Vec<f64> {
    let mut z1 = 0.0;
    let mut z2 = 0.0;
    x.iter()
        .map(|&xi| {
            let y = c.b0 * xi + z1;
            z1 = c.b1 * xi - c.a1 * y + z2;
            z2 = c.b2 * xi - c.a2 * y;
            y
        })
        .collect()
}

/// Zero-phase bandpass: filter forward, reverse, filter again, reverse.
/// Output length equals input length. The effective magnitude response is
/// the square of the single-pass response; edge transients are not padded
/// away, so the first and last fraction of a second are approximate.
pub fn bandpass_butter1(w: &Waveform, band: &BandLimits) -> Result<Waveform> {
    let coeffs = design_bandpass_butter1(band, w.fs())?;
    let mut y = filter_forward(&coeffs, w.samples());
    y.reverse();
    let mut y = filter_forward(&coeffs, &y);
    y.reverse();
    Waveform::new(y, w.fs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Waveform;

    const FS: f64 = 30.0;

    fn band() -> BandLimits {
        BandLimits::physiological()
    }

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / FS).sin())
                .collect(),
            FS,
        )
        .unwrap()
    }

    /// |H(e^{j 2 pi f / fs})|^2 evaluated directly from the coefficients;
    /// forward-backward filtering realizes the square of this.
    fn response_power(c: &Biquad, f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = num_complex::Complex64::new(c.b0, 0.0) + z1 * c.b1 + z2 * c.b2;
        let den = num_complex::Complex64::new(1.0, 0.0) + z1 * c.a1 + z2 * c.a2;
        (num / den).norm_sqr()
    }

    fn steady_state_amplitude(w: &Waveform) -> f64 {
        // Peak over the middle half, away from both edge transients.
        let n = w.len();
        w.samples()[n / 4..3 * n / 4]
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dc_is_rejected() {
        let w = Waveform::new(vec![1.0; 600], FS).unwrap(); // 20 s of DC
        let y = bandpass_butter1(&w, &band()).unwrap();
        assert_eq!(y.len(), w.len());
        let residual = steady_state_amplitude(&y);
        assert!(residual < 0.01, "DC residual {residual}");
    }

    #[test]
    fn passband_tone_survives() {
        let w = sine(1.5, 900); // 30 s
        let y = bandpass_butter1(&w, &band()).unwrap();
        assert!(steady_state_amplitude(&y) >= 0.70);
    }

    #[test]
    fn stopband_tone_matches_analytic_response() {
        let w = sine(8.0, 1800); // 60 s at 8 Hz, well above the band
        let y = bandpass_butter1(&w, &band()).unwrap();
        let got = steady_state_amplitude(&y);
        let coeffs = design_bandpass_butter1(&band(), FS).unwrap();
        let want = response_power(&coeffs, 8.0, FS); // squared single-pass response
        let rel = (got - want).abs() / want;
        assert!(rel <= 0.05, "measured {got}, analytic {want}, rel {rel}");
    }

    #[test]
    fn passband_response_matches_analytic_response() {
        let w = sine(1.5, 1800);
        let y = bandpass_butter1(&w, &band()).unwrap();
        let got = steady_state_amplitude(&y);
        let coeffs = design_bandpass_butter1(&band(), FS).unwrap();
        let want = response_power(&coeffs, 1.5, FS);
        assert!((got - want).abs() / want <= 0.05);
    }

    #[test]
    fn filtering_is_linear() {
        let x1 = sine(1.0, 256);
        let x2 = sine(2.3, 256);
        let a = 1.7;
        let b = -0.45;
        let combined = Waveform::new(
            x1.samples()
                .iter()
                .zip(x2.samples())
                .map(|(u, v)| a * u + b * v)
                .collect(),
            FS,
        )
        .unwrap();
        let y_comb = bandpass_butter1(&combined, &band()).unwrap();
        let y1 = bandpass_butter1(&x1, &band()).unwrap();
        let y2 = bandpass_butter1(&x2, &band()).unwrap();
        for i in 0..combined.len() {
            let want = a * y1.samples()[i] + b * y2.samples()[i];
            assert!(
                (y_comb.samples()[i] - want).abs() <= 1e-9,
                "index {i}: {} vs {want}",
                y_comb.samples()[i]
            );
        }
    }

    #[test]
    fn rejects_band_at_or_above_nyquist() {
        let w = sine(1.0, 128);
        let bad = BandLimits::new(0.66, 15.0).unwrap();
        assert!(bandpass_butter1(&w, &bad).is_err());
    }
}

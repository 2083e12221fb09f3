//! Seeded synthetic data with known ground truth: pulse waveforms (fundamental
//! plus a second harmonic modelling the dicrotic notch, optional linear HR
//! drift, calibrated Gaussian noise), per-frame meta-ROI color statistics, and
//! video cubes with a blood-volume-pulse component under a smooth spatial
//! gain mask. Everything is a pure function of the spec, so regenerating a
//! dataset is bitwise reproducible.

use crate::mstmap::RoiFrameStats;
use crate::signal::{VideoCube, Waveform};
use crate::{CoreError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Heart rates outside this range are rejected everywhere.
pub const HR_MIN_BPM: f64 = 40.0;
pub const HR_MAX_BPM: f64 = 180.0;

/// Per-channel color baselines (R, G, B) and the relative strength with
/// which each channel carries the pulse; green dominates.
const CHANNEL_BASELINES: [f64; 3] = [100.0, 120.0, 90.0];
const CHANNEL_PULSE_GAINS: [f64; 3] = [0.5, 1.0, 0.3];

// ── Spec ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Ground-truth heart rate at t = 0, beats per minute.
    pub hr_bpm: f64,
    /// Sampling / frame rate in Hz.
    pub fs: f64,
    pub duration_s: f64,
    /// Signal-to-noise ratio of the additive Gaussian noise; `f64::INFINITY`
    /// disables noise entirely.
    pub snr_db: f64,
    /// Amplitude of the second harmonic relative to the fundamental, in [0, 1].
    pub harmonic_ratio: f64,
    /// Pulse gain per meta-ROI; a single entry broadcasts to every ROI.
    pub roi_gains: Vec<f64>,
    pub seed: u64,
    /// Linear HR drift; the instantaneous rate must stay inside the band.
    pub hr_drift_bpm_per_min: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            hr_bpm: 72.0,
            fs: 30.0,
            duration_s: 10.0,
            snr_db: f64::INFINITY,
            harmonic_ratio: 0.3,
            roi_gains: vec![1.0],
            seed: 0,
            hr_drift_bpm_per_min: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let end_hr = self.hr_bpm + self.hr_drift_bpm_per_min * self.duration_s / 60.0;
        for hr in [self.hr_bpm, end_hr] {
            if !(HR_MIN_BPM..=HR_MAX_BPM).contains(&hr) {
                return Err(CoreError::invalid(format!(
                    "heart rate {hr} bpm outside the supported range {HR_MIN_BPM}-{HR_MAX_BPM} bpm"
                )));
            }
        }
        let max_hz = self.hr_bpm.max(end_hr) / 60.0;
        if !self.fs.is_finite() || self.fs <= 2.0 * max_hz {
            return Err(CoreError::invalid(format!(
                "sampling rate {} Hz must exceed twice the peak pulse frequency {max_hz} Hz",
                self.fs
            )));
        }
        if !self.duration_s.is_finite() || self.duration_s * self.fs < 2.0 {
            return Err(CoreError::invalid(format!(
                "duration {} s at {} Hz yields fewer than 2 samples",
                self.duration_s, self.fs
            )));
        }
        if !(0.0..=1.0).contains(&self.harmonic_ratio) {
            return Err(CoreError::invalid(format!(
                "harmonic ratio {} outside [0, 1]",
                self.harmonic_ratio
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(CoreError::invalid("snr_db must be a real value or +inf"));
        }
        if self.roi_gains.is_empty() || self.roi_gains.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::invalid("roi_gains must be non-empty and finite"));
        }
        if !self.hr_drift_bpm_per_min.is_finite() {
            return Err(CoreError::invalid("hr drift must be finite"));
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    /// Pulse gain of meta-ROI `r`, with single-entry broadcast.
    fn roi_gain(&self, r: usize, total: usize) -> Result<f64> {
        if self.roi_gains.len() == 1 {
            return Ok(self.roi_gains[0]);
        }
        if self.roi_gains.len() != total {
            return Err(CoreError::invalid(format!(
                "{} roi_gains cannot drive {total} meta-ROIs (need 1 or {total})",
                self.roi_gains.len()
            )));
        }
        Ok(self.roi_gains[r])
    }
}

// ── Pulse generation ────────────────────────────────────────────────────────

/// A generated pulse plus its per-sample ground-truth heart rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSignal {
    pub waveform: Waveform,
    /// Instantaneous heart rate per sample, bpm.
    pub hr_trace_bpm: Vec<f64>,
}

/// Noise-free pulse values; the shared deterministic core of every generator.
fn clean_pulse(spec: &SynthSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.n_samples();
    let f0 = spec.hr_bpm / 60.0;
    let drift_hz_per_s = spec.hr_drift_bpm_per_min / 3600.0;
    let mut clean = Vec::with_capacity(n);
    let mut hr = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.fs;
        // Phase is the integral of the instantaneous frequency.
        let phase = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * drift_hz_per_s * t * t);
        clean.push(phase.sin() + spec.harmonic_ratio * (2.0 * phase).sin());
        hr.push(spec.hr_bpm + spec.hr_drift_bpm_per_min * t / 60.0);
    }
    (clean, hr)
}

/// Noise standard deviation that realizes `snr_db` against `signal_power`;
/// zero for infinite SNR or silent signals.
fn noise_sigma(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || signal_power <= 0.0 {
        0.0
    } else {
        (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
    }
}

pub fn gen_pulse(spec: &SynthSpec) -> Result<PulseSignal> {
    spec.validate()?;
    let (mut samples, hr_trace_bpm) = clean_pulse(spec);
    let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    let sigma = noise_sigma(power, spec.snr_db);
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(PulseSignal {
        waveform: Waveform::new(samples, spec.fs)?,
        hr_trace_bpm,
    })
}

// ── Meta-ROI statistics ─────────────────────────────────────────────────────

/// Per-frame color statistics for `r` meta-ROIs: each ROI's green mean is
/// baseline + gain × pulse + noise, red/blue carry the pulse at reduced gain,
/// and pixel counts are fixed per ROI. Noise σ scales with each channel's
/// pulse amplitude, so `snr_db` means the same thing in every channel.
pub fn gen_roi_stats(spec: &SynthSpec, r: usize) -> Result<Vec<RoiFrameStats>> {
    spec.validate()?;
    if r < 1 {
        return Err(CoreError::invalid("need at least one meta-ROI"));
    }
    let (clean, _) = clean_pulse(spec);
    let pulse_power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let counts: Vec<u64> = (0..r).map(|i| 400 + 37 * i as u64).collect();
    let gains: Vec<f64> = (0..r)
        .map(|i| spec.roi_gain(i, r))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut frames = Vec::with_capacity(clean.len());
    for &p in &clean {
        let mut sums = Vec::with_capacity(r);
        for roi in 0..r {
            let mut rgb = [0.0; 3];
            for c in 0..3 {
                let amp = CHANNEL_PULSE_GAINS[c] * gains[roi];
                let sigma = noise_sigma(amp * amp * pulse_power, spec.snr_db);
                let mean = CHANNEL_BASELINES[c] + amp * p + sigma * unit.sample(&mut rng);
                rgb[c] = mean * counts[roi] as f64;
            }
            sums.push(rgb);
        }
        frames.push(RoiFrameStats::new(sums, counts.clone())?);
    }
    Ok(frames)
}

// ── Video cubes ─────────────────────────────────────────────────────────────

/// A synthetic clip: a static smooth base pattern, plus the pulse modulated
/// by a Gaussian spatial gain bump (scaled by the first roi_gain), plus
/// pixel noise calibrated against the mean pulse-signal power.
pub fn gen_video_cube(spec: &SynthSpec, h: usize, w: usize) -> Result<(VideoCube, Waveform)> {
    spec.validate()?;
    if h < 4 || w < 4 {
        return Err(CoreError::invalid(format!(
            "video cubes need at least 4x4 pixels, got {h}x{w}"
        )));
    }
    let (clean, _) = clean_pulse(spec);
    let t = clean.len();
    let gain = spec.roi_gains[0];

    // Static base: a gentle diagonal ramp per channel, far from 0/255.
    let base = |y: usize, x: usize, c: usize| -> f64 {
        let ry = (y as f64 + 0.5) / h as f64;
        let rx = (x as f64 + 0.5) / w as f64;
        CHANNEL_BASELINES[c] * (0.8 + 0.1 * ry + 0.1 * rx)
    };
    // Smooth spatial gain: a Gaussian bump centered on the frame.
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let sigma_sp = (h.min(w) as f64) / 4.0;
    let mask = |y: usize, x: usize| -> f64 {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        gain * (-(dy * dy + dx * dx) / (2.0 * sigma_sp * sigma_sp)).exp()
    };

    // Mean signal power across pixels and channels calibrates pixel noise.
    let pulse_power = clean.iter().map(|v| v * v).sum::<f64>() / t as f64;
    let mut mean_gain_sq = 0.0;
    for y in 0..h {
        for x in 0..w {
            let m = mask(y, x);
            for g in CHANNEL_PULSE_GAINS {
                mean_gain_sq += g * g * m * m;
            }
        }
    }
    mean_gain_sq /= (h * w * 3) as f64;
    let sigma = noise_sigma(mean_gain_sq * pulse_power, spec.snr_db);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(t * h * w * 3);
    for &p in &clean {
        for y in 0..h {
            for x in 0..w {
                let m = mask(y, x);
                for c in 0..3 {
                    let noise = if sigma > 0.0 {
                        sigma * unit.sample(&mut rng)
                    } else {
                        0.0
                    };
                    data.push(base(y, x, c) + CHANNEL_PULSE_GAINS[c] * m * p + noise);
                }
            }
        }
    }
    let cube = VideoCube::new(data, t, h, w, 3, spec.fs)?;
    let gt = Waveform::new(clean, spec.fs)?;
    Ok((cube, gt))
}

// ── Dataset manifest ────────────────────────────────────────────────────────

/// One dataset sample: where its artifact lives and what ground truth it
/// carries. `path` is relative to the manifest's directory by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub path: String,
    pub hr_bpm: f64,
    pub fs: f64,
    pub duration_s: f64,
    pub seed: u64,
}

const MANIFEST_HEADER: &str = "sample_id,path,hr_bpm,fs,duration_s,seed";

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for row in rows {
        for field in [&row.sample_id, &row.path] {
            if field.contains(',') || field.contains('\n') {
                return Err(CoreError::invalid(format!(
                    "manifest field {field:?} may not contain commas or newlines"
                )));
            }
        }
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.sample_id, row.path, row.hr_bpm, row.fs, row.duration_s, row.seed
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(CoreError::format(format!(
                "{}: manifest must start with header {MANIFEST_HEADER:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CoreError::format(format!(
                "{}: line {}: expected 6 fields, got {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| {
                CoreError::format(format!(
                    "{}: line {}: bad {what} {s:?}",
                    path.display(),
                    i + 2
                ))
            })
        };
        rows.push(ManifestRow {
            sample_id: fields[0].trim().to_string(),
            path: fields[1].trim().to_string(),
            hr_bpm: num(fields[2], "hr_bpm")?,
            fs: num(fields[3], "fs")?,
            duration_s: num(fields[4], "duration_s")?,
            seed: fields[5].trim().parse::<u64>().map_err(|_| {
                CoreError::format(format!(
                    "{}: line {}: bad seed {:?}",
                    path.display(),
                    i + 2,
                    fields[5]
                ))
            })?,
        });
    }
    Ok(rows)
}

//! Windowed heart-rate inference. Three paths share one readout (bandpass →
//! PSD → in-band peak → clamp): `Baseline` reads the mean green-channel trace
//! directly and never touches model parameters, `Solution1` runs the map
//! transformer over sliding MSTmap windows, `Solution2` runs the video
//! encoder over non-overlapping clips and spatially averages the block.

use crate::model::{
    spatial_average, st_encoder_forward, st_former_forward, ModelCheckpoint,
};
use crate::mstmap::{sliding_windows, MstMap, WindowSpec};
use crate::signal::{
    bandpass_butter1, default_n_fft, fft_psd, hr_from_psd, BandLimits, VideoCube, Waveform,
};
use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// The clamp applied to every reported heart rate, bpm.
pub const HR_CLAMP: (f64, f64) = (40.0, 180.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    Baseline,
    Solution1,
    Solution2,
}

/// Reduction from per-window heart rates to the video-level estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    /// Sliding-window shape for the baseline path; solution 1 keeps the step
    /// but takes its window length from the checkpoint.
    pub window_len: usize,
    pub window_step: usize,
    /// Non-overlapping clip length for solution 2.
    pub clip_len: usize,
    pub band: BandLimits,
    pub reduce: Reduce,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            window_len: 300,
            window_step: 15,
            clip_len: 300,
            band: BandLimits::physiological(),
            reduce: Reduce::Mean,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.window_step < 1 || self.clip_len < 2 {
            return Err(CoreError::invalid(
                "window_len/clip_len must be >= 2 and window_step >= 1",
            ));
        }
        Ok(())
    }
}

/// What a sample looks like on the way in: solution 1 and the baseline read
/// MSTmaps, solution 2 and the baseline read video cubes.
#[derive(Debug, Clone, Copy)]
pub enum PredictInput<'a> {
    Map(&'a MstMap),
    Clip(&'a VideoCube),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrPrediction {
    pub sample_id: String,
    pub window_hrs: Vec<f64>,
    pub video_hr: f64,
}

// ── Shared readout ──────────────────────────────────────────────────────────

/// Bandpass → PSD → in-band peak, clamped to the supported range.
fn readout(trace: &Waveform, band: &BandLimits) -> Result<f64> {
    let filtered = bandpass_butter1(trace, band)?;
    let psd = fft_psd(&filtered, default_n_fft(filtered.len()))?;
    let hr = hr_from_psd(&psd, band)?;
    Ok(hr.clamp(HR_CLAMP.0, HR_CLAMP.1))
}

fn reduce_hrs(hrs: &[f64], reduce: Reduce) -> f64 {
    match reduce {
        Reduce::Mean => hrs.iter().sum::<f64>() / hrs.len() as f64,
        Reduce::Median => {
            let mut sorted = hrs.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("clamped rates are comparable"));
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            }
        }
    }
}

/// Per-frame mean green value of an input, the model-free pulse proxy.
fn green_trace(input: &PredictInput) -> Result<Waveform> {
    match input {
        PredictInput::Map(map) => {
            let (t, n) = (map.frames(), map.combos());
            let samples: Vec<f64> = (0..t)
                .map(|ti| (0..n).map(|ni| map.get(ti, ni, 1)).sum::<f64>() / n as f64)
                .collect();
            Waveform::new(samples, map.fs())
        }
        PredictInput::Clip(clip) => {
            let (t, h, w) = (clip.frames(), clip.height(), clip.width());
            let samples: Vec<f64> = (0..t)
                .map(|ti| {
                    let mut acc = 0.0;
                    for y in 0..h {
                        for x in 0..w {
                            acc += clip.get(ti, y, x, 1);
                        }
                    }
                    acc / (h * w) as f64
                })
                .collect();
            Waveform::new(samples, clip.fs())
        }
    }
}

/// Sliding windows over a bare trace, mirroring the MSTmap window contract.
fn trace_windows(trace: &Waveform, len: usize, step: usize) -> Result<Vec<Waveform>> {
    if len > trace.len() {
        return Err(CoreError::invalid(format!(
            "window of {len} samples does not fit a {}-sample trace",
            trace.len()
        )));
    }
    let count = (trace.len() - len) / step + 1;
    (0..count)
        .map(|w| Waveform::new(trace.samples()[w * step..w * step + len].to_vec(), trace.fs()))
        .collect()
}

// ── Inference ───────────────────────────────────────────────────────────────

/// Per-window heart rates plus the reduced video-level estimate.
///
/// The baseline path ignores `ckpt` entirely; the model paths require the
/// matching checkpoint kind.
pub fn predict_hr(
    sample_id: &str,
    input: &PredictInput,
    ckpt: Option<&ModelCheckpoint>,
    mode: PredictMode,
    cfg: &PredictConfig,
) -> Result<HrPrediction> {
    cfg.validate()?;
    let window_hrs = match mode {
        PredictMode::Baseline => {
            let trace = green_trace(input)?;
            trace_windows(&trace, cfg.window_len, cfg.window_step)?
                .iter()
                .map(|w| readout(w, &cfg.band))
                .collect::<Result<Vec<_>>>()?
        }
        PredictMode::Solution1 => {
            let map = match input {
                PredictInput::Map(m) => m,
                PredictInput::Clip(_) => {
                    return Err(CoreError::invalid(
                        "solution 1 reads MSTmaps, not video cubes",
                    ))
                }
            };
            let (config, params) = match ckpt {
                Some(ModelCheckpoint::StFormer { config, params }) => (config, params),
                _ => {
                    return Err(CoreError::invalid(
                        "solution 1 needs a map-transformer checkpoint",
                    ))
                }
            };
            let spec = WindowSpec::new(config.frames, cfg.window_step)?;
            sliding_windows(map, &spec)?
                .iter()
                .map(|w| {
                    let wave = st_former_forward(w, params, config)?;
                    readout(&wave, &cfg.band)
                })
                .collect::<Result<Vec<_>>>()?
        }
        PredictMode::Solution2 => {
            let clip = match input {
                PredictInput::Clip(c) => c,
                PredictInput::Map(_) => {
                    return Err(CoreError::invalid(
                        "solution 2 reads video cubes, not MSTmaps",
                    ))
                }
            };
            let (config, params) = match ckpt {
                Some(ModelCheckpoint::StEncoder { config, params }) => (config, params),
                _ => {
                    return Err(CoreError::invalid(
                        "solution 2 needs a video-encoder checkpoint",
                    ))
                }
            };
            let n_clips = clip.frames() / cfg.clip_len;
            if n_clips == 0 {
                return Err(CoreError::invalid(format!(
                    "sample of {} frames is shorter than one {}-frame clip",
                    clip.frames(),
                    cfg.clip_len
                )));
            }
            (0..n_clips)
                .map(|k| {
                    let chunk = clip.slice_frames(k * cfg.clip_len, (k + 1) * cfg.clip_len)?;
                    let block = st_encoder_forward(&chunk, params, config)?;
                    readout(&spatial_average(&block), &cfg.band)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let video_hr = reduce_hrs(&window_hrs, cfg.reduce);
    Ok(HrPrediction {
        sample_id: sample_id.to_string(),
        window_hrs,
        video_hr,
    })
}

// ── Prediction CSV ──────────────────────────────────────────────────────────

const WINDOWS_HEADER: &str = "sample_id,window_index,hr_bpm";
const SUMMARY_HEADER: &str = "sample_id,video_hr";

/// Writes the per-window table and the per-sample summary side by side.
pub fn write_predictions(
    preds: &[HrPrediction],
    windows_path: &Path,
    summary_path: &Path,
) -> Result<()> {
    let mut windows = String::from(WINDOWS_HEADER);
    windows.push('\n');
    for p in preds {
        check_id(&p.sample_id)?;
        for (i, hr) in p.window_hrs.iter().enumerate() {
            windows.push_str(&format!("{},{},{}\n", p.sample_id, i, hr));
        }
    }
    std::fs::File::create(windows_path)?.write_all(windows.as_bytes())?;
    write_prediction_summary(preds, summary_path)
}

/// Writes only the `sample_id,video_hr` summary (what ensembling consumes).
pub fn write_prediction_summary(preds: &[HrPrediction], path: &Path) -> Result<()> {
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for p in preds {
        check_id(&p.sample_id)?;
        summary.push_str(&format!("{},{}\n", p.sample_id, p.video_hr));
    }
    std::fs::File::create(path)?.write_all(summary.as_bytes())?;
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    if id.contains(',') || id.contains('\n') {
        return Err(CoreError::invalid(format!(
            "sample id {id:?} may not contain commas or newlines"
        )));
    }
    Ok(())
}

/// Reads a prediction summary back as (sample_id, video_hr) rows.
pub fn read_prediction_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SUMMARY_HEADER => {}
        _ => {
            return Err(CoreError::format(format!(
                "{}: prediction summary must start with header {SUMMARY_HEADER:?}",
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
        if fields.len() != 2 {
            return Err(CoreError::format(format!(
                "{}: line {}: expected 2 fields",
                path.display(),
                i + 2
            )));
        }
        let hr = fields[1].trim().parse::<f64>().map_err(|_| {
            CoreError::format(format!(
                "{}: line {}: bad video_hr {:?}",
                path.display(),
                i + 2,
                fields[1]
            ))
        })?;
        rows.push((fields[0].trim().to_string(), hr));
    }
    Ok(rows)
}

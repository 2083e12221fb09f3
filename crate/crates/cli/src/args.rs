//! Flag definitions and their resolution against optional JSON config files.
//!
//! Each tunable command owns three shapes: the clap `Args` struct (defaults
//! shown in `--help`), a `*File` struct mirroring the same keys for
//! `--config` (unknown keys rejected), and a fully-resolved `*Settings`
//! struct that the command echoes and runs. A setting resolves to the flag
//! when it was given explicitly (command line or environment), else the
//! config-file value, else the built-in default.

use crate::CliError;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const HR_RANGE: (f64, f64) = (40.0, 180.0);

// ── Shared plumbing ─────────────────────────────────────────────────────────

fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(
        m.value_source(id),
        Some(ValueSource::CommandLine | ValueSource::EnvVariable)
    )
}

/// Flag if explicitly given, else config-file value, else the flag's default.
fn pick<T>(m: &ArgMatches, id: &str, flag: T, file: Option<T>) -> T {
    if given(m, id) {
        flag
    } else {
        file.unwrap_or(flag)
    }
}

fn load_file<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn check_hr(what: &str, v: f64) -> Result<(), CliError> {
    if !(HR_RANGE.0..=HR_RANGE.1).contains(&v) {
        return Err(CliError::Usage(format!(
            "{what} {v} bpm is outside the supported range {}-{}",
            HR_RANGE.0, HR_RANGE.1
        )));
    }
    Ok(())
}

// ── Value enums ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Solution {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Solution1,
    Solution2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceArg {
    Mean,
    Median,
}

// ── synth ───────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for the dataset
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of samples to generate
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Fixed heart rate in bpm; omit to draw uniformly from --hr-min..=--hr-max
    #[arg(long)]
    pub hr: Option<f64>,
    /// Lower edge of the per-sample heart-rate draw, bpm
    #[arg(long, default_value_t = 48.0)]
    pub hr_min: f64,
    /// Upper edge of the per-sample heart-rate draw, bpm
    #[arg(long, default_value_t = 150.0)]
    pub hr_max: f64,
    /// Frame rate, Hz
    #[arg(long, default_value_t = 30.0)]
    pub fs: f64,
    /// Sample duration, seconds
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Additive noise level as a signal-to-noise ratio in dB; omit for noise-free
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Second-harmonic amplitude relative to the fundamental
    #[arg(long, default_value_t = 0.3)]
    pub harmonic: f64,
    /// ROI count R; MSTmaps get 2^R - 1 combination columns
    #[arg(long, default_value_t = 3)]
    pub rois: usize,
    /// Linear heart-rate drift, bpm per minute
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    /// Also write an RGB video cube (.vcub) per sample
    #[arg(long)]
    pub cubes: bool,
    /// Video cube height, pixels
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    /// Video cube width, pixels
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    /// RNG seed for per-sample draws
    #[arg(long, env = "PULSEFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SynthFile {
    n: Option<usize>,
    hr: Option<f64>,
    hr_min: Option<f64>,
    hr_max: Option<f64>,
    fs: Option<f64>,
    duration: Option<f64>,
    snr_db: Option<f64>,
    harmonic: Option<f64>,
    rois: Option<usize>,
    drift: Option<f64>,
    cubes: Option<bool>,
    height: Option<usize>,
    width: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SynthSettings {
    pub command: &'static str,
    pub out: PathBuf,
    pub n: usize,
    pub hr: Option<f64>,
    pub hr_min: f64,
    pub hr_max: f64,
    pub fs: f64,
    pub duration: f64,
    pub snr_db: Option<f64>,
    pub harmonic: f64,
    pub rois: usize,
    pub drift: f64,
    pub cubes: bool,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SynthArgs {
    pub fn resolve(self, m: &ArgMatches) -> Result<SynthSettings, CliError> {
        let f: SynthFile = load_file(self.config.as_deref())?;
        let s = SynthSettings {
            command: "synth",
            out: self.out,
            n: pick(m, "n", self.n, f.n),
            hr: if given(m, "hr") { self.hr } else { f.hr.or(self.hr) },
            hr_min: pick(m, "hr_min", self.hr_min, f.hr_min),
            hr_max: pick(m, "hr_max", self.hr_max, f.hr_max),
            fs: pick(m, "fs", self.fs, f.fs),
            duration: pick(m, "duration", self.duration, f.duration),
            snr_db: if given(m, "snr_db") {
                self.snr_db
            } else {
                f.snr_db.or(self.snr_db)
            },
            harmonic: pick(m, "harmonic", self.harmonic, f.harmonic),
            rois: pick(m, "rois", self.rois, f.rois),
            drift: pick(m, "drift", self.drift, f.drift),
            cubes: pick(m, "cubes", self.cubes, f.cubes),
            height: pick(m, "height", self.height, f.height),
            width: pick(m, "width", self.width, f.width),
            seed: pick(m, "seed", self.seed, f.seed),
        };
        if s.n == 0 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }
        if let Some(hr) = s.hr {
            check_hr("heart rate", hr)?;
        }
        check_hr("heart-rate range edge", s.hr_min)?;
        check_hr("heart-rate range edge", s.hr_max)?;
        if s.hr_min > s.hr_max {
            return Err(CliError::Usage(format!(
                "--hr-min {} exceeds --hr-max {}",
                s.hr_min, s.hr_max
            )));
        }
        Ok(s)
    }
}

// ── Shared training flag groups ─────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct ModelFlags {
    /// Transformer feature dimension D (solution 1)
    #[arg(long, default_value_t = 128)]
    pub feature_dim: usize,
    /// Transformer loop count L (solution 1)
    #[arg(long, default_value_t = 6)]
    pub loops: usize,
    /// Transformer MLP hidden width (solution 1)
    #[arg(long, default_value_t = 256)]
    pub mlp_hidden: usize,
    /// Encoder hidden channels (solution 2)
    #[arg(long, default_value_t = 8)]
    pub hidden_channels: usize,
    /// Encoder output grid S_sp (solution 2)
    #[arg(long, default_value_t = 2)]
    pub spatial_out: usize,
}

#[derive(Args, Debug)]
pub struct LossFlags {
    /// Passband lower edge, Hz
    #[arg(long, default_value_t = 0.66)]
    pub band_low: f64,
    /// Passband upper edge, Hz
    #[arg(long, default_value_t = 3.0)]
    pub band_high: f64,
    /// Sparsity exclusion half-width around the spectral peak, PSD bins
    #[arg(long, default_value_t = 6)]
    pub delta_f: usize,
    /// Periodicity segment count
    #[arg(long, default_value_t = 3)]
    pub segments: usize,
    /// Pearson term weight in the fine-tuning objective
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Max-cross-correlation term weight in the fine-tuning objective
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    solution: Option<Solution>,
    feature_dim: Option<usize>,
    loops: Option<usize>,
    mlp_hidden: Option<usize>,
    hidden_channels: Option<usize>,
    spatial_out: Option<usize>,
    band_low: Option<f64>,
    band_high: Option<f64>,
    delta_f: Option<usize>,
    segments: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    lr: Option<f64>,
    batch: Option<usize>,
    epochs: Option<usize>,
    weight_decay: Option<f64>,
    window: Option<usize>,
    step: Option<usize>,
    delta_t: Option<usize>,
    n_offsets: Option<usize>,
    flip_time: Option<bool>,
    flip_roi: Option<bool>,
    freq_resample: Option<bool>,
    freq_lo: Option<f64>,
    freq_hi: Option<f64>,
    pear_weight: Option<f64>,
    seed: Option<u64>,
}

/// One resolved shape serves both pretrain and finetune; they differ only in
/// defaults and in whether `init` is required.
#[derive(Debug, Serialize)]
pub struct TrainSettings {
    pub command: &'static str,
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub init: Option<PathBuf>,
    pub solution: Solution,
    pub feature_dim: usize,
    pub loops: usize,
    pub mlp_hidden: usize,
    pub hidden_channels: usize,
    pub spatial_out: usize,
    pub band_low: f64,
    pub band_high: f64,
    pub delta_f: usize,
    pub segments: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub window: usize,
    pub step: usize,
    pub delta_t: usize,
    pub n_offsets: usize,
    pub flip_time: bool,
    pub flip_roi: bool,
    pub freq_resample: bool,
    pub freq_lo: f64,
    pub freq_hi: f64,
    pub pear_weight: f64,
    pub seed: u64,
}

macro_rules! resolve_train {
    ($self:ident, $m:ident, $command:literal, $init:expr) => {{
        let f: TrainFile = load_file($self.config.as_deref())?;
        TrainSettings {
            command: $command,
            manifest: $self.manifest,
            out: $self.out,
            init: $init,
            solution: pick($m, "solution", $self.solution, f.solution),
            feature_dim: pick($m, "feature_dim", $self.model.feature_dim, f.feature_dim),
            loops: pick($m, "loops", $self.model.loops, f.loops),
            mlp_hidden: pick($m, "mlp_hidden", $self.model.mlp_hidden, f.mlp_hidden),
            hidden_channels: pick(
                $m,
                "hidden_channels",
                $self.model.hidden_channels,
                f.hidden_channels,
            ),
            spatial_out: pick($m, "spatial_out", $self.model.spatial_out, f.spatial_out),
            band_low: pick($m, "band_low", $self.loss.band_low, f.band_low),
            band_high: pick($m, "band_high", $self.loss.band_high, f.band_high),
            delta_f: pick($m, "delta_f", $self.loss.delta_f, f.delta_f),
            segments: pick($m, "segments", $self.loss.segments, f.segments),
            alpha: pick($m, "alpha", $self.loss.alpha, f.alpha),
            beta: pick($m, "beta", $self.loss.beta, f.beta),
            lr: pick($m, "lr", $self.lr, f.lr),
            batch: pick($m, "batch", $self.batch, f.batch),
            epochs: pick($m, "epochs", $self.epochs, f.epochs),
            weight_decay: pick($m, "weight_decay", $self.weight_decay, f.weight_decay),
            window: pick($m, "window", $self.window, f.window),
            step: pick($m, "step", $self.step, f.step),
            delta_t: pick($m, "delta_t", $self.delta_t, f.delta_t),
            n_offsets: pick($m, "n_offsets", $self.n_offsets, f.n_offsets),
            flip_time: pick($m, "flip_time", $self.flip_time, f.flip_time),
            flip_roi: pick($m, "flip_roi", $self.flip_roi, f.flip_roi),
            freq_resample: pick($m, "freq_resample", $self.freq_resample, f.freq_resample),
            freq_lo: pick($m, "freq_lo", $self.freq_lo, f.freq_lo),
            freq_hi: pick($m, "freq_hi", $self.freq_hi, f.freq_hi),
            pear_weight: pick($m, "pear_weight", $self.pear_weight, f.pear_weight),
            seed: pick($m, "seed", $self.seed, f.seed),
        }
    }};
}

// ── pretrain ────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Dataset manifest (paths resolve relative to it)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for model.rppg, loss_trace.csv, run_config.json
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to continue from instead of fresh initialization
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Which model family to train
    #[arg(long, default_value = "1")]
    pub solution: Solution,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub loss: LossFlags,
    /// Learning rate
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Minibatch size
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Training epochs
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Decoupled weight decay
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    /// Sliding-window length in frames (solution-1 maps)
    #[arg(long, default_value_t = 300)]
    pub window: usize,
    /// Sliding-window step in frames
    #[arg(long, default_value_t = 15)]
    pub step: usize,
    /// Snippet length Δt for spatiotemporal sampling (solution 2)
    #[arg(long, default_value_t = 150)]
    pub delta_t: usize,
    /// Snippets per spatial cell (solution 2)
    #[arg(long, default_value_t = 2)]
    pub n_offsets: usize,
    /// Enable random time-reversal augmentation
    #[arg(long)]
    pub flip_time: bool,
    /// Enable random ROI-row-reversal augmentation
    #[arg(long)]
    pub flip_roi: bool,
    /// Enable random frequency-resampling augmentation
    #[arg(long)]
    pub freq_resample: bool,
    /// Frequency-resampling factor range, lower edge
    #[arg(long, default_value_t = 0.7)]
    pub freq_lo: f64,
    /// Frequency-resampling factor range, upper edge
    #[arg(long, default_value_t = 1.4)]
    pub freq_hi: f64,
    /// Pearson term weight (solution-1 fine-tuning; unused here)
    #[arg(long, default_value_t = 1.0)]
    pub pear_weight: f64,
    /// RNG seed for initialization, batching, and augmentation
    #[arg(long, env = "PULSEFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl PretrainArgs {
    pub fn resolve(self, m: &ArgMatches) -> Result<TrainSettings, CliError> {
        let init = self.init.clone();
        Ok(resolve_train!(self, m, "pretrain", init))
    }
}

// ── finetune ────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Dataset manifest (paths resolve relative to it)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for model.rppg, loss_trace.csv, run_config.json
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pretrained checkpoint to start from
    #[arg(long)]
    pub init: PathBuf,
    /// Which model family to train
    #[arg(long, default_value = "1")]
    pub solution: Solution,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub loss: LossFlags,
    /// Learning rate
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// Minibatch size
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Training epochs
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Decoupled weight decay
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    /// Sliding-window length in frames (solution-1 maps)
    #[arg(long, default_value_t = 300)]
    pub window: usize,
    /// Sliding-window step in frames
    #[arg(long, default_value_t = 15)]
    pub step: usize,
    /// Snippet length Δt for spatiotemporal sampling (solution 2)
    #[arg(long, default_value_t = 150)]
    pub delta_t: usize,
    /// Snippets per spatial cell (solution 2)
    #[arg(long, default_value_t = 2)]
    pub n_offsets: usize,
    /// Enable random time-reversal augmentation
    #[arg(long)]
    pub flip_time: bool,
    /// Enable random ROI-row-reversal augmentation
    #[arg(long)]
    pub flip_roi: bool,
    /// Enable random frequency-resampling augmentation
    #[arg(long)]
    pub freq_resample: bool,
    /// Frequency-resampling factor range, lower edge
    #[arg(long, default_value_t = 0.7)]
    pub freq_lo: f64,
    /// Frequency-resampling factor range, upper edge
    #[arg(long, default_value_t = 1.4)]
    pub freq_hi: f64,
    /// Pearson term weight (solution-1 fine-tuning)
    #[arg(long, default_value_t = 1.0)]
    pub pear_weight: f64,
    /// RNG seed for batching and augmentation
    #[arg(long, env = "PULSEFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl FinetuneArgs {
    pub fn resolve(self, m: &ArgMatches) -> Result<TrainSettings, CliError> {
        let init = Some(self.init.clone());
        Ok(resolve_train!(self, m, "finetune", init))
    }
}

// ── predict ─────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Dataset manifest (paths resolve relative to it)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for predictions.csv, summary.csv, run_config.json
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Inference path
    #[arg(long, value_enum, default_value = "baseline")]
    pub mode: Mode,
    /// Model checkpoint (required for solution1/solution2, ignored by baseline)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sliding-window length in frames
    #[arg(long, default_value_t = 300)]
    pub window: usize,
    /// Sliding-window step in frames
    #[arg(long, default_value_t = 15)]
    pub step: usize,
    /// Non-overlapping clip length in frames (solution 2)
    #[arg(long, default_value_t = 300)]
    pub clip_len: usize,
    /// Passband lower edge, Hz
    #[arg(long, default_value_t = 0.66)]
    pub band_low: f64,
    /// Passband upper edge, Hz
    #[arg(long, default_value_t = 3.0)]
    pub band_high: f64,
    /// Window-to-video reduction
    #[arg(long, value_enum, default_value = "mean")]
    pub reduce: ReduceArg,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct PredictFile {
    mode: Option<Mode>,
    window: Option<usize>,
    step: Option<usize>,
    clip_len: Option<usize>,
    band_low: Option<f64>,
    band_high: Option<f64>,
    reduce: Option<ReduceArg>,
}

#[derive(Debug, Serialize)]
pub struct PredictSettings {
    pub command: &'static str,
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub mode: Mode,
    pub checkpoint: Option<PathBuf>,
    pub window: usize,
    pub step: usize,
    pub clip_len: usize,
    pub band_low: f64,
    pub band_high: f64,
    pub reduce: ReduceArg,
}

impl PredictArgs {
    pub fn resolve(self, m: &ArgMatches) -> Result<PredictSettings, CliError> {
        let f: PredictFile = load_file(self.config.as_deref())?;
        Ok(PredictSettings {
            command: "predict",
            manifest: self.manifest,
            out: self.out,
            mode: pick(m, "mode", self.mode, f.mode),
            checkpoint: self.checkpoint,
            window: pick(m, "window", self.window, f.window),
            step: pick(m, "step", self.step, f.step),
            clip_len: pick(m, "clip_len", self.clip_len, f.clip_len),
            band_low: pick(m, "band_low", self.band_low, f.band_low),
            band_high: pick(m, "band_high", self.band_high, f.band_high),
            reduce: pick(m, "reduce", self.reduce, f.reduce),
        })
    }
}

// ── evaluate / ensemble ─────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Prediction summary CSV (sample_id,video_hr)
    #[arg(long)]
    pub predictions: PathBuf,
    /// Manifest supplying ground-truth heart rates
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report path; run_config.json lands beside it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct EvaluateSettings {
    pub command: &'static str,
    pub predictions: PathBuf,
    pub manifest: PathBuf,
    pub out: PathBuf,
}

impl EvaluateArgs {
    pub fn into_settings(self) -> EvaluateSettings {
        EvaluateSettings {
            command: "evaluate",
            predictions: self.predictions,
            manifest: self.manifest,
            out: self.out,
        }
    }
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// Output summary path; run_config.json lands beside it
    #[arg(long)]
    pub out: PathBuf,
    /// Two or more prediction summaries to average
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EnsembleSettings {
    pub command: &'static str,
    pub out: PathBuf,
    pub inputs: Vec<PathBuf>,
}

impl EnsembleArgs {
    pub fn into_settings(self) -> EnsembleSettings {
        EnsembleSettings {
            command: "ensemble",
            out: self.out,
            inputs: self.inputs,
        }
    }
}

//! Command bodies. Every command echoes its resolved configuration to stdout
//! and drops the same JSON as `run_config.json` beside its outputs before
//! doing any work, so a run is reproducible from its artifacts alone.

use crate::args::{
    EnsembleSettings, EvaluateSettings, Mode, PredictSettings, ReduceArg, Solution, SynthSettings,
    TrainSettings,
};
use crate::CliError;
use pulseforge_core::loss::LossConfig;
use pulseforge_core::model::{
    read_checkpoint, write_checkpoint, ModelCheckpoint, StEncoderConfig, StEncoderParams,
    StFormerConfig, StFormerParams,
};
use pulseforge_core::mstmap::{
    build_mstmap, read_mstmap, sliding_windows, write_mstmap, MstMap, WindowSpec, MSTMAP_CHANNELS,
};
use pulseforge_core::pipeline::{
    ensemble, evaluate, predict_hr, pretrain_contrastive, pretrain_selfsup, read_prediction_summary,
    write_eval_report, write_loss_trace, write_prediction_summary, write_predictions,
    AugmentFlags, HrPrediction, PredictConfig, PredictInput, PredictMode, Reduce, TraceRow,
    TrainConfig,
};
use pulseforge_core::pipeline::{finetune_stencoder, finetune_stformer};
use pulseforge_core::signal::{
    read_video_cube, write_video_cube, write_waveform_csv, BandLimits, VideoCube, Waveform,
};
use pulseforge_core::signal::read_waveform_csv;
use pulseforge_core::synth::{
    gen_pulse, gen_roi_stats, gen_video_cube, read_manifest, write_manifest, ManifestRow,
    SynthSpec,
};
use pulseforge_core::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

// ── Shared helpers ──────────────────────────────────────────────────────────

/// Print the resolved configuration and persist it beside the outputs.
fn echo_config<T: Serialize>(settings: &T, dir: &Path) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(settings)
        .map_err(|e| CliError::Usage(format!("cannot serialize configuration: {e}")))?;
    json.push('\n');
    print!("{json}");
    std::fs::write(dir.join("run_config.json"), &json).map_err(CoreError::from)?;
    Ok(())
}

/// Attach the offending path to bare I/O errors so the user sees which file
/// failed; other error kinds already carry their own context.
fn ctx<T>(r: pulseforge_core::Result<T>, what: &str, path: &Path) -> Result<T, CliError> {
    r.map_err(|e| match e {
        CoreError::Io(io) => {
            CliError::Core(CoreError::format(format!("{what} {}: {io}", path.display())))
        }
        other => CliError::Core(other),
    })
}

/// Directory that holds `path`, defaulting to the current one.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CoreError::from)?;
    Ok(())
}

/// Video-cube path for a manifest row: the row's path if it already names a
/// cube, else the sibling file with the `.vcub` extension.
fn cube_path(base: &Path, row_path: &str) -> PathBuf {
    let p = base.join(row_path);
    if p.extension().is_some_and(|e| e == "vcub") {
        p
    } else {
        p.with_extension("vcub")
    }
}

/// Ground-truth waveform path: the sibling file with the `.gt.csv` extension.
fn gt_path(base: &Path, row_path: &str) -> PathBuf {
    base.join(row_path).with_extension("gt.csv")
}

// ── synth ───────────────────────────────────────────────────────────────────

pub fn cmd_synth(s: &SynthSettings) -> Result<(), CliError> {
    ensure_dir(&s.out)?;
    echo_config(s, &s.out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut rows = Vec::with_capacity(s.n);
    for i in 0..s.n {
        let sample_seed: u64 = rng.gen();
        let hr = match s.hr {
            Some(hr) => hr,
            None => rng.gen_range(s.hr_min..=s.hr_max),
        };
        let spec = SynthSpec {
            hr_bpm: hr,
            fs: s.fs,
            duration_s: s.duration,
            snr_db: s.snr_db.unwrap_or(f64::INFINITY),
            harmonic_ratio: s.harmonic,
            roi_gains: vec![1.0],
            seed: sample_seed,
            hr_drift_bpm_per_min: s.drift,
        };
        let id = format!("sample_{i:03}");

        let stats = gen_roi_stats(&spec, s.rois)?;
        let map = build_mstmap(&stats, s.fs)?;
        write_mstmap(&map, &s.out.join(format!("{id}.mstm")))?;

        let clean = SynthSpec {
            snr_db: f64::INFINITY,
            ..spec.clone()
        };
        write_waveform_csv(
            &gen_pulse(&clean)?.waveform,
            &s.out.join(format!("{id}.gt.csv")),
        )?;

        if s.cubes {
            let (cube, _) = gen_video_cube(&spec, s.height, s.width)?;
            write_video_cube(&cube, &s.out.join(format!("{id}.vcub")))?;
        }

        rows.push(ManifestRow {
            sample_id: id,
            path: format!("sample_{i:03}.mstm"),
            hr_bpm: hr,
            fs: s.fs,
            duration_s: s.duration,
            seed: sample_seed,
        });
    }
    write_manifest(&rows, &s.out.join("manifest.csv"))?;
    println!("synth: wrote {} samples to {}", s.n, s.out.display());
    Ok(())
}

// ── pretrain / finetune ─────────────────────────────────────────────────────

pub fn cmd_pretrain(s: &TrainSettings) -> Result<(), CliError> {
    run_training(s, false)
}

pub fn cmd_finetune(s: &TrainSettings) -> Result<(), CliError> {
    run_training(s, true)
}

fn train_config(s: &TrainSettings) -> TrainConfig {
    TrainConfig {
        lr: s.lr,
        batch_size: s.batch,
        epochs: s.epochs,
        weight_decay: s.weight_decay,
        betas: (0.9, 0.999),
        seed: s.seed,
        augment: AugmentFlags {
            flip_time: s.flip_time,
            flip_roi: s.flip_roi,
            freq_resample: s.freq_resample,
            freq_range: (s.freq_lo, s.freq_hi),
        },
        pear_weight: s.pear_weight,
        delta_t: s.delta_t,
        n_offsets: s.n_offsets,
    }
}

fn loss_config(s: &TrainSettings) -> Result<LossConfig, CliError> {
    Ok(LossConfig {
        band: BandLimits::new(s.band_low, s.band_high)?,
        delta_f_bins: s.delta_f,
        n_segments: s.segments,
        alpha: s.alpha,
        beta: s.beta,
        n_fft: None,
    })
}

/// Print one summary line per epoch from a finished loss trace. Every epoch
/// runs the same number of optimizer steps, so the "total" rows split evenly.
fn log_epochs(trace: &[TraceRow], epochs: usize) {
    let totals: Vec<&TraceRow> = trace.iter().filter(|r| r.loss_name == "total").collect();
    if totals.is_empty() || epochs == 0 || !totals.len().is_multiple_of(epochs) {
        return;
    }
    let per_epoch = totals.len() / epochs;
    for e in 0..epochs {
        let last = totals[(e + 1) * per_epoch - 1];
        println!(
            "epoch {}/{}: {} steps, total loss {:.6}",
            e + 1,
            epochs,
            per_epoch,
            last.value
        );
    }
}

fn run_training(s: &TrainSettings, supervised: bool) -> Result<(), CliError> {
    ensure_dir(&s.out)?;
    echo_config(s, &s.out)?;

    let rows = ctx(read_manifest(&s.manifest), "cannot read manifest", &s.manifest)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "manifest {} lists no samples",
            s.manifest.display()
        )));
    }
    let base = parent_dir(&s.manifest);
    let train_cfg = train_config(s);
    let loss_cfg = loss_config(s)?;

    let (ckpt, trace) = match s.solution {
        Solution::One => {
            let window_spec = WindowSpec::new(s.window, s.step)?;
            let mut maps = Vec::with_capacity(rows.len());
            for row in &rows {
                let p = base.join(&row.path);
                maps.push(ctx(read_mstmap(&p), "cannot read map", &p)?);
            }
            let mut windows: Vec<MstMap> = Vec::new();
            let mut labels: Vec<Waveform> = Vec::new();
            for (map, row) in maps.iter().zip(&rows) {
                let slices = sliding_windows(map, &window_spec)?;
                if supervised {
                    let p = gt_path(&base, &row.path);
                    let gt = ctx(read_waveform_csv(&p), "cannot read ground truth", &p)?;
                    if gt.len() != map.frames() {
                        return Err(CoreError::shape(format!(
                            "{}: ground truth has {} samples but the map has {} frames",
                            row.sample_id,
                            gt.len(),
                            map.frames()
                        ))
                        .into());
                    }
                    for (w, _) in slices.iter().enumerate() {
                        let start = w * s.step;
                        labels.push(Waveform::new(
                            gt.samples()[start..start + s.window].to_vec(),
                            gt.fs(),
                        )?);
                    }
                }
                windows.extend(slices);
            }

            let (config, params) = match &s.init {
                Some(path) => match ctx(read_checkpoint(path), "cannot read checkpoint", path)? {
                    ModelCheckpoint::StFormer { config, params } => (config, params),
                    ModelCheckpoint::StEncoder { .. } => {
                        return Err(CoreError::invalid(format!(
                            "{}: checkpoint holds a solution-2 encoder, not a solution-1 transformer",
                            path.display()
                        ))
                        .into())
                    }
                },
                None => {
                    let config = StFormerConfig {
                        feature_dim: s.feature_dim,
                        loops: s.loops,
                        tokens: windows[0].combos(),
                        frames: s.window,
                        channels: MSTMAP_CHANNELS,
                        mlp_hidden: s.mlp_hidden,
                        ln_bypass: false,
                    };
                    let params = StFormerParams::init(&config, s.seed)?;
                    (config, params)
                }
            };

            let (params, trace) = if supervised {
                let samples: Vec<(MstMap, Waveform)> =
                    windows.into_iter().zip(labels).collect();
                finetune_stformer(&samples, params, &config, &loss_cfg, &train_cfg)?
            } else {
                pretrain_selfsup(&windows, params, &config, &loss_cfg, &train_cfg)?
            };
            (ModelCheckpoint::StFormer { config, params }, trace)
        }
        Solution::Two => {
            let mut clips = Vec::with_capacity(rows.len());
            for row in &rows {
                let p = cube_path(&base, &row.path);
                clips.push(ctx(read_video_cube(&p, row.fs), "cannot read video cube", &p)?);
            }

            let (config, params) = match &s.init {
                Some(path) => match ctx(read_checkpoint(path), "cannot read checkpoint", path)? {
                    ModelCheckpoint::StEncoder { config, params } => (config, params),
                    ModelCheckpoint::StFormer { .. } => {
                        return Err(CoreError::invalid(format!(
                            "{}: checkpoint holds a solution-1 transformer, not a solution-2 encoder",
                            path.display()
                        ))
                        .into())
                    }
                },
                None => {
                    let config = StEncoderConfig {
                        hidden_channels: s.hidden_channels,
                        spatial_out: s.spatial_out,
                    };
                    let params = StEncoderParams::init(&config, s.seed)?;
                    (config, params)
                }
            };

            let (params, trace) = if supervised {
                let mut samples: Vec<(VideoCube, Waveform)> = Vec::with_capacity(clips.len());
                for (clip, row) in clips.into_iter().zip(&rows) {
                    let p = gt_path(&base, &row.path);
                    let gt = ctx(read_waveform_csv(&p), "cannot read ground truth", &p)?;
                    samples.push((clip, gt));
                }
                finetune_stencoder(&samples, params, &config, &loss_cfg, &train_cfg)?
            } else {
                pretrain_contrastive(&clips, params, &config, &loss_cfg.band, &train_cfg)?
            };
            (ModelCheckpoint::StEncoder { config, params }, trace)
        }
    };

    write_checkpoint(&ckpt, &s.out.join("model.rppg"))?;
    write_loss_trace(&trace, &s.out.join("loss_trace.csv"))?;
    log_epochs(&trace, s.epochs);
    println!(
        "{}: wrote model.rppg and loss_trace.csv to {}",
        s.command,
        s.out.display()
    );
    Ok(())
}

// ── predict ─────────────────────────────────────────────────────────────────

pub fn cmd_predict(s: &PredictSettings) -> Result<(), CliError> {
    ensure_dir(&s.out)?;
    echo_config(s, &s.out)?;

    let rows = ctx(read_manifest(&s.manifest), "cannot read manifest", &s.manifest)?;
    let base = parent_dir(&s.manifest);
    let ckpt = match s.checkpoint.as_deref() {
        Some(p) => Some(ctx(read_checkpoint(p), "cannot read checkpoint", p)?),
        None => None,
    };
    let mode = match s.mode {
        Mode::Baseline => PredictMode::Baseline,
        Mode::Solution1 => PredictMode::Solution1,
        Mode::Solution2 => PredictMode::Solution2,
    };
    let cfg = PredictConfig {
        window_len: s.window,
        window_step: s.step,
        clip_len: s.clip_len,
        band: BandLimits::new(s.band_low, s.band_high)?,
        reduce: match s.reduce {
            ReduceArg::Mean => Reduce::Mean,
            ReduceArg::Median => Reduce::Median,
        },
    };

    let mut preds = Vec::with_capacity(rows.len());
    for row in &rows {
        let path = base.join(&row.path);
        // Baseline follows the manifest's artifact kind; the solutions pin it.
        let use_cube = match s.mode {
            Mode::Baseline => path.extension().is_some_and(|e| e == "vcub"),
            Mode::Solution1 => false,
            Mode::Solution2 => true,
        };
        let pred = if use_cube {
            let p = cube_path(&base, &row.path);
            let clip = ctx(read_video_cube(&p, row.fs), "cannot read video cube", &p)?;
            predict_hr(&row.sample_id, &PredictInput::Clip(&clip), ckpt.as_ref(), mode, &cfg)?
        } else {
            let map = ctx(read_mstmap(&path), "cannot read map", &path)?;
            predict_hr(&row.sample_id, &PredictInput::Map(&map), ckpt.as_ref(), mode, &cfg)?
        };
        preds.push(pred);
    }

    write_predictions(
        &preds,
        &s.out.join("predictions.csv"),
        &s.out.join("summary.csv"),
    )?;
    println!(
        "predict: wrote predictions.csv and summary.csv for {} samples to {}",
        preds.len(),
        s.out.display()
    );
    Ok(())
}

// ── evaluate ────────────────────────────────────────────────────────────────

pub fn cmd_evaluate(s: &EvaluateSettings) -> Result<(), CliError> {
    let dir = parent_dir(&s.out);
    ensure_dir(&dir)?;
    echo_config(s, &dir)?;

    let preds: Vec<HrPrediction> = ctx(
        read_prediction_summary(&s.predictions),
        "cannot read predictions",
        &s.predictions,
    )?
        .into_iter()
        .map(|(sample_id, video_hr)| HrPrediction {
            sample_id,
            window_hrs: Vec::new(),
            video_hr,
        })
        .collect();
    let gt: Vec<(String, f64)> = ctx(read_manifest(&s.manifest), "cannot read manifest", &s.manifest)?
        .into_iter()
        .map(|r| (r.sample_id, r.hr_bpm))
        .collect();

    let report = evaluate(&preds, &gt)?;
    write_eval_report(&report, &s.out)?;
    println!("rmse={}", report.rmse);
    Ok(())
}

// ── ensemble ────────────────────────────────────────────────────────────────

pub fn cmd_ensemble(s: &EnsembleSettings) -> Result<(), CliError> {
    if s.inputs.len() < 2 {
        return Err(CliError::Usage(
            "ensemble needs at least two prediction summaries".into(),
        ));
    }
    let dir = parent_dir(&s.out);
    ensure_dir(&dir)?;
    echo_config(s, &dir)?;

    let mut runs: Vec<Vec<HrPrediction>> = Vec::with_capacity(s.inputs.len());
    for path in &s.inputs {
        runs.push(
            ctx(read_prediction_summary(path), "cannot read predictions", path)?
                .into_iter()
                .map(|(sample_id, video_hr)| HrPrediction {
                    sample_id,
                    window_hrs: Vec::new(),
                    video_hr,
                })
                .collect(),
        );
    }
    let merged = ensemble(&runs)?;
    write_prediction_summary(&merged, &s.out)?;
    println!(
        "ensemble: averaged {} runs into {}",
        s.inputs.len(),
        s.out.display()
    );
    Ok(())
}

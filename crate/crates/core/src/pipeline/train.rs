//! The three training regimes: self-supervised pretraining of the map
//! transformer, contrastive pretraining of the video encoder, and supervised
//! fine-tuning of either. Every loop is a pure function of (inputs, config):
//! batches are visited in ascending index order, random draws come from one
//! seeded stream, and repeated runs produce identical parameters and traces.

use super::augment::{augment_mstmap, flip_roi, flip_time, freq_resample, AugmentFlags};
use super::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::loss::{
    contrastive_pretrain_loss, finetune_loss, pearson_loss, total_selfsup_loss, FinetuneInputs,
    LossConfig,
};
use crate::model::{
    sample_st_rppg, st_encoder_backward, st_encoder_forward_with_tape, st_former_backward,
    st_former_forward_with_tape, ParamTensors, StEncoderConfig, StEncoderParams, StFormerConfig,
    StFormerParams,
};
use crate::mstmap::MstMap;
use crate::signal::{fft_psd, fft_psd_vjp, standardize, standardize_vjp, BandLimits, VideoCube, Waveform};
use crate::{CoreError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

// ── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub seed: u64,
    pub augment: AugmentFlags,
    /// Weight of the Pearson term in solution-1 fine-tuning.
    pub pear_weight: f64,
    /// Snippet length for spatiotemporal sampling (solution 2).
    pub delta_t: usize,
    /// Snippets per spatial cell (solution 2).
    pub n_offsets: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 4,
            epochs: 1,
            weight_decay: 1e-2,
            betas: (0.9, 0.999),
            seed: 0,
            augment: AugmentFlags::default(),
            pear_weight: 1.0,
            delta_t: 150,
            n_offsets: 2,
        }
    }
}

impl TrainConfig {
    /// The fine-tuning default differs from pretraining only in step size.
    pub fn finetune_default() -> Self {
        TrainConfig {
            lr: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self, min_batch: usize) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(CoreError::invalid(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.batch_size < min_batch {
            return Err(CoreError::invalid(format!(
                "batch size {} below the minimum {min_batch} for this regime",
                self.batch_size
            )));
        }
        if self.delta_t < 2 || self.n_offsets < 1 {
            return Err(CoreError::invalid(
                "delta_t must be >= 2 and n_offsets >= 1",
            ));
        }
        self.augment.validate()
    }

    pub fn optim(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

// ── Loss traces ─────────────────────────────────────────────────────────────

/// One named loss value at one optimizer step (steps are 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss_name: String,
    pub value: f64,
}

impl TraceRow {
    fn new(step: usize, name: &str, value: f64) -> Self {
        TraceRow {
            step,
            loss_name: name.to_string(),
            value,
        }
    }
}

const TRACE_HEADER: &str = "step,loss_name,value";

pub fn write_loss_trace(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step, r.loss_name, r.value));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_loss_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(CoreError::format(format!(
                "{}: loss trace must start with header {TRACE_HEADER:?}",
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
        if fields.len() != 3 {
            return Err(CoreError::format(format!(
                "{}: line {}: expected 3 fields",
                path.display(),
                i + 2
            )));
        }
        let bad = |what: &str| {
            CoreError::format(format!("{}: line {}: bad {what}", path.display(), i + 2))
        };
        rows.push(TraceRow {
            step: fields[0].trim().parse().map_err(|_| bad("step"))?,
            loss_name: fields[1].trim().to_string(),
            value: fields[2].trim().parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(rows)
}

// ── Shared helpers ──────────────────────────────────────────────────────────

fn accumulate<P: ParamTensors>(acc: &mut P, delta: &P) {
    for ((_, a), (_, d)) in acc
        .named_tensors_mut()
        .into_iter()
        .zip(delta.named_tensors())
    {
        for (x, y) in a.data_mut().iter_mut().zip(d.data()) {
            *x += y;
        }
    }
}

/// Two distinct indices drawn from the stream; requires len >= 2.
fn draw_pair(rng: &mut ChaCha8Rng, len: usize) -> (usize, usize) {
    let a = rng.gen_range(0..len);
    let mut b = rng.gen_range(0..len - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Scatters per-snippet sample gradients back onto the T×S×S block grid.
fn scatter_snippet_grads(
    d_block: &mut [f64],
    s_sp: usize,
    samples: &[crate::model::StRppgSample],
    grads: &[Vec<f64>],
) {
    for (sample, g) in samples.iter().zip(grads) {
        for (k, &gv) in g.iter().enumerate() {
            let t = sample.offset + k;
            d_block[(t * s_sp + sample.cell_row) * s_sp + sample.cell_col] += gv;
        }
    }
}

/// Applies the same time-axis transforms to a ground-truth waveform that
/// [`augment_mstmap`] applied to the map, so labels stay aligned.
fn augment_labeled(
    map: &MstMap,
    gt: &Waveform,
    flags: &AugmentFlags,
    rng: &mut ChaCha8Rng,
) -> Result<(MstMap, Waveform, f64)> {
    flags.validate()?;
    let mut out_map = map.clone();
    let mut out_gt = gt.samples().to_vec();
    let mut hr_scale = 1.0;
    if flags.flip_time && rng.gen_bool(0.5) {
        out_map = flip_time(&out_map);
        out_gt.reverse();
    }
    if flags.flip_roi && rng.gen_bool(0.5) {
        out_map = flip_roi(&out_map);
    }
    if flags.freq_resample && rng.gen_bool(0.5) {
        let factor = rng.gen_range(flags.freq_range.0..=flags.freq_range.1);
        let resampled = freq_resample(&out_map, factor)?;
        out_map = resampled.map;
        hr_scale = factor;
        let last = (out_gt.len() - 1) as f64;
        let src = out_gt.clone();
        for (t, slot) in out_gt.iter_mut().enumerate() {
            let pos = (t as f64 * factor).min(last);
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            *slot = if i0 + 1 < src.len() {
                src[i0] * (1.0 - frac) + src[i0 + 1] * frac
            } else {
                src[i0]
            };
        }
    }
    Ok((out_map, Waveform::new(out_gt, gt.fs())?, hr_scale))
}

// ── Self-supervised pretraining (solution 1) ────────────────────────────────

/// Minibatch loop over equal-length MSTmap windows: forward the transformer,
/// standardize its output, apply the combined self-supervised objective,
/// backpropagate, and take one AdamW step per batch. Emits one trace row per
/// loss component per step.
pub fn pretrain_selfsup(
    windows: &[MstMap],
    mut params: StFormerParams,
    model_cfg: &StFormerConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<(StFormerParams, Vec<TraceRow>)> {
    cfg.validate(1)?;
    loss_cfg.validate()?;
    if windows.is_empty() {
        return Err(CoreError::invalid("pretraining needs at least one window"));
    }
    let frames = windows[0].frames();
    if windows.iter().any(|w| w.frames() != frames) {
        return Err(CoreError::shape(
            "pretraining windows must share a frame count".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamWState::new(&params);
    let optim = cfg.optim();
    let mut trace = Vec::new();

    for _ in 0..cfg.epochs {
        for batch in (0..windows.len()).collect::<Vec<_>>().chunks(cfg.batch_size) {
            let mut raws = Vec::with_capacity(batch.len());
            let mut tapes = Vec::with_capacity(batch.len());
            let mut std_batch = Vec::with_capacity(batch.len());
            for &i in batch {
                let map = if cfg.augment.any() {
                    augment_mstmap(&windows[i], &cfg.augment, &mut rng)?.map
                } else {
                    windows[i].clone()
                };
                let (wave, tape) = st_former_forward_with_tape(&map, &params, model_cfg)?;
                std_batch.push(standardize(&wave));
                raws.push(wave);
                tapes.push(tape);
            }
            let loss = total_selfsup_loss(&std_batch, loss_cfg)?;

            let mut grad_acc = StFormerParams::zeros(model_cfg);
            for ((raw, tape), d_std) in raws.iter().zip(&tapes).zip(&loss.grads) {
                let d_raw = standardize_vjp(raw.samples(), d_std)?;
                let (g, _) = st_former_backward(tape, &params, model_cfg, &d_raw)?;
                accumulate(&mut grad_acc, &g);
            }
            adamw_step(&mut params, &grad_acc, &mut state, &optim)?;

            let step = state.step_count() as usize;
            for (name, value) in [
                ("band", loss.band),
                ("sparse", loss.sparse),
                ("variance", loss.variance),
                ("periodic", loss.periodic),
                ("total", loss.total),
            ] {
                trace.push(TraceRow::new(step, name, value));
            }
        }
    }
    Ok((params, trace))
}

// ── Contrastive pretraining (solution 2) ────────────────────────────────────

/// Per step: draw two distinct clips, encode each to an ST-rPPG block, sample
/// snippets from every spatial cell, and pull within-clip PSDs together while
/// pushing cross-clip PSDs apart. One epoch makes ⌊len/2⌋ (at least one)
/// steps.
pub fn pretrain_contrastive(
    clips: &[VideoCube],
    mut params: StEncoderParams,
    model_cfg: &StEncoderConfig,
    band: &BandLimits,
    cfg: &TrainConfig,
) -> Result<(StEncoderParams, Vec<TraceRow>)> {
    cfg.validate(2)?;
    if clips.len() < 2 {
        return Err(CoreError::invalid(
            "contrastive pretraining needs at least two clips",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamWState::new(&params);
    let optim = cfg.optim();
    let mut trace = Vec::new();
    let steps_per_epoch = (clips.len() / 2).max(1);

    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let (ia, ib) = draw_pair(&mut rng, clips.len());
            let mut grad_acc = StEncoderParams::zeros(model_cfg);
            let mut per_clip = Vec::with_capacity(2);
            for &i in &[ia, ib] {
                let (block, tape) = st_encoder_forward_with_tape(&clips[i], &params, model_cfg)?;
                let snips = sample_st_rppg(&block, cfg.delta_t, cfg.n_offsets, rng.gen())?;
                let n_fft = crate::signal::default_n_fft(cfg.delta_t);
                let psds = snips
                    .iter()
                    .map(|s| fft_psd(&s.waveform, n_fft))
                    .collect::<Result<Vec<_>>>()?;
                per_clip.push((block, tape, snips, psds, n_fft));
            }
            let (block_a, tape_a, snips_a, psds_a, n_fft) = &per_clip[0];
            let (block_b, tape_b, snips_b, psds_b, _) = &per_clip[1];
            let ctr = contrastive_pretrain_loss(psds_a, psds_b, band)?;

            for (block, tape, snips, psd_grads) in [
                (block_a, tape_a, snips_a, &ctr.grads_a),
                (block_b, tape_b, snips_b, &ctr.grads_b),
            ] {
                let mut wave_grads = Vec::with_capacity(snips.len());
                for (s, d_psd) in snips.iter().zip(psd_grads) {
                    wave_grads.push(fft_psd_vjp(&s.waveform, *n_fft, d_psd)?);
                }
                let mut d_block = vec![0.0; block.values().len()];
                scatter_snippet_grads(&mut d_block, block.s_sp(), snips, &wave_grads);
                let g = st_encoder_backward(tape, &params, model_cfg, &d_block)?;
                accumulate(&mut grad_acc, &g);
            }
            adamw_step(&mut params, &grad_acc, &mut state, &optim)?;

            let step = state.step_count() as usize;
            for (name, value) in [("pos", ctr.pos), ("neg", ctr.neg), ("total", ctr.total)] {
                trace.push(TraceRow::new(step, name, value));
            }
        }
    }
    Ok((params, trace))
}

// ── Supervised fine-tuning ──────────────────────────────────────────────────

/// Solution-1 fine-tuning: the self-supervised objective plus a weighted
/// Pearson term against aligned ground-truth windows.
pub fn finetune_stformer(
    samples: &[(MstMap, Waveform)],
    mut params: StFormerParams,
    model_cfg: &StFormerConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<(StFormerParams, Vec<TraceRow>)> {
    cfg.validate(1)?;
    loss_cfg.validate()?;
    if samples.is_empty() {
        return Err(CoreError::invalid("fine-tuning needs at least one sample"));
    }
    for (map, gt) in samples {
        if gt.len() != map.frames() || (gt.fs() - map.fs()).abs() > 1e-9 {
            return Err(CoreError::invalid(format!(
                "label of {} samples at {} Hz does not align with a {}-frame map at {} Hz",
                gt.len(),
                gt.fs(),
                map.frames(),
                map.fs()
            )));
        }
    }
    if !(cfg.pear_weight.is_finite() && cfg.pear_weight >= 0.0) {
        return Err(CoreError::invalid("pear_weight must be finite and >= 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamWState::new(&params);
    let optim = cfg.optim();
    let mut trace = Vec::new();

    for _ in 0..cfg.epochs {
        for batch in (0..samples.len()).collect::<Vec<_>>().chunks(cfg.batch_size) {
            let mut raws = Vec::with_capacity(batch.len());
            let mut tapes = Vec::with_capacity(batch.len());
            let mut std_batch = Vec::with_capacity(batch.len());
            let mut gts = Vec::with_capacity(batch.len());
            for &i in batch {
                let (map, gt, _) = if cfg.augment.any() {
                    augment_labeled(&samples[i].0, &samples[i].1, &cfg.augment, &mut rng)?
                } else {
                    (samples[i].0.clone(), samples[i].1.clone(), 1.0)
                };
                let (wave, tape) = st_former_forward_with_tape(&map, &params, model_cfg)?;
                std_batch.push(standardize(&wave));
                raws.push(wave);
                tapes.push(tape);
                gts.push(gt);
            }
            let selfsup = total_selfsup_loss(&std_batch, loss_cfg)?;

            let b = batch.len() as f64;
            let mut pear_mean = 0.0;
            let mut grad_acc = StFormerParams::zeros(model_cfg);
            for (i, ((raw, tape), d_selfsup)) in
                raws.iter().zip(&tapes).zip(&selfsup.grads).enumerate()
            {
                let pear = pearson_loss(&std_batch[i], &gts[i])?;
                pear_mean += pear.value / b;
                let mut d_std = d_selfsup.clone();
                for (slot, g) in d_std.iter_mut().zip(&pear.grads[0]) {
                    *slot += cfg.pear_weight * g / b;
                }
                let d_raw = standardize_vjp(raw.samples(), &d_std)?;
                let (g, _) = st_former_backward(tape, &params, model_cfg, &d_raw)?;
                accumulate(&mut grad_acc, &g);
            }
            adamw_step(&mut params, &grad_acc, &mut state, &optim)?;

            let step = state.step_count() as usize;
            let total = selfsup.total + cfg.pear_weight * pear_mean;
            for (name, value) in [
                ("selfsup", selfsup.total),
                ("pear", pear_mean),
                ("total", total),
            ] {
                trace.push(TraceRow::new(step, name, value));
            }
        }
    }
    Ok((params, trace))
}

/// Solution-2 fine-tuning: per step, draw two labeled clips, sample snippets
/// from each encoded block, pair them with ground-truth slices at the same
/// offsets, and apply the combined contrastive + Pearson + MCC objective.
pub fn finetune_stencoder(
    samples: &[(VideoCube, Waveform)],
    mut params: StEncoderParams,
    model_cfg: &StEncoderConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<(StEncoderParams, Vec<TraceRow>)> {
    cfg.validate(2)?;
    loss_cfg.validate()?;
    if samples.len() < 2 {
        return Err(CoreError::invalid(
            "solution-2 fine-tuning needs at least two labeled clips",
        ));
    }
    for (clip, gt) in samples {
        if gt.len() != clip.frames() || (gt.fs() - clip.fs()).abs() > 1e-9 {
            return Err(CoreError::invalid(format!(
                "label of {} samples does not align with a {}-frame clip",
                gt.len(),
                clip.frames()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamWState::new(&params);
    let optim = cfg.optim();
    let mut trace = Vec::new();
    let steps_per_epoch = (samples.len() / 2).max(1);

    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let (ia, ib) = draw_pair(&mut rng, samples.len());
            let mut grad_acc = StEncoderParams::zeros(model_cfg);
            let mut per_clip = Vec::with_capacity(2);
            for &i in &[ia, ib] {
                let (clip, gt) = &samples[i];
                let (block, tape) = st_encoder_forward_with_tape(clip, &params, model_cfg)?;
                let snips = sample_st_rppg(&block, cfg.delta_t, cfg.n_offsets, rng.gen())?;
                let preds: Vec<Waveform> = snips.iter().map(|s| s.waveform.clone()).collect();
                let gts = snips
                    .iter()
                    .map(|s| {
                        Waveform::new(
                            gt.samples()[s.offset..s.offset + cfg.delta_t].to_vec(),
                            gt.fs(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                per_clip.push((block, tape, snips, preds, gts));
            }
            let (block_a, tape_a, snips_a, preds_a, gts_a) = &per_clip[0];
            let (block_b, tape_b, snips_b, preds_b, gts_b) = &per_clip[1];
            let loss = finetune_loss(
                &FinetuneInputs {
                    pred: preds_a,
                    pred_other: preds_b,
                    gt: gts_a,
                    gt_other: gts_b,
                },
                loss_cfg,
            )?;

            for (block, tape, snips, grads) in [
                (block_a, tape_a, snips_a, &loss.grads),
                (block_b, tape_b, snips_b, &loss.grads_other),
            ] {
                let mut d_block = vec![0.0; block.values().len()];
                scatter_snippet_grads(&mut d_block, block.s_sp(), snips, grads);
                let g = st_encoder_backward(tape, &params, model_cfg, &d_block)?;
                accumulate(&mut grad_acc, &g);
            }
            adamw_step(&mut params, &grad_acc, &mut state, &optim)?;

            let step = state.step_count() as usize;
            for (name, value) in [
                ("pos", loss.pos),
                ("neg", loss.neg),
                ("pear", loss.pear),
                ("mcc", loss.mcc),
                ("total", loss.total),
            ] {
                trace.push(TraceRow::new(step, name, value));
            }
        }
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mstmap::{build_mstmap, sliding_windows, WindowSpec};
    use crate::synth::{gen_roi_stats, gen_video_cube, SynthSpec};

    fn toy_windows(hr: f64, seed: u64) -> Vec<MstMap> {
        let spec = SynthSpec {
            hr_bpm: hr,
            duration_s: 10.0,
            seed,
            snr_db: 30.0,
            ..SynthSpec::default()
        };
        let stats = gen_roi_stats(&spec, 3).unwrap(); // 7 combos
        let map = build_mstmap(&stats, spec.fs).unwrap();
        sliding_windows(&map, &WindowSpec::new(120, 60).unwrap()).unwrap()
    }

    fn toy_clips(n: usize) -> Vec<VideoCube> {
        (0..n)
            .map(|i| {
                let spec = SynthSpec {
                    hr_bpm: if i % 2 == 0 { 60.0 } else { 120.0 },
                    duration_s: 4.0,
                    seed: i as u64,
                    snr_db: 20.0,
                    ..SynthSpec::default()
                };
                gen_video_cube(&spec, 8, 8).unwrap().0
            })
            .collect()
    }

    fn small_selfsup_cfg() -> (StFormerConfig, LossConfig, TrainConfig) {
        let model_cfg = StFormerConfig::toy(7, 120);
        let loss_cfg = LossConfig::default();
        let cfg = TrainConfig {
            lr: 1e-3,
            batch_size: 4,
            epochs: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        (model_cfg, loss_cfg, cfg)
    }

    #[test]
    fn selfsup_loss_decreases_over_fifty_steps() {
        let windows = toy_windows(72.0, 1);
        assert!(windows.len() >= 3, "fixture needs a few windows");
        let (model_cfg, loss_cfg, mut cfg) = small_selfsup_cfg();
        cfg.epochs = 50; // one batch per epoch with batch_size >= window count
        cfg.batch_size = windows.len();
        let params = StFormerParams::init(&model_cfg, 5).unwrap();
        let (_, trace) = pretrain_selfsup(&windows, params, &model_cfg, &loss_cfg, &cfg).unwrap();
        let totals: Vec<f64> = trace
            .iter()
            .filter(|r| r.loss_name == "total")
            .map(|r| r.value)
            .collect();
        assert_eq!(totals.len(), 50);
        assert!(totals.iter().all(|v| v.is_finite()));
        assert!(
            totals[49] < totals[0],
            "total failed to decrease: {} -> {}",
            totals[0],
            totals[49]
        );
    }

    #[test]
    fn zero_lr_leaves_params_bitwise_unchanged() {
        let windows = toy_windows(80.0, 2);
        let (model_cfg, loss_cfg, mut cfg) = small_selfsup_cfg();
        cfg.lr = 0.0;
        cfg.weight_decay = 0.0;
        cfg.epochs = 2;
        let params = StFormerParams::init(&model_cfg, 6).unwrap();
        let (after, _) =
            pretrain_selfsup(&windows, params.clone(), &model_cfg, &loss_cfg, &cfg).unwrap();
        assert_eq!(after, params);
    }

    #[test]
    fn same_seed_reproduces_the_loss_trace() {
        let windows = toy_windows(90.0, 3);
        let (model_cfg, loss_cfg, mut cfg) = small_selfsup_cfg();
        cfg.epochs = 3;
        cfg.augment = AugmentFlags {
            flip_time: true,
            flip_roi: true,
            freq_resample: true,
            ..AugmentFlags::default()
        };
        let params = StFormerParams::init(&model_cfg, 7).unwrap();
        let (pa, ta) =
            pretrain_selfsup(&windows, params.clone(), &model_cfg, &loss_cfg, &cfg).unwrap();
        let (pb, tb) = pretrain_selfsup(&windows, params, &model_cfg, &loss_cfg, &cfg).unwrap();
        assert_eq!(ta, tb, "same seed must give identical traces");
        assert_eq!(pa, pb, "same seed must give identical parameters");
    }

    #[test]
    fn zero_epochs_returns_input_params() {
        let windows = toy_windows(70.0, 4);
        let (model_cfg, loss_cfg, mut cfg) = small_selfsup_cfg();
        cfg.epochs = 0;
        let params = StFormerParams::init(&model_cfg, 8).unwrap();
        let (after, trace) =
            pretrain_selfsup(&windows, params.clone(), &model_cfg, &loss_cfg, &cfg).unwrap();
        assert_eq!(after, params);
        assert!(trace.is_empty());
    }

    #[test]
    fn contrastive_runs_deterministically_and_zero_lr_is_inert() {
        let clips = toy_clips(4);
        let model_cfg = StEncoderConfig {
            hidden_channels: 4,
            spatial_out: 2,
        };
        let band = BandLimits::physiological();
        let cfg = TrainConfig {
            lr: 1e-3,
            batch_size: 2,
            epochs: 3,
            seed: 11,
            delta_t: 60,
            n_offsets: 1,
            ..TrainConfig::default()
        };
        let params = StEncoderParams::init(&model_cfg, 9).unwrap();
        let (pa, ta) =
            pretrain_contrastive(&clips, params.clone(), &model_cfg, &band, &cfg).unwrap();
        let (pb, tb) =
            pretrain_contrastive(&clips, params.clone(), &model_cfg, &band, &cfg).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(pa, pb);

        let frozen = TrainConfig {
            lr: 0.0,
            weight_decay: 0.0,
            ..cfg
        };
        let (after, _) =
            pretrain_contrastive(&clips, params.clone(), &model_cfg, &band, &frozen).unwrap();
        assert_eq!(after, params);
    }

    #[test]
    fn contrastive_rejects_a_single_clip() {
        let clips = toy_clips(1);
        let model_cfg = StEncoderConfig::default();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let params = StEncoderParams::init(&model_cfg, 1).unwrap();
        assert!(pretrain_contrastive(
            &clips,
            params,
            &model_cfg,
            &BandLimits::physiological(),
            &cfg
        )
        .is_err());
    }

    #[test]
    fn stformer_finetune_rejects_misaligned_labels() {
        let windows = toy_windows(75.0, 5);
        let gt = Waveform::new(vec![0.0; 37], 30.0).unwrap(); // wrong length
        let samples = vec![(windows[0].clone(), gt)];
        let (model_cfg, loss_cfg, cfg) = small_selfsup_cfg();
        let params = StFormerParams::init(&model_cfg, 2).unwrap();
        assert!(finetune_stformer(&samples, params, &model_cfg, &loss_cfg, &cfg).is_err());
    }

    #[test]
    fn stencoder_finetune_is_deterministic_and_traces_components() {
        let labeled: Vec<(VideoCube, Waveform)> = (0..3)
            .map(|i| {
                let spec = SynthSpec {
                    hr_bpm: 70.0 + 20.0 * i as f64,
                    duration_s: 4.0,
                    seed: 20 + i as u64,
                    snr_db: 20.0,
                    ..SynthSpec::default()
                };
                gen_video_cube(&spec, 8, 8).unwrap()
            })
            .collect();
        let model_cfg = StEncoderConfig {
            hidden_channels: 4,
            spatial_out: 2,
        };
        let loss_cfg = LossConfig::default();
        let cfg = TrainConfig {
            lr: 1e-4,
            batch_size: 2,
            epochs: 2,
            seed: 31,
            delta_t: 60,
            n_offsets: 1,
            ..TrainConfig::default()
        };
        let params = StEncoderParams::init(&model_cfg, 3).unwrap();
        let (pa, ta) =
            finetune_stencoder(&labeled, params.clone(), &model_cfg, &loss_cfg, &cfg).unwrap();
        let (pb, tb) = finetune_stencoder(&labeled, params, &model_cfg, &loss_cfg, &cfg).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(pa, pb);
        for name in ["pos", "neg", "pear", "mcc", "total"] {
            assert!(
                ta.iter().any(|r| r.loss_name == name),
                "trace must report {name}"
            );
        }
    }

    #[test]
    fn trace_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = vec![
            TraceRow::new(1, "total", 0.5),
            TraceRow::new(2, "total", 0.25),
        ];
        write_loss_trace(&rows, &path).unwrap();
        assert_eq!(read_loss_trace(&path).unwrap(), rows);
        std::fs::write(&path, "nope\n1,a,2\n").unwrap();
        assert!(read_loss_trace(&path).is_err());
    }
}

//! The solution-2 encoder: video cube in, ST-rPPG block out. Three stages of
//! 3-frame temporal channel mixing (tanh) with 2×2 spatial average pooling,
//! adaptive spatial pooling to S×S, and a pointwise 1-channel head. The
//! temporal length is preserved end to end.
//!
//! Also home to the ST-rPPG block type and its two consumers: random
//! spatiotemporal sampling for contrastive training and spatial averaging
//! for supervised fine-tuning.

use super::tensor::{ParamTensors, Tensor};
use crate::signal::{VideoCube, Waveform, VAR_GUARD};
use crate::{CoreError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const N_STAGES: usize = 3;
const IN_CHANNELS: usize = 3;

// ── ST-rPPG block ───────────────────────────────────────────────────────────

/// A T×S×S grid of rPPG traces, one per spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct STBlock {
    values: Vec<f64>, // (t, row, col) row-major
    frames: usize,
    s_sp: usize,
    fs: f64,
}

impl STBlock {
    pub fn new(values: Vec<f64>, frames: usize, s_sp: usize, fs: f64) -> Result<Self> {
        if frames < 2 || s_sp < 1 {
            return Err(CoreError::invalid(format!(
                "block needs >= 2 frames and >= 1 spatial cell, got {frames}x{s_sp}x{s_sp}"
            )));
        }
        if values.len() != frames * s_sp * s_sp {
            return Err(CoreError::shape(format!(
                "block of {frames}x{s_sp}x{s_sp} needs {} values, got {}",
                frames * s_sp * s_sp,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("block contains non-finite values"));
        }
        if !fs.is_finite() || fs <= 0.0 {
            return Err(CoreError::invalid(format!("bad frame rate {fs}")));
        }
        Ok(STBlock {
            values,
            frames,
            s_sp,
            fs,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn s_sp(&self) -> usize {
        self.s_sp
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, row: usize, col: usize) -> f64 {
        self.values[(t * self.s_sp + row) * self.s_sp + col]
    }

    /// The full temporal trace of one spatial cell.
    pub fn cell_trace(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(t, row, col)).collect()
    }
}

/// One sampled rPPG snippet: which cell it came from and where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct StRppgSample {
    pub cell_row: usize,
    pub cell_col: usize,
    pub offset: usize,
    pub waveform: Waveform,
}

/// Draws `n_offsets` random length-`delta_t` snippets from every spatial
/// cell, row-major over cells, offsets per (cell, slot) from a seeded rng.
pub fn sample_st_rppg(
    block: &STBlock,
    delta_t: usize,
    n_offsets: usize,
    rng_seed: u64,
) -> Result<Vec<StRppgSample>> {
    if delta_t < 2 || delta_t > block.frames() {
        return Err(CoreError::invalid(format!(
            "snippet length {delta_t} outside 2..={}",
            block.frames()
        )));
    }
    if n_offsets == 0 {
        return Err(CoreError::invalid("n_offsets must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let max_offset = block.frames() - delta_t;
    let mut out = Vec::with_capacity(block.s_sp() * block.s_sp() * n_offsets);
    for row in 0..block.s_sp() {
        for col in 0..block.s_sp() {
            let trace = block.cell_trace(row, col);
            for _ in 0..n_offsets {
                let offset = rng.gen_range(0..=max_offset);
                let waveform =
                    Waveform::new(trace[offset..offset + delta_t].to_vec(), block.fs())?;
                out.push(StRppgSample {
                    cell_row: row,
                    cell_col: col,
                    offset,
                    waveform,
                });
            }
        }
    }
    Ok(out)
}

/// Per-frame mean over the S×S cells.
pub fn spatial_average(block: &STBlock) -> Waveform {
    let cells = (block.s_sp() * block.s_sp()) as f64;
    let samples: Vec<f64> = (0..block.frames())
        .map(|t| {
            let base = t * block.s_sp() * block.s_sp();
            block.values()[base..base + block.s_sp() * block.s_sp()]
                .iter()
                .sum::<f64>()
                / cells
        })
        .collect();
    Waveform::new(samples, block.fs()).expect("block invariants guarantee a valid waveform")
}

// ── Configuration and parameters ────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StEncoderConfig {
    /// Channel width of the three mixing stages.
    pub hidden_channels: usize,
    /// Output spatial resolution S.
    pub spatial_out: usize,
}

impl Default for StEncoderConfig {
    fn default() -> Self {
        StEncoderConfig {
            hidden_channels: 8,
            spatial_out: 2,
        }
    }
}

impl StEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_channels < 1 || self.spatial_out < 1 {
            return Err(CoreError::invalid(
                "hidden_channels and spatial_out must be >= 1",
            ));
        }
        Ok(())
    }
}

/// One stage: a 3-tap temporal convolution mixing channels, tap-major
/// weights [3, c_in, c_out], plus a per-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StEncoderParams {
    pub stages: Vec<StageParams>,
    pub head_w: Tensor, // hidden
    pub head_b: Tensor, // 1
}

impl StEncoderParams {
    pub fn init(cfg: &StEncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_channels;
        let mut stages = Vec::with_capacity(N_STAGES);
        let mut c_in = IN_CHANNELS;
        for _ in 0..N_STAGES {
            stages.push(StageParams {
                w: Tensor::fan_in_uniform(&[3, c_in, h], 3 * c_in, &mut rng),
                b: Tensor::zeros(&[h]),
            });
            c_in = h;
        }
        Ok(StEncoderParams {
            stages,
            head_w: Tensor::fan_in_uniform(&[h], h, &mut rng),
            head_b: Tensor::zeros(&[1]),
        })
    }

    pub fn zeros(cfg: &StEncoderConfig) -> Self {
        let h = cfg.hidden_channels;
        let mut stages = Vec::with_capacity(N_STAGES);
        let mut c_in = IN_CHANNELS;
        for _ in 0..N_STAGES {
            stages.push(StageParams {
                w: Tensor::zeros(&[3, c_in, h]),
                b: Tensor::zeros(&[h]),
            });
            c_in = h;
        }
        StEncoderParams {
            stages,
            head_w: Tensor::zeros(&[h]),
            head_b: Tensor::zeros(&[1]),
        }
    }

    pub fn validate_shapes(&self, cfg: &StEncoderConfig) -> Result<()> {
        cfg.validate()?;
        let h = cfg.hidden_channels;
        let mut c_in = IN_CHANNELS;
        if self.stages.len() != N_STAGES {
            return Err(CoreError::shape(format!(
                "encoder needs {N_STAGES} stages, got {}",
                self.stages.len()
            )));
        }
        for s in &self.stages {
            if s.w.dims() != [3, c_in, h] || s.b.dims() != [h] {
                return Err(CoreError::shape(
                    "encoder stage shapes do not match the configuration".to_string(),
                ));
            }
            c_in = h;
        }
        if self.head_w.dims() != [h] || self.head_b.dims() != [1] {
            return Err(CoreError::shape(
                "encoder head shapes do not match the configuration".to_string(),
            ));
        }
        Ok(())
    }
}

impl ParamTensors for StEncoderParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.w"), &s.w));
            out.push((format!("stage{i}.b"), &s.b));
        }
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter_mut().enumerate() {
            out.push((format!("stage{i}.w"), &mut s.w));
            out.push((format!("stage{i}.b"), &mut s.b));
        }
        out.push(("head_w".to_string(), &mut self.head_w));
        out.push(("head_b".to_string(), &mut self.head_b));
        out
    }
}

// ── Forward ─────────────────────────────────────────────────────────────────

/// Activations kept for the backward pass.
pub struct StEncoderTape {
    /// Standardized input, [t][pixel][channel].
    std_input: Vec<f64>,
    /// Per stage: (input dims (h, w, c_in), post-tanh activations pre-pool,
    /// pooled dims (h, w)).
    stages: Vec<StageTape>,
    /// Input to the head, [t][cell][channel].
    adapted: Vec<f64>,
    t: usize,
}

struct StageTape {
    in_h: usize,
    in_w: usize,
    c_in: usize,
    acts: Vec<f64>, // t × in_h × in_w × c_out, after tanh, before pooling
    out_h: usize,
    out_w: usize,
}

/// Pooling regions of a 1-D adaptive average pool from `inp` to `out` cells.
fn regions(inp: usize, out: usize) -> Vec<(usize, usize)> {
    (0..out)
        .map(|i| {
            let start = i * inp / out;
            let end = ((i + 1) * inp).div_ceil(out);
            (start, end)
        })
        .collect()
}

pub fn st_encoder_forward(
    clip: &VideoCube,
    params: &StEncoderParams,
    cfg: &StEncoderConfig,
) -> Result<STBlock> {
    st_encoder_forward_with_tape(clip, params, cfg).map(|(b, _)| b)
}

pub fn st_encoder_forward_with_tape(
    clip: &VideoCube,
    params: &StEncoderParams,
    cfg: &StEncoderConfig,
) -> Result<(STBlock, StEncoderTape)> {
    params.validate_shapes(cfg)?;
    let (t, h, w, c) = (clip.frames(), clip.height(), clip.width(), clip.channels());
    if c != IN_CHANNELS {
        return Err(CoreError::shape(format!(
            "clip must have {IN_CHANNELS} channels, got {c}"
        )));
    }
    if t < 2 {
        return Err(CoreError::invalid("clip needs at least 2 frames"));
    }
    let s = cfg.spatial_out;
    if h % s != 0 || w % s != 0 {
        return Err(CoreError::invalid(format!(
            "spatial dims {h}x{w} must be divisible by the output resolution {s}"
        )));
    }

    // Per-channel standardization over the whole clip.
    let n_px = t * h * w;
    let mut std_input = clip.data().to_vec();
    for ch in 0..c {
        let mut mean = 0.0;
        for i in 0..n_px {
            mean += std_input[i * c + ch];
        }
        mean /= n_px as f64;
        let mut var = 0.0;
        for i in 0..n_px {
            let dv = std_input[i * c + ch] - mean;
            var += dv * dv;
        }
        var /= n_px as f64;
        let scale = if var <= VAR_GUARD { 0.0 } else { 1.0 / var.sqrt() };
        for i in 0..n_px {
            std_input[i * c + ch] = (std_input[i * c + ch] - mean) * scale;
        }
    }

    let hid = cfg.hidden_channels;
    let mut cur = std_input.clone();
    let (mut ch_in, mut cur_h, mut cur_w) = (c, h, w);
    let mut stage_tapes = Vec::with_capacity(N_STAGES);

    for stage in &params.stages {
        let px = cur_h * cur_w;
        let wt = stage.w.data();
        let bias = stage.b.data();
        // 3-tap temporal mix, zero-padded at the ends.
        let mut acts = vec![0.0; t * px * hid];
        for ti in 0..t {
            for (tap, dt) in [-1isize, 0, 1].iter().enumerate() {
                let src = ti as isize + dt;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src_base = src as usize * px * ch_in;
                let w_tap = &wt[tap * ch_in * hid..(tap + 1) * ch_in * hid];
                for p in 0..px {
                    let in_row = &cur[src_base + p * ch_in..src_base + (p + 1) * ch_in];
                    let out_row = &mut acts[(ti * px + p) * hid..(ti * px + p + 1) * hid];
                    for (ci, &iv) in in_row.iter().enumerate() {
                        if iv == 0.0 {
                            continue;
                        }
                        let w_row = &w_tap[ci * hid..(ci + 1) * hid];
                        for (o, &wv) in out_row.iter_mut().zip(w_row) {
                            *o += iv * wv;
                        }
                    }
                }
            }
        }
        for (i, a) in acts.iter_mut().enumerate() {
            *a = (*a + bias[i % hid]).tanh();
        }

        // 2×2 average pool on full blocks; tiny inputs pass through.
        let (out_h, out_w) = if cur_h >= 2 && cur_w >= 2 {
            (cur_h / 2, cur_w / 2)
        } else {
            (cur_h, cur_w)
        };
        let pooled = if (out_h, out_w) == (cur_h, cur_w) {
            acts.clone()
        } else {
            let mut pooled = vec![0.0; t * out_h * out_w * hid];
            for ti in 0..t {
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        for ch2 in 0..hid {
                            let mut acc = 0.0;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let iy = oh * 2 + dy;
                                    let ix = ow * 2 + dx;
                                    acc += acts[((ti * cur_h + iy) * cur_w + ix) * hid + ch2];
                                }
                            }
                            pooled[((ti * out_h + oh) * out_w + ow) * hid + ch2] = acc / 4.0;
                        }
                    }
                }
            }
            pooled
        };

        stage_tapes.push(StageTape {
            in_h: cur_h,
            in_w: cur_w,
            c_in: ch_in,
            acts,
            out_h,
            out_w,
        });
        cur = pooled;
        cur_h = out_h;
        cur_w = out_w;
        ch_in = hid;
    }

    // Adaptive average pool to S×S.
    let row_regions = regions(cur_h, s);
    let col_regions = regions(cur_w, s);
    let mut adapted = vec![0.0; t * s * s * hid];
    for ti in 0..t {
        for (ri, &(r0, r1)) in row_regions.iter().enumerate() {
            for (ci, &(c0, c1)) in col_regions.iter().enumerate() {
                let count = ((r1 - r0) * (c1 - c0)) as f64;
                for ch2 in 0..hid {
                    let mut acc = 0.0;
                    for iy in r0..r1 {
                        for ix in c0..c1 {
                            acc += cur[((ti * cur_h + iy) * cur_w + ix) * hid + ch2];
                        }
                    }
                    adapted[((ti * s + ri) * s + ci) * hid + ch2] = acc / count;
                }
            }
        }
    }

    // Pointwise head to one channel.
    let hw = params.head_w.data();
    let hb = params.head_b.data()[0];
    let values: Vec<f64> = (0..t * s * s)
        .map(|i| {
            adapted[i * hid..(i + 1) * hid]
                .iter()
                .zip(hw)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + hb
        })
        .collect();

    let block = STBlock::new(values, t, s, clip.fs())?;
    Ok((
        block,
        StEncoderTape {
            std_input,
            stages: stage_tapes,
            adapted,
            t,
        },
    ))
}

// ── Backward ────────────────────────────────────────────────────────────────

/// Parameter gradients for a taped forward pass; `upstream` is dL/d(block),
/// T·S·S values in block order.
pub fn st_encoder_backward(
    tape: &StEncoderTape,
    params: &StEncoderParams,
    cfg: &StEncoderConfig,
    upstream: &[f64],
) -> Result<StEncoderParams> {
    params.validate_shapes(cfg)?;
    let (t, s, hid) = (tape.t, cfg.spatial_out, cfg.hidden_channels);
    if upstream.len() != t * s * s {
        return Err(CoreError::shape(format!(
            "upstream gradient must have {} entries, got {}",
            t * s * s,
            upstream.len()
        )));
    }
    let mut grads = StEncoderParams::zeros(cfg);

    // Head.
    let hw = params.head_w.data();
    let mut d_adapted = vec![0.0; tape.adapted.len()];
    for i in 0..t * s * s {
        let dy = upstream[i];
        grads.head_b.data_mut()[0] += dy;
        for ch in 0..hid {
            grads.head_w.data_mut()[ch] += tape.adapted[i * hid + ch] * dy;
            d_adapted[i * hid + ch] = hw[ch] * dy;
        }
    }

    // Adaptive pool backward.
    let last = tape.stages.last().expect("always three stages");
    let (fin_h, fin_w) = (last.out_h, last.out_w);
    let row_regions = regions(fin_h, s);
    let col_regions = regions(fin_w, s);
    let mut d_cur = vec![0.0; t * fin_h * fin_w * hid];
    for ti in 0..t {
        for (ri, &(r0, r1)) in row_regions.iter().enumerate() {
            for (ci, &(c0, c1)) in col_regions.iter().enumerate() {
                let count = ((r1 - r0) * (c1 - c0)) as f64;
                for ch in 0..hid {
                    let g = d_adapted[((ti * s + ri) * s + ci) * hid + ch] / count;
                    for iy in r0..r1 {
                        for ix in c0..c1 {
                            d_cur[((ti * fin_h + iy) * fin_w + ix) * hid + ch] += g;
                        }
                    }
                }
            }
        }
    }

    // Stages, reversed.
    for (si, stage_tape) in tape.stages.iter().enumerate().rev() {
        let (in_h, in_w, c_in) = (stage_tape.in_h, stage_tape.in_w, stage_tape.c_in);
        let (out_h, out_w) = (stage_tape.out_h, stage_tape.out_w);
        let px = in_h * in_w;

        // Pool backward (or pass-through when pooling was skipped).
        let mut d_acts = vec![0.0; t * px * hid];
        if (out_h, out_w) == (in_h, in_w) {
            d_acts.copy_from_slice(&d_cur);
        } else {
            for ti in 0..t {
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        for ch in 0..hid {
                            let g =
                                d_cur[((ti * out_h + oh) * out_w + ow) * hid + ch] / 4.0;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let iy = oh * 2 + dy;
                                    let ix = ow * 2 + dx;
                                    d_acts[((ti * in_h + iy) * in_w + ix) * hid + ch] += g;
                                }
                            }
                        }
                    }
                }
            }
        }

        // tanh backward.
        for (g, &a) in d_acts.iter_mut().zip(&stage_tape.acts) {
            *g *= 1.0 - a * a;
        }

        // Conv backward over taps. The previous stage's pooled output is not
        // stored on the tape; rebuild it from that stage's activations.
        let input_owned: Vec<f64>;
        let input: &[f64] = if si == 0 {
            &tape.std_input
        } else {
            let prev = &tape.stages[si - 1];
            input_owned = repool(prev, t, hid);
            &input_owned
        };

        let wt = params.stages[si].w.data();
        let StageParams { w: gw_t, b: gb_t } = &mut grads.stages[si];
        let (gw, gb) = (gw_t.data_mut(), gb_t.data_mut());
        let mut d_in = vec![0.0; t * px * c_in];
        for ti in 0..t {
            for (tap, dt) in [-1isize, 0, 1].iter().enumerate() {
                let src = ti as isize + dt;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src_base = src as usize * px * c_in;
                for p in 0..px {
                    let in_row = &input[src_base + p * c_in..src_base + (p + 1) * c_in];
                    let g_row = &d_acts[(ti * px + p) * hid..(ti * px + p + 1) * hid];
                    for ci in 0..c_in {
                        let iv = in_row[ci];
                        let w_row = &wt[(tap * c_in + ci) * hid..(tap * c_in + ci + 1) * hid];
                        let gw_row = &mut gw[(tap * c_in + ci) * hid..(tap * c_in + ci + 1) * hid];
                        let mut acc = 0.0;
                        for ch in 0..hid {
                            gw_row[ch] += iv * g_row[ch];
                            acc += w_row[ch] * g_row[ch];
                        }
                        d_in[src_base + p * c_in + ci] += acc;
                    }
                }
            }
        }
        for g_row in d_acts.chunks(hid) {
            for (ch, &g) in g_row.iter().enumerate() {
                gb[ch] += g;
            }
        }
        d_cur = d_in;
    }

    Ok(grads)
}

/// Re-applies a stage's 2×2 pooling to its taped activations, recovering the
/// next stage's input without storing it.
fn repool(stage: &StageTape, t: usize, hid: usize) -> Vec<f64> {
    if (stage.out_h, stage.out_w) == (stage.in_h, stage.in_w) {
        return stage.acts.clone();
    }
    let (in_h, in_w, out_h, out_w) = (stage.in_h, stage.in_w, stage.out_h, stage.out_w);
    let mut pooled = vec![0.0; t * out_h * out_w * hid];
    for ti in 0..t {
        for oh in 0..out_h {
            for ow in 0..out_w {
                for ch in 0..hid {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += stage.acts
                                [((ti * in_h + oh * 2 + dy) * in_w + ow * 2 + dx) * hid + ch];
                        }
                    }
                    pooled[((ti * out_h + oh) * out_w + ow) * hid + ch] = acc / 4.0;
                }
            }
        }
    }
    pooled
}

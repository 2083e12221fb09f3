//! The solution-1 spatial-temporal transformer: embeds MSTmap windows into
//! T×N×D features, runs L loops of alternating spatial (over ROI tokens) and
//! temporal (over frames) attention encoders, and regresses a length-T rPPG
//! waveform through a mean-pooled affine head.
//!
//! Positional embeddings are added once, before the first loop. Map values
//! arrive in [0, 255] and are rescaled to [−1, 1] at the door.

use super::encoder::{encoder_backward, encoder_forward, EncoderParams, EncoderTape};
use super::tensor::{matmul, matmul_at, matmul_bt, ParamTensors, Tensor};
use crate::mstmap::MstMap;
use crate::signal::Waveform;
use crate::{CoreError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Map values span [0, 255]; the embedding sees x/127.5 − 1.
const INPUT_SCALE: f64 = 127.5;

/// Positional tables start at uniform(−0.02, 0.02).
const POS_INIT_BOUND: f64 = 0.02;

// ── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StFormerConfig {
    /// Feature dimension D.
    pub feature_dim: usize,
    /// Number of alternating spatial/temporal loops L.
    pub loops: usize,
    /// ROI tokens per frame N.
    pub tokens: usize,
    /// Frames per window T.
    pub frames: usize,
    /// Input channels C.
    pub channels: usize,
    /// Hidden width of the encoder MLPs.
    pub mlp_hidden: usize,
    /// Diagnostic: treat layer norm as the identity.
    #[serde(default)]
    pub ln_bypass: bool,
}

impl StFormerConfig {
    /// Full-size configuration: D=128, L=6.
    pub fn paper(tokens: usize, frames: usize) -> Self {
        StFormerConfig {
            feature_dim: 128,
            loops: 6,
            tokens,
            frames,
            channels: 6,
            mlp_hidden: 256,
            ln_bypass: false,
        }
    }

    /// Desk-scale configuration for tests and toy training: D=16, L=2.
    pub fn toy(tokens: usize, frames: usize) -> Self {
        StFormerConfig {
            feature_dim: 16,
            loops: 2,
            tokens,
            frames,
            channels: 6,
            mlp_hidden: 32,
            ln_bypass: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 4 || !self.feature_dim.is_multiple_of(2) {
            return Err(CoreError::invalid(format!(
                "feature_dim must be an even number >= 4, got {}",
                self.feature_dim
            )));
        }
        if self.loops < 1 {
            return Err(CoreError::invalid("loops must be >= 1"));
        }
        if self.tokens < 1 || self.frames < 1 || self.channels < 1 || self.mlp_hidden < 1 {
            return Err(CoreError::invalid(
                "tokens, frames, channels, mlp_hidden must all be >= 1",
            ));
        }
        Ok(())
    }
}

// ── Parameters ──────────────────────────────────────────────────────────────

/// One loop: a spatial encoder over ROI tokens, then a temporal one over
/// frames, sharing nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopParams {
    pub spatial: EncoderParams,
    pub temporal: EncoderParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StFormerParams {
    pub embed_w: Tensor,      // C×D
    pub embed_b: Tensor,      // D
    pub pos_spatial: Tensor,  // N×D
    pub pos_temporal: Tensor, // T×D
    pub blocks: Vec<LoopParams>,
    pub head_w: Tensor, // D
    pub head_b: Tensor, // 1
}

impl StFormerParams {
    /// Seeded init: fan-in-scaled uniform weights, zero biases, unit layer
    /// norm, uniform(±0.02) positional tables. Draw order is fixed.
    pub fn init(cfg: &StFormerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, d, h) = (cfg.channels, cfg.feature_dim, cfg.mlp_hidden);
        let embed_w = Tensor::fan_in_uniform(&[c, d], c, &mut rng);
        let embed_b = Tensor::zeros(&[d]);
        let pos_spatial = Tensor::uniform(&[cfg.tokens, d], POS_INIT_BOUND, &mut rng);
        let pos_temporal = Tensor::uniform(&[cfg.frames, d], POS_INIT_BOUND, &mut rng);
        let blocks = (0..cfg.loops)
            .map(|_| LoopParams {
                spatial: EncoderParams::init(d, h, &mut rng),
                temporal: EncoderParams::init(d, h, &mut rng),
            })
            .collect();
        let head_w = Tensor::fan_in_uniform(&[d], d, &mut rng);
        let head_b = Tensor::zeros(&[1]);
        Ok(StFormerParams {
            embed_w,
            embed_b,
            pos_spatial,
            pos_temporal,
            blocks,
            head_w,
            head_b,
        })
    }

    /// All-zero container with matching shapes, used for gradients.
    pub fn zeros(cfg: &StFormerConfig) -> Self {
        let (c, d, h) = (cfg.channels, cfg.feature_dim, cfg.mlp_hidden);
        StFormerParams {
            embed_w: Tensor::zeros(&[c, d]),
            embed_b: Tensor::zeros(&[d]),
            pos_spatial: Tensor::zeros(&[cfg.tokens, d]),
            pos_temporal: Tensor::zeros(&[cfg.frames, d]),
            blocks: (0..cfg.loops)
                .map(|_| LoopParams {
                    spatial: EncoderParams::zeros(d, h),
                    temporal: EncoderParams::zeros(d, h),
                })
                .collect(),
            head_w: Tensor::zeros(&[d]),
            head_b: Tensor::zeros(&[1]),
        }
    }

    pub fn validate_shapes(&self, cfg: &StFormerConfig) -> Result<()> {
        cfg.validate()?;
        let (c, d, h) = (cfg.channels, cfg.feature_dim, cfg.mlp_hidden);
        let ok = self.embed_w.dims() == [c, d]
            && self.embed_b.dims() == [d]
            && self.pos_spatial.dims() == [cfg.tokens, d]
            && self.pos_temporal.dims() == [cfg.frames, d]
            && self.blocks.len() == cfg.loops
            && self.head_w.dims() == [d]
            && self.head_b.dims() == [1]
            && self.blocks.iter().all(|b| {
                [&b.spatial, &b.temporal].iter().all(|e| {
                    e.w_q.dims() == [d, d]
                        && e.w_k.dims() == [d, d]
                        && e.w_v.dims() == [d, d]
                        && e.ln_scale.dims() == [d]
                        && e.ln_shift.dims() == [d]
                        && e.mlp_w1.dims() == [d, h]
                        && e.mlp_b1.dims() == [h]
                        && e.mlp_w2.dims() == [h, d]
                        && e.mlp_b2.dims() == [d]
                })
            });
        if ok {
            Ok(())
        } else {
            Err(CoreError::shape(
                "transformer parameter shapes do not match the configuration".to_string(),
            ))
        }
    }
}

impl ParamTensors for StFormerParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("embed_w".to_string(), &self.embed_w),
            ("embed_b".to_string(), &self.embed_b),
            ("pos_spatial".to_string(), &self.pos_spatial),
            ("pos_temporal".to_string(), &self.pos_temporal),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            b.spatial.push_named(&format!("loop{i}.spatial"), &mut out);
            b.temporal.push_named(&format!("loop{i}.temporal"), &mut out);
        }
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("embed_w".to_string(), &mut self.embed_w),
            ("embed_b".to_string(), &mut self.embed_b),
            ("pos_spatial".to_string(), &mut self.pos_spatial),
            ("pos_temporal".to_string(), &mut self.pos_temporal),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.spatial
                .push_named_mut(&format!("loop{i}.spatial"), &mut out);
            b.temporal
                .push_named_mut(&format!("loop{i}.temporal"), &mut out);
        }
        out.push(("head_w".to_string(), &mut self.head_w));
        out.push(("head_b".to_string(), &mut self.head_b));
        out
    }
}

// ── Standalone encoder entry points ─────────────────────────────────────────

/// [t][n][d] → [n][t][d]
fn transpose_axes(x: &[f64], a: usize, b: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..a {
        for j in 0..b {
            let src = (i * b + j) * d;
            let dst = (j * a + i) * d;
            out[dst..dst + d].copy_from_slice(&x[src..src + d]);
        }
    }
    out
}

fn check_feature_shape(x: &[f64], t: usize, n: usize, d: usize) -> Result<()> {
    if x.len() != t * n * d || t == 0 || n == 0 || d == 0 {
        return Err(CoreError::shape(format!(
            "expected a {t}×{n}×{d} feature tensor, got {} values",
            x.len()
        )));
    }
    Ok(())
}

/// Attention over the N ROI tokens of each frame independently.
pub fn spatial_encoder_forward(
    x: &[f64],
    t: usize,
    n: usize,
    d: usize,
    params: &EncoderParams,
    ln_bypass: bool,
) -> Result<Vec<f64>> {
    check_feature_shape(x, t, n, d)?;
    Ok(encoder_forward(x, t, n, d, params, ln_bypass).0)
}

/// Attention over the T frames of each ROI independently: the spatial
/// encoder on the axis-swapped tensor, swapped back.
pub fn temporal_encoder_forward(
    x: &[f64],
    t: usize,
    n: usize,
    d: usize,
    params: &EncoderParams,
    ln_bypass: bool,
) -> Result<Vec<f64>> {
    check_feature_shape(x, t, n, d)?;
    let swapped = transpose_axes(x, t, n, d);
    let out = encoder_forward(&swapped, n, t, d, params, ln_bypass).0;
    Ok(transpose_axes(&out, n, t, d))
}

// ── Forward ─────────────────────────────────────────────────────────────────

/// Saved activations of one full forward pass.
pub struct StFormerTape {
    scaled: Vec<f64>, // T·N·C rescaled input
    loop_tapes: Vec<(EncoderTape, EncoderTape)>,
    pooled: Vec<f64>, // T·D token means feeding the head
    fs: f64,
}

fn check_map(map: &MstMap, cfg: &StFormerConfig) -> Result<()> {
    if map.frames() != cfg.frames || map.combos() != cfg.tokens || map.channels() != cfg.channels {
        return Err(CoreError::shape(format!(
            "map is {}×{}×{}, configuration wants {}×{}×{}",
            map.frames(),
            map.combos(),
            map.channels(),
            cfg.frames,
            cfg.tokens,
            cfg.channels
        )));
    }
    Ok(())
}

pub fn st_former_forward(
    map: &MstMap,
    params: &StFormerParams,
    cfg: &StFormerConfig,
) -> Result<Waveform> {
    st_former_forward_with_tape(map, params, cfg).map(|(y, _)| y)
}

pub fn st_former_forward_with_tape(
    map: &MstMap,
    params: &StFormerParams,
    cfg: &StFormerConfig,
) -> Result<(Waveform, StFormerTape)> {
    params.validate_shapes(cfg)?;
    check_map(map, cfg)?;
    let (t, n, c, d) = (cfg.frames, cfg.tokens, cfg.channels, cfg.feature_dim);

    let scaled: Vec<f64> = map.data().iter().map(|v| v / INPUT_SCALE - 1.0).collect();
    let mut x = matmul(&scaled, params.embed_w.data(), t * n, c, d);
    for row in 0..t * n {
        for j in 0..d {
            x[row * d + j] += params.embed_b.data()[j];
        }
    }
    // Positional tables, once, before the first loop.
    for ti in 0..t {
        for ni in 0..n {
            let base = (ti * n + ni) * d;
            for j in 0..d {
                x[base + j] += params.pos_spatial.data()[ni * d + j]
                    + params.pos_temporal.data()[ti * d + j];
            }
        }
    }

    let mut loop_tapes = Vec::with_capacity(cfg.loops);
    for block in &params.blocks {
        let (sp_out, sp_tape) = encoder_forward(&x, t, n, d, &block.spatial, cfg.ln_bypass);
        let swapped = transpose_axes(&sp_out, t, n, d);
        let (tm_out, tm_tape) = encoder_forward(&swapped, n, t, d, &block.temporal, cfg.ln_bypass);
        x = transpose_axes(&tm_out, n, t, d);
        loop_tapes.push((sp_tape, tm_tape));
    }

    // Head: mean over tokens, then affine D→1.
    let mut pooled = vec![0.0; t * d];
    for ti in 0..t {
        for ni in 0..n {
            let base = (ti * n + ni) * d;
            for j in 0..d {
                pooled[ti * d + j] += x[base + j] / n as f64;
            }
        }
    }
    let head_w = params.head_w.data();
    let y: Vec<f64> = (0..t)
        .map(|ti| {
            pooled[ti * d..(ti + 1) * d]
                .iter()
                .zip(head_w)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + params.head_b.data()[0]
        })
        .collect();

    let wave = Waveform::new(y, map.fs())?;
    Ok((
        wave,
        StFormerTape {
            scaled,
            loop_tapes,
            pooled,
            fs: map.fs(),
        },
    ))
}

// ── Backward ────────────────────────────────────────────────────────────────

/// Reverse-mode gradients for a taped forward pass. `upstream` is dL/dy, one
/// value per output sample. Returns parameter gradients and the gradient
/// with respect to the raw map values.
pub fn st_former_backward(
    tape: &StFormerTape,
    params: &StFormerParams,
    cfg: &StFormerConfig,
    upstream: &[f64],
) -> Result<(StFormerParams, Vec<f64>)> {
    params.validate_shapes(cfg)?;
    let (t, n, c, d) = (cfg.frames, cfg.tokens, cfg.channels, cfg.feature_dim);
    if upstream.len() != t {
        return Err(CoreError::shape(format!(
            "upstream gradient must have {t} entries, got {}",
            upstream.len()
        )));
    }
    let mut grads = StFormerParams::zeros(cfg);

    // Head.
    let head_w = params.head_w.data();
    let mut d_x = vec![0.0; t * n * d];
    for ti in 0..t {
        let dy = upstream[ti];
        grads.head_b.data_mut()[0] += dy;
        for j in 0..d {
            grads.head_w.data_mut()[j] += tape.pooled[ti * d + j] * dy;
        }
        for ni in 0..n {
            let base = (ti * n + ni) * d;
            for j in 0..d {
                d_x[base + j] = head_w[j] * dy / n as f64;
            }
        }
    }

    // Loops, reversed.
    for (block, (sp_tape, tm_tape), gblock) in params
        .blocks
        .iter()
        .zip(&tape.loop_tapes)
        .zip(&mut grads.blocks)
        .map(|((b, tp), g)| (b, tp, g))
        .rev()
    {
        let d_tm_out = transpose_axes(&d_x, t, n, d);
        let d_swapped = encoder_backward(tm_tape, &d_tm_out, d, &block.temporal, &mut gblock.temporal);
        let d_sp_out = transpose_axes(&d_swapped, n, t, d);
        d_x = encoder_backward(sp_tape, &d_sp_out, d, &block.spatial, &mut gblock.spatial);
    }

    // Positional tables and embedding.
    for ti in 0..t {
        for ni in 0..n {
            let base = (ti * n + ni) * d;
            for j in 0..d {
                grads.pos_spatial.data_mut()[ni * d + j] += d_x[base + j];
                grads.pos_temporal.data_mut()[ti * d + j] += d_x[base + j];
            }
        }
    }
    for (gw, dv) in grads
        .embed_w
        .data_mut()
        .iter_mut()
        .zip(matmul_at(&tape.scaled, &d_x, t * n, c, d))
    {
        *gw += dv;
    }
    for row in 0..t * n {
        for j in 0..d {
            grads.embed_b.data_mut()[j] += d_x[row * d + j];
        }
    }
    let d_scaled = matmul_bt(&d_x, params.embed_w.data(), t * n, d, c);
    let d_input: Vec<f64> = d_scaled.iter().map(|v| v / INPUT_SCALE).collect();

    Ok((grads, d_input))
}

impl StFormerTape {
    pub fn fs(&self) -> f64 {
        self.fs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_map(t: usize, n: usize, seed: u64) -> MstMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..t * n * 6).map(|_| rng.gen_range(0.0..255.0)).collect();
        MstMap::from_parts(data, t, n, 30.0).unwrap()
    }

    fn toy_cfg(t: usize, n: usize) -> StFormerConfig {
        StFormerConfig {
            feature_dim: 4,
            loops: 2,
            tokens: n,
            frames: t,
            channels: 6,
            mlp_hidden: 6,
            ln_bypass: false,
        }
    }

    #[test]
    fn output_length_equals_frame_count_across_shapes() {
        for (t, n) in [(4usize, 1usize), (7, 3), (12, 7), (2, 15)] {
            let cfg = toy_cfg(t, n);
            let params = StFormerParams::init(&cfg, 1).unwrap();
            let y = st_former_forward(&toy_map(t, n, 2), &params, &cfg).unwrap();
            assert_eq!(y.len(), t, "T={t} N={n}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = toy_cfg(6, 7);
        let params = StFormerParams::init(&cfg, 3).unwrap();
        let map = toy_map(6, 7, 4);
        let a = st_former_forward(&map, &params, &cfg).unwrap();
        let b = st_former_forward(&map, &params, &cfg).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn duplicate_tokens_with_zero_spatial_positions_collapse_to_single_token() {
        // All ROI rows identical and pos_spatial zeroed: attention over
        // identical tokens is uniform and every token stays identical, so the
        // prediction equals the N=1 model with the same weights.
        let t = 5;
        let cfg3 = toy_cfg(t, 3);
        let cfg1 = toy_cfg(t, 1);
        let mut p3 = StFormerParams::init(&cfg3, 7).unwrap();
        p3.pos_spatial = Tensor::zeros(&[3, cfg3.feature_dim]);
        let mut p1 = p3.clone();
        p1.pos_spatial = Tensor::zeros(&[1, cfg1.feature_dim]);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<f64> = (0..t * 6).map(|_| rng.gen_range(0.0..255.0)).collect();
        let mut data3 = Vec::new();
        let mut data1 = Vec::new();
        for ti in 0..t {
            let row = &rows[ti * 6..(ti + 1) * 6];
            for _ in 0..3 {
                data3.extend_from_slice(row);
            }
            data1.extend_from_slice(row);
        }
        let m3 = MstMap::from_parts(data3, t, 3, 30.0).unwrap();
        let m1 = MstMap::from_parts(data1, t, 1, 30.0).unwrap();

        let y3 = st_former_forward(&m3, &p3, &cfg3).unwrap();
        let y1 = st_former_forward(&m1, &p1, &cfg1).unwrap();
        for (a, b) in y3.samples().iter().zip(y1.samples()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn temporal_encoder_is_the_transposed_spatial_encoder() {
        let (t, n, d) = (3usize, 4usize, 4usize);
        let enc = EncoderParams::init(d, 6, &mut ChaCha8Rng::seed_from_u64(9));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Vec<f64> = (0..t * n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let tm = temporal_encoder_forward(&x, t, n, d, &enc, false).unwrap();
        let swapped = transpose_axes(&x, t, n, d);
        let sp = spatial_encoder_forward(&swapped, n, t, d, &enc, false).unwrap();
        let back = transpose_axes(&sp, n, t, d);
        for (a, b) in tm.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = toy_cfg(4, 3);
        let params = StFormerParams::init(&cfg, 11).unwrap();
        let map = toy_map(4, 3, 12);
        let (_, tape) = st_former_forward_with_tape(&map, &params, &cfg).unwrap();
        let (grads, d_in) = st_former_backward(&tape, &params, &cfg, &[0.0; 4]).unwrap();
        for (name, tensor) in grads.named_tensors() {
            assert!(
                tensor.data().iter().all(|&v| v == 0.0),
                "{name} has nonzero gradient"
            );
        }
        assert!(d_in.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences_on_sampled_parameters() {
        let cfg = toy_cfg(5, 3);
        let params = StFormerParams::init(&cfg, 13).unwrap();
        let map = toy_map(5, 3, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let objective = |p: &StFormerParams| -> f64 {
            let y = st_former_forward(&map, p, &cfg).unwrap();
            y.samples().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };

        let (_, tape) = st_former_forward_with_tape(&map, &params, &cfg).unwrap();
        let (grads, d_input) = st_former_backward(&tape, &params, &cfg, &weights).unwrap();

        let eps = 1e-5;
        let named = grads.named_tensors();
        for (name, g) in &named {
            let idx = g.numel() / 2;
            let got = g.data()[idx];
            let bump = |delta: f64| -> f64 {
                let mut pp = params.clone();
                for (nm, t) in pp.named_tensors_mut() {
                    if &nm == name {
                        t.data_mut()[idx] += delta;
                    }
                }
                objective(&pp)
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            assert!(
                (fd - got).abs() <= 1e-5 * fd.abs().max(1.0),
                "{name}[{idx}]: fd {fd} vs analytic {got}"
            );
        }

        // Input gradient (through the /127.5 rescale).
        for &idx in &[0usize, 40, 89] {
            let got = d_input[idx];
            let bump = |delta: f64| -> f64 {
                let mut data = map.data().to_vec();
                data[idx] += delta;
                let m = MstMap::from_parts(data, 5, 3, 30.0).unwrap();
                let y = st_former_forward(&m, &params, &cfg).unwrap();
                y.samples().iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let fd = (bump(1e-3) - bump(-1e-3)) / 2e-3;
            assert!(
                (fd - got).abs() <= 1e-5 * fd.abs().max(1e-6),
                "input[{idx}]: fd {fd} vs analytic {got}"
            );
        }
    }

    #[test]
    fn rejects_mismatched_map_shapes() {
        let cfg = toy_cfg(4, 3);
        let params = StFormerParams::init(&cfg, 20).unwrap();
        let wrong = toy_map(4, 7, 21);
        assert!(st_former_forward(&wrong, &params, &cfg).is_err());
    }
}

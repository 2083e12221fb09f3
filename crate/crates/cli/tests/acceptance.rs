//! Acceptance suite: eleven numbered criteria, one test per criterion, so the
//! harness prints one pass/fail line each. Every numeric check is made
//! against machinery independent of the library under test: an O(n²) DFT,
//! bin/pair/lag enumeration oracles, central finite differences, hand-built
//! pixel sets, and hand-computed fixtures.

// The oracles spell out every subscript on purpose.
#![allow(clippy::needless_range_loop)]

use pulseforge_core::loss::{
    bandwidth_loss, contrastive_pretrain_loss, finetune_loss, mcc_loss, pearson_loss,
    periodicity_loss, sparsity_loss, supervised_contrastive_loss, total_selfsup_loss,
    variance_loss, FinetuneInputs, LossConfig,
};
use pulseforge_core::model::{
    sample_st_rppg, st_encoder_backward, st_encoder_forward, st_encoder_forward_with_tape,
    st_former_backward, st_former_forward, st_former_forward_with_tape, ModelCheckpoint,
    ParamTensors, StEncoderConfig, StEncoderParams, StFormerConfig, StFormerParams,
};
use pulseforge_core::mstmap::{
    build_mstmap, combo_channel_mean, enumerate_combinations, sliding_windows, MstMap,
    RoiFrameStats, WindowSpec,
};
use pulseforge_core::pipeline::{
    finetune_stformer, predict_hr, pretrain_contrastive, pretrain_selfsup, HrPrediction,
    PredictConfig, PredictInput, PredictMode, Reduce, TraceRow, TrainConfig,
};
use pulseforge_core::signal::{fft_psd, hr_from_psd, BandLimits, Spectrum, VideoCube, Waveform};
use pulseforge_core::synth::{gen_pulse, gen_roi_stats, gen_video_cube, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const FS: f64 = 30.0;

fn band() -> BandLimits {
    BandLimits::physiological()
}

fn assert_within(elapsed: Duration, budget_s: u64, what: &str) {
    assert!(
        elapsed <= Duration::from_secs(budget_s),
        "{what} took {elapsed:?}, over the {budget_s} s budget"
    );
}

// ── Independent oracle machinery ────────────────────────────────────────────
//
// Everything here recomputes results from definitions: a direct O(n²) DFT
// with angles reduced mod 2π, explicit bin/pair/lag enumeration, and the
// same band-edge tolerance convention the spectra use.

/// Full unnormalized DFT by direct summation; input is zero-padded to n_fft.
fn oracle_dft(x: &[f64], n_fft: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n_fft);
    for k in 0..n_fft {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (n, &v) in x.iter().enumerate() {
            let ang = -2.0 * PI * ((k * n) % n_fft) as f64 / n_fft as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        out.push((re, im));
    }
    out
}

/// One-sided PSD from the direct DFT: |X_k|² for k = 0..=n_fft/2.
fn oracle_psd(x: &[f64], n_fft: usize) -> Vec<f64> {
    oracle_dft(x, n_fft)[..n_fft / 2 + 1]
        .iter()
        .map(|&(re, im)| re * re + im * im)
        .collect()
}

/// The PSD grid a loss uses when no explicit size is configured.
fn oracle_default_n_fft(len: usize) -> usize {
    (4 * len).max(1024).next_power_of_two()
}

/// Inclusive in-band bin range on a one-sided grid of `n_bins` bins.
fn oracle_band_bins(n_bins: usize, bin_width: f64, b: &BandLimits) -> (usize, usize) {
    let lo = ((b.low / bin_width) - 1e-9).ceil().max(0.0) as usize;
    let hi = (((b.high / bin_width) + 1e-9).floor() as usize).min(n_bins - 1);
    assert!(lo <= hi, "oracle band covers no bins");
    (lo, hi)
}

fn oracle_bandwidth(x: &[f64], fs: f64, cfg: &LossConfig) -> f64 {
    let n_fft = cfg.n_fft.unwrap_or_else(|| oracle_default_n_fft(x.len()));
    let psd = oracle_psd(x, n_fft);
    let (lo, hi) = oracle_band_bins(psd.len(), fs / n_fft as f64, &cfg.band);
    let total: f64 = psd.iter().sum();
    let inb: f64 = psd[lo..=hi].iter().sum();
    (total - inb) / total
}

fn oracle_sparsity(x: &[f64], fs: f64, cfg: &LossConfig) -> f64 {
    let n_fft = cfg.n_fft.unwrap_or_else(|| oracle_default_n_fft(x.len()));
    let psd = oracle_psd(x, n_fft);
    let (lo, hi) = oracle_band_bins(psd.len(), fs / n_fft as f64, &cfg.band);
    let mut peak = lo;
    for k in lo..=hi {
        if psd[k] > psd[peak] {
            peak = k;
        }
    }
    let inb: f64 = psd[lo..=hi].iter().sum();
    let far: f64 = (lo..=hi)
        .filter(|&k| k.abs_diff(peak) >= cfg.delta_f_bins)
        .map(|k| psd[k])
        .sum();
    far / inb
}

fn oracle_variance(batch: &[&[f64]], fs: f64, cfg: &LossConfig) -> f64 {
    let len = batch[0].len();
    let n_fft = cfg.n_fft.unwrap_or_else(|| oracle_default_n_fft(len));
    let psds: Vec<Vec<f64>> = batch.iter().map(|x| oracle_psd(x, n_fft)).collect();
    let (lo, hi) = oracle_band_bins(psds[0].len(), fs / n_fft as f64, &cfg.band);
    let d = hi - lo + 1;
    let agg: Vec<f64> = (0..d)
        .map(|i| psds.iter().map(|p| p[lo + i]).sum::<f64>())
        .collect();
    let total: f64 = agg.iter().sum();
    let mut running = 0.0;
    let mut value = 0.0;
    for (i, &a) in agg.iter().enumerate() {
        running += a / total;
        let diff = running - (i + 1) as f64 / d as f64;
        value += diff * diff;
    }
    value / d as f64
}

fn oracle_periodicity(x: &[f64], fs: f64, cfg: &LossConfig) -> f64 {
    let s = cfg.n_segments;
    let seg_len = x.len() / s;
    let n_fft = cfg.n_fft.unwrap_or_else(|| oracle_default_n_fft(seg_len));
    let mut norm = Vec::with_capacity(s);
    for j in 0..s {
        let psd = oracle_psd(&x[j * seg_len..(j + 1) * seg_len], n_fft);
        let (lo, hi) = oracle_band_bins(psd.len(), fs / n_fft as f64, &cfg.band);
        let total: f64 = psd[lo..=hi].iter().sum();
        norm.push(psd[lo..=hi].iter().map(|p| p / total).collect::<Vec<_>>());
    }
    let mut value = 0.0;
    for j in 0..s - 1 {
        for i in 0..norm[j].len() {
            let diff = norm[j][i] - norm[j + 1][i];
            value += diff * diff;
        }
    }
    value
}

fn oracle_pearson(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (mp, mg) = (
        p.iter().sum::<f64>() / n,
        g.iter().sum::<f64>() / n,
    );
    let sp = (p.iter().map(|v| (v - mp) * (v - mp)).sum::<f64>() / n).sqrt();
    let sg = (g.iter().map(|v| (v - mg) * (v - mg)).sum::<f64>() / n).sqrt();
    let cov = p
        .iter()
        .zip(g)
        .map(|(a, b)| (a - mp) * (b - mg))
        .sum::<f64>()
        / n;
    1.0 - cov / (sp * sg)
}

/// MCC by explicit lag enumeration. The ground truth is ideally bandpassed
/// through the oracle DFT; every circular lag of the cross-correlation is
/// computed by direct summation and the maximum normalized.
fn oracle_mcc(p: &[f64], g: &[f64], fs: f64, b: &BandLimits) -> f64 {
    let t = p.len();
    let gf = oracle_dft(g, t);
    let bw = fs / t as f64;
    let lo = ((b.low / bw) - 1e-9).ceil().max(0.0) as usize;
    let hi_f = ((b.high / bw) + 1e-9).floor();
    let keep = |k: usize| {
        let m = k.min(t - k);
        m >= lo && (m as f64) <= hi_f
    };
    let g_band: Vec<f64> = (0..t)
        .map(|n| {
            let mut acc = 0.0;
            for k in 0..t {
                if !keep(k) {
                    continue;
                }
                let ang = 2.0 * PI * ((k * n) % t) as f64 / t as f64;
                acc += gf[k].0 * ang.cos() - gf[k].1 * ang.sin();
            }
            acc / t as f64
        })
        .collect();

    let n = t as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mg = g.iter().sum::<f64>() / n;
    let sp = (p.iter().map(|v| (v - mp) * (v - mp)).sum::<f64>() / n).sqrt();
    let sg = (g.iter().map(|v| (v - mg) * (v - mg)).sum::<f64>() / n).sqrt();
    let mut best = f64::NEG_INFINITY;
    for tau in 0..t {
        let mut c = 0.0;
        for i in 0..t {
            c += p[i] * g_band[(i + t - tau) % t];
        }
        if c > best {
            best = c;
        }
    }
    -(best / (n * sp * sg))
}

/// Unit-sum in-band slices of raw one-sided PSDs.
fn oracle_normalize(psds: &[Vec<f64>], lo: usize, hi: usize) -> Vec<Vec<f64>> {
    psds.iter()
        .map(|p| {
            let total: f64 = p[lo..=hi].iter().sum();
            p[lo..=hi].iter().map(|v| v / total).collect()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pair-enumeration oracle for the pretraining contrastive objective:
/// pos over same-list pairs, neg over all cross-list pairs.
fn oracle_ctr_pretrain(
    psds_a: &[Vec<f64>],
    psds_b: &[Vec<f64>],
    bin_width: f64,
    b: &BandLimits,
) -> (f64, f64) {
    let (lo, hi) = oracle_band_bins(psds_a[0].len(), bin_width, b);
    let na = oracle_normalize(psds_a, lo, hi);
    let nb = oracle_normalize(psds_b, lo, hi);
    let n = na.len() as f64;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for i in 0..na.len() {
        for j in 0..na.len() {
            if i != j {
                pos += (dist2(&na[i], &na[j]) + dist2(&nb[i], &nb[j])) / (2.0 * n * (n - 1.0));
            }
            neg -= dist2(&na[i], &nb[j]) / (n * n);
        }
    }
    (pos, neg)
}

/// Pair-enumeration oracle for the ground-truth-anchored contrastive
/// objective: pos against same-video ground truths, neg cross-video.
fn oracle_ctr_supervised(
    fa: &[Vec<f64>],
    fb: &[Vec<f64>],
    ga: &[Vec<f64>],
    gb: &[Vec<f64>],
    bin_width: f64,
    b: &BandLimits,
) -> (f64, f64) {
    let (lo, hi) = oracle_band_bins(fa[0].len(), bin_width, b);
    let (fa, fb) = (oracle_normalize(fa, lo, hi), oracle_normalize(fb, lo, hi));
    let (ga, gb) = (oracle_normalize(ga, lo, hi), oracle_normalize(gb, lo, hi));
    let n = fa.len() as f64;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for i in 0..fa.len() {
        for j in 0..fa.len() {
            if i != j {
                pos += (dist2(&fa[i], &ga[j]) + dist2(&fb[i], &gb[j])) / (2.0 * n * (n - 1.0));
            }
            neg -= (dist2(&fa[i], &gb[j]) + dist2(&fb[i], &ga[j])) / (n * n);
        }
    }
    (pos, neg)
}

// ── Shared random builders ──────────────────────────────────────────────────

/// A few in-band tones plus mild broad-band noise; never degenerate.
fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Waveform {
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.8..2.8),
                rng.gen_range(0.4..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let samples: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / FS;
            let mut v = rng.gen_range(-0.3..0.3);
            for &(f, a, ph) in &tones {
                v += a * (2.0 * PI * f * t + ph).sin();
            }
            v
        })
        .collect();
    Waveform::new(samples, FS).expect("random signal")
}

fn random_spectrum(rng: &mut ChaCha8Rng, n_fft: usize) -> Spectrum {
    let powers: Vec<f64> = (0..n_fft / 2 + 1)
        .map(|_| rng.gen_range(0.01..1.0))
        .collect();
    Spectrum::new(FS / n_fft as f64, powers, n_fft).expect("random spectrum")
}

fn random_map(rng: &mut ChaCha8Rng, frames: usize, combos: usize) -> MstMap {
    let data: Vec<f64> = (0..frames * combos * 6)
        .map(|_| rng.gen_range(0.0..255.0))
        .collect();
    MstMap::from_parts(data, frames, combos, FS).expect("random map")
}

fn random_cube(rng: &mut ChaCha8Rng, t: usize, h: usize, w: usize) -> VideoCube {
    let data: Vec<f64> = (0..t * h * w * 3)
        .map(|_| rng.gen_range(0.0..255.0))
        .collect();
    VideoCube::new(data, t, h, w, 3, FS).expect("random cube")
}

// ── Finite-difference helpers ───────────────────────────────────────────────

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Indices of the `k` largest-magnitude entries.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    idx.truncate(k);
    idx
}

/// Central finite differences of `f` along the largest analytic-gradient
/// coordinates of one flat input vector.
fn check_grad_vec(
    label: &str,
    input: &[f64],
    analytic: &[f64],
    eps: f64,
    tol: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) {
    for idx in top_k(analytic, 5) {
        let mut bumped = input.to_vec();
        bumped[idx] = input[idx] + eps;
        let up = f(&bumped);
        bumped[idx] = input[idx] - eps;
        let down = f(&bumped);
        let fd = (up - down) / (2.0 * eps);
        assert!(
            rel_err(fd, analytic[idx]) <= tol,
            "{label}[{idx}]: finite difference {fd} vs analytic {}",
            analytic[idx]
        );
    }
}

// ── Criterion 1: gradient correctness ───────────────────────────────────────

#[test]
fn criterion_01_finite_differences_confirm_every_gradient() {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let w_eps = 1e-5;
    let p_eps = 1e-6;
    let loss_tol = 1e-4;
    let model_tol = 1e-3;

    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = 48 + 16 * (seed as usize % 4);
        let y = random_signal(&mut rng, len);
        let gt = random_signal(&mut rng, len);

        let v = bandwidth_loss(&y, &cfg).unwrap();
        check_grad_vec("bandwidth", y.samples(), &v.grads[0], w_eps, loss_tol, |x| {
            bandwidth_loss(&Waveform::new(x.to_vec(), FS).unwrap(), &cfg)
                .unwrap()
                .value
        });

        let v = sparsity_loss(&y, &cfg).unwrap();
        check_grad_vec("sparsity", y.samples(), &v.grads[0], w_eps, loss_tol, |x| {
            sparsity_loss(&Waveform::new(x.to_vec(), FS).unwrap(), &cfg)
                .unwrap()
                .value
        });

        let v = periodicity_loss(&y, &cfg).unwrap();
        check_grad_vec("periodicity", y.samples(), &v.grads[0], w_eps, loss_tol, |x| {
            periodicity_loss(&Waveform::new(x.to_vec(), FS).unwrap(), &cfg)
                .unwrap()
                .value
        });

        let batch = vec![
            y.clone(),
            random_signal(&mut rng, len),
            random_signal(&mut rng, len),
        ];
        let member = seed as usize % batch.len();
        let v = variance_loss(&batch, &cfg).unwrap();
        check_grad_vec(
            "variance",
            batch[member].samples(),
            &v.grads[member],
            w_eps,
            loss_tol,
            |x| {
                let mut b = batch.clone();
                b[member] = Waveform::new(x.to_vec(), FS).unwrap();
                variance_loss(&b, &cfg).unwrap().value
            },
        );

        let v = total_selfsup_loss(&batch, &cfg).unwrap();
        check_grad_vec(
            "total_selfsup",
            batch[member].samples(),
            &v.grads[member],
            w_eps,
            loss_tol,
            |x| {
                let mut b = batch.clone();
                b[member] = Waveform::new(x.to_vec(), FS).unwrap();
                total_selfsup_loss(&b, &cfg).unwrap().total
            },
        );

        let v = pearson_loss(&y, &gt).unwrap();
        check_grad_vec("pearson", y.samples(), &v.grads[0], w_eps, loss_tol, |x| {
            pearson_loss(&Waveform::new(x.to_vec(), FS).unwrap(), &gt)
                .unwrap()
                .value
        });

        let v = mcc_loss(&y, &gt, &band()).unwrap();
        check_grad_vec("mcc", y.samples(), &v.grads[0], w_eps, loss_tol, |x| {
            mcc_loss(&Waveform::new(x.to_vec(), FS).unwrap(), &gt, &band())
                .unwrap()
                .value
        });

        // Contrastive losses differentiate raw PSD powers.
        let n_fft = 256;
        let psds_a: Vec<Spectrum> = (0..3).map(|_| random_spectrum(&mut rng, n_fft)).collect();
        let psds_b: Vec<Spectrum> = (0..3).map(|_| random_spectrum(&mut rng, n_fft)).collect();
        let v = contrastive_pretrain_loss(&psds_a, &psds_b, &band()).unwrap();
        let member = seed as usize % 3;
        check_grad_vec(
            "contrastive",
            psds_a[member].powers(),
            &v.grads_a[member],
            p_eps,
            loss_tol,
            |p| {
                let mut a = psds_a.clone();
                a[member] =
                    Spectrum::new(FS / n_fft as f64, p.to_vec(), n_fft).unwrap();
                contrastive_pretrain_loss(&a, &psds_b, &band()).unwrap().total
            },
        );
        let gt_a: Vec<Spectrum> = (0..3).map(|_| random_spectrum(&mut rng, n_fft)).collect();
        let gt_b: Vec<Spectrum> = (0..3).map(|_| random_spectrum(&mut rng, n_fft)).collect();
        let v = supervised_contrastive_loss(&psds_a, &psds_b, &gt_a, &gt_b, &band()).unwrap();
        check_grad_vec(
            "supervised_contrastive",
            psds_b[member].powers(),
            &v.grads_b[member],
            p_eps,
            loss_tol,
            |p| {
                let mut b = psds_b.clone();
                b[member] =
                    Spectrum::new(FS / n_fft as f64, p.to_vec(), n_fft).unwrap();
                supervised_contrastive_loss(&psds_a, &b, &gt_a, &gt_b, &band())
                    .unwrap()
                    .total
            },
        );

        // Combined fine-tuning objective, differentiated through one
        // predicted waveform.
        let preds = vec![y.clone(), random_signal(&mut rng, len)];
        let preds_o = vec![random_signal(&mut rng, len), random_signal(&mut rng, len)];
        let gts = vec![gt.clone(), random_signal(&mut rng, len)];
        let gts_o = vec![random_signal(&mut rng, len), random_signal(&mut rng, len)];
        let inputs = FinetuneInputs {
            pred: &preds,
            pred_other: &preds_o,
            gt: &gts,
            gt_other: &gts_o,
        };
        let v = finetune_loss(&inputs, &cfg).unwrap();
        check_grad_vec("finetune", preds[0].samples(), &v.grads[0], w_eps, loss_tol, |x| {
            let mut p = preds.clone();
            p[0] = Waveform::new(x.to_vec(), FS).unwrap();
            finetune_loss(
                &FinetuneInputs {
                    pred: &p,
                    pred_other: &preds_o,
                    gt: &gts,
                    gt_other: &gts_o,
                },
                &cfg,
            )
            .unwrap()
            .total
        });
    }

    // Transformer backward: weighted-output objective, largest parameter
    // gradients per named tensor set.
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cfg = StFormerConfig {
            feature_dim: 4,
            loops: 1,
            tokens: 3,
            frames: 6 + (seed as usize % 4),
            channels: 6,
            mlp_hidden: 6,
            ln_bypass: false,
        };
        let params = StFormerParams::init(&cfg, seed).unwrap();
        let map = random_map(&mut rng, cfg.frames, cfg.tokens);
        let upstream: Vec<f64> = (0..cfg.frames).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |p: &StFormerParams| {
            let y = st_former_forward(&map, p, &cfg).unwrap();
            y.samples().iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, tape) = st_former_forward_with_tape(&map, &params, &cfg).unwrap();
        let (grads, _) = st_former_backward(&tape, &params, &cfg, &upstream).unwrap();

        let mut flat: Vec<(String, usize, f64)> = Vec::new();
        for (name, g) in grads.named_tensors() {
            for (i, &v) in g.data().iter().enumerate() {
                flat.push((name.clone(), i, v));
            }
        }
        flat.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
        for (name, idx, analytic) in flat.into_iter().take(8) {
            let eps = 1e-5;
            let bump = |delta: f64| {
                let mut pp = params.clone();
                for (nm, t) in pp.named_tensors_mut() {
                    if nm == name {
                        t.data_mut()[idx] += delta;
                    }
                }
                objective(&pp)
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            assert!(
                rel_err(fd, analytic) <= model_tol,
                "transformer {name}[{idx}]: finite difference {fd} vs analytic {analytic}"
            );
        }
    }

    // Video encoder backward: same scheme over the flattened output block.
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let cfg = StEncoderConfig {
            hidden_channels: 3,
            spatial_out: 2,
        };
        let params = StEncoderParams::init(&cfg, seed).unwrap();
        let clip = random_cube(&mut rng, 6, 6, 6);
        let out_len = 6 * 2 * 2;
        let upstream: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |p: &StEncoderParams| {
            let block = st_encoder_forward(&clip, p, &cfg).unwrap();
            block.values().iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, tape) = st_encoder_forward_with_tape(&clip, &params, &cfg).unwrap();
        let grads = st_encoder_backward(&tape, &params, &cfg, &upstream).unwrap();

        let mut flat: Vec<(String, usize, f64)> = Vec::new();
        for (name, g) in grads.named_tensors() {
            for (i, &v) in g.data().iter().enumerate() {
                flat.push((name.clone(), i, v));
            }
        }
        flat.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
        for (name, idx, analytic) in flat.into_iter().take(8) {
            let eps = 1e-5;
            let bump = |delta: f64| {
                let mut pp = params.clone();
                for (nm, t) in pp.named_tensors_mut() {
                    if nm == name {
                        t.data_mut()[idx] += delta;
                    }
                }
                objective(&pp)
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            assert!(
                rel_err(fd, analytic) <= model_tol,
                "encoder {name}[{idx}]: finite difference {fd} vs analytic {analytic}"
            );
        }
    }

    assert_within(start.elapsed(), 120, "criterion 1");
    println!("criterion 1 (gradient correctness): PASS");
}

// ── Criterion 2: loss oracle equivalence ────────────────────────────────────

#[test]
fn criterion_02_losses_match_brute_force_oracles() {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let tol = 1e-9;

    for (t, seed) in [(37usize, 0u64), (64, 1), (100, 2), (128, 3), (128, 4)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_signal(&mut rng, t);
        let gt = random_signal(&mut rng, t);
        let batch = vec![
            y.clone(),
            random_signal(&mut rng, t),
            random_signal(&mut rng, t),
        ];

        let got = bandwidth_loss(&y, &cfg).unwrap().value;
        let want = oracle_bandwidth(y.samples(), FS, &cfg);
        assert!((got - want).abs() <= tol, "bandwidth T={t}: {got} vs oracle {want}");

        let got = sparsity_loss(&y, &cfg).unwrap().value;
        let want = oracle_sparsity(y.samples(), FS, &cfg);
        assert!((got - want).abs() <= tol, "sparsity T={t}: {got} vs oracle {want}");

        let got = variance_loss(&batch, &cfg).unwrap().value;
        let refs: Vec<&[f64]> = batch.iter().map(|w| w.samples()).collect();
        let want = oracle_variance(&refs, FS, &cfg);
        assert!((got - want).abs() <= tol, "variance T={t}: {got} vs oracle {want}");

        let got = periodicity_loss(&y, &cfg).unwrap().value;
        let want = oracle_periodicity(y.samples(), FS, &cfg);
        assert!((got - want).abs() <= tol, "periodicity T={t}: {got} vs oracle {want}");

        let got = pearson_loss(&y, &gt).unwrap().value;
        let want = oracle_pearson(y.samples(), gt.samples());
        assert!((got - want).abs() <= tol, "pearson T={t}: {got} vs oracle {want}");

        let got = mcc_loss(&y, &gt, &band()).unwrap().value;
        let want = oracle_mcc(y.samples(), gt.samples(), FS, &band());
        assert!((got - want).abs() <= tol, "mcc T={t}: {got} vs oracle {want}");

        // Contrastive pretraining: library chain (FFT PSD → loss) against the
        // oracle chain (direct DFT PSD → pair enumeration), same waveforms.
        let n_fft = oracle_default_n_fft(t);
        let waves_a: Vec<Waveform> = (0..3).map(|_| random_signal(&mut rng, t)).collect();
        let waves_b: Vec<Waveform> = (0..3).map(|_| random_signal(&mut rng, t)).collect();
        let psd = |ws: &[Waveform]| -> Vec<Spectrum> {
            ws.iter().map(|w| fft_psd(w, n_fft).unwrap()).collect()
        };
        let opsd = |ws: &[Waveform]| -> Vec<Vec<f64>> {
            ws.iter().map(|w| oracle_psd(w.samples(), n_fft)).collect()
        };
        let got = contrastive_pretrain_loss(&psd(&waves_a), &psd(&waves_b), &band()).unwrap();
        let (pos, neg) =
            oracle_ctr_pretrain(&opsd(&waves_a), &opsd(&waves_b), FS / n_fft as f64, &band());
        assert!((got.pos - pos).abs() <= tol, "ctr pos T={t}: {} vs {pos}", got.pos);
        assert!((got.neg - neg).abs() <= tol, "ctr neg T={t}: {} vs {neg}", got.neg);
        assert!(
            (got.total - (pos + neg)).abs() <= tol,
            "ctr total T={t}: {} vs {}",
            got.total,
            pos + neg
        );

        // Supervised contrastive, and the combined fine-tuning objective on
        // top of it.
        let gts_a: Vec<Waveform> = (0..3).map(|_| random_signal(&mut rng, t)).collect();
        let gts_b: Vec<Waveform> = (0..3).map(|_| random_signal(&mut rng, t)).collect();
        let got =
            supervised_contrastive_loss(&psd(&waves_a), &psd(&waves_b), &psd(&gts_a), &psd(&gts_b), &band())
                .unwrap();
        let (pos, neg) = oracle_ctr_supervised(
            &opsd(&waves_a),
            &opsd(&waves_b),
            &opsd(&gts_a),
            &opsd(&gts_b),
            FS / n_fft as f64,
            &band(),
        );
        assert!((got.pos - pos).abs() <= tol, "sup-ctr pos T={t}: {} vs {pos}", got.pos);
        assert!((got.neg - neg).abs() <= tol, "sup-ctr neg T={t}: {} vs {neg}", got.neg);

        let inputs = FinetuneInputs {
            pred: &waves_a,
            pred_other: &waves_b,
            gt: &gts_a,
            gt_other: &gts_b,
        };
        let got = finetune_loss(&inputs, &cfg).unwrap();
        let mut pear = 0.0;
        let mut mcc = 0.0;
        for (p, g) in waves_a.iter().zip(&gts_a).chain(waves_b.iter().zip(&gts_b)) {
            pear += oracle_pearson(p.samples(), g.samples()) / 6.0;
            mcc += oracle_mcc(p.samples(), g.samples(), FS, &band()) / 6.0;
        }
        let want = pos + neg + cfg.alpha * pear + cfg.beta * mcc;
        assert!(
            (got.total - want).abs() <= tol,
            "finetune total T={t}: {} vs oracle {want}",
            got.total
        );
    }

    assert_within(start.elapsed(), 60, "criterion 2");
    println!("criterion 2 (loss oracle equivalence): PASS");
}

// ── Criterion 3: exact-case anchors ─────────────────────────────────────────

#[test]
fn criterion_03_exact_anchors_hold() {
    let tone = |freq: f64, n: usize| -> Waveform {
        Waveform::new(
            (0..n).map(|i| (2.0 * PI * freq * i as f64 / FS).sin()).collect(),
            FS,
        )
        .unwrap()
    };

    // A tone on bin 51 of a 1024-point grid (~1.49 Hz, in band) with the PSD
    // taken on exactly that grid concentrates all power in one in-band bin.
    let exact = LossConfig {
        n_fft: Some(1024),
        ..LossConfig::default()
    };
    let aligned = tone(51.0 * FS / 1024.0, 1024);
    let b = bandwidth_loss(&aligned, &exact).unwrap().value;
    assert!(b <= 1e-9, "bin-aligned in-band bandwidth loss {b}");
    let s = sparsity_loss(&aligned, &exact).unwrap().value;
    assert!(s <= 1e-9, "bin-aligned in-band sparsity loss {s}");

    // Whole cycles per segment: all three segment spectra coincide.
    let stationary = tone(15.0 * FS / 341.0, 1024);
    let p = periodicity_loss(&stationary, &LossConfig::default()).unwrap().value;
    assert!(p <= 1e-6, "stationary periodicity loss {p}");

    // Self-correlation anchors.
    let y = tone(10.0 * FS / 300.0, 300); // 1 Hz on the length-300 grid
    let m = mcc_loss(&y, &y, &band()).unwrap().value;
    assert!((m + 1.0).abs() <= 1e-6, "mcc self-anchor {m}");
    let r = pearson_loss(&y, &y).unwrap().value;
    assert!(r.abs() <= 1e-12, "pearson self-anchor {r}");

    println!("criterion 3 (exact-case anchors): PASS");
}

// ── Criterion 4: DFT/PSD correctness ────────────────────────────────────────

#[test]
fn criterion_04_psd_satisfies_parseval_and_the_direct_dft() {
    let start = Instant::now();
    // Signals need two samples to be representable, so n runs from 2.
    for n in 2usize..=128 {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::new(samples.clone(), FS).unwrap();
        let n_fft = n.next_power_of_two();

        // Parseval on the independent full DFT: Σ x² = (1/N) Σ |X_k|².
        let full = oracle_dft(&samples, n_fft);
        let time_energy: f64 = samples.iter().map(|v| v * v).sum();
        let freq_energy: f64 =
            full.iter().map(|&(re, im)| re * re + im * im).sum::<f64>() / n_fft as f64;
        assert!(
            rel_err(time_energy, freq_energy) <= 1e-9,
            "Parseval n={n}: {time_energy} vs {freq_energy}"
        );

        // Library PSD against the direct DFT, on the tight and a padded grid.
        for grid in [n_fft, 4 * n_fft] {
            let got = fft_psd(&w, grid).unwrap();
            let want = oracle_psd(&samples, grid);
            let scale = want.iter().cloned().fold(1.0f64, f64::max);
            for (k, (&g, &o)) in got.powers().iter().zip(&want).enumerate() {
                assert!(
                    (g - o).abs() <= 1e-9 * scale,
                    "PSD n={n} grid={grid} bin {k}: {g} vs oracle {o}"
                );
            }
            assert!(
                (got.bin_width() - FS / grid as f64).abs() <= 1e-15,
                "bin width n={n} grid={grid}"
            );
        }
    }
    assert_within(start.elapsed(), 60, "criterion 4");
    println!("criterion 4 (DFT/PSD correctness): PASS");
}

// ── Criterion 5: MSTmap correctness ─────────────────────────────────────────

#[test]
fn criterion_05_mstmap_combinations_windows_and_means_are_exact() {
    // Six meta-ROIs expand to exactly 63 combination rows.
    assert_eq!(enumerate_combinations(6).unwrap().len(), 63);
    let spec = SynthSpec::default();
    let stats = gen_roi_stats(&spec, 6).unwrap();
    let map = build_mstmap(&stats, spec.fs).unwrap();
    assert_eq!(map.combos(), 63, "six meta-ROIs should yield 63 map rows");
    assert_eq!(map.meta_rois(), 6);

    // Combination means against a per-pixel brute force: build explicit
    // pixel sets, pool raw pixels for every non-empty subset, and compare
    // with the statistics-based computation.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pixel_sets: Vec<Vec<[f64; 3]>> = (0..6)
        .map(|r| {
            (0..50 + 13 * r)
                .map(|_| {
                    [
                        rng.gen_range(0.0..255.0),
                        rng.gen_range(0.0..255.0),
                        rng.gen_range(0.0..255.0),
                    ]
                })
                .collect()
        })
        .collect();
    let sums: Vec<[f64; 3]> = pixel_sets
        .iter()
        .map(|px| {
            let mut s = [0.0; 3];
            for p in px {
                for c in 0..3 {
                    s[c] += p[c];
                }
            }
            s
        })
        .collect();
    let counts: Vec<u64> = pixel_sets.iter().map(|px| px.len() as u64).collect();
    let stats = RoiFrameStats::new(sums, counts).unwrap();

    for mask in 1usize..64 {
        let subset: Vec<usize> = (0..6).filter(|r| mask >> r & 1 == 1).collect();
        let got = combo_channel_mean(&stats, &subset).unwrap();
        let mut want = [0.0f64; 3];
        let mut n_px = 0usize;
        for &r in &subset {
            for p in &pixel_sets[r] {
                for c in 0..3 {
                    want[c] += p[c];
                }
            }
            n_px += pixel_sets[r].len();
        }
        for c in 0..3 {
            want[c] /= n_px as f64;
            assert!(
                (got[c] - want[c]).abs() <= 1e-9,
                "subset {subset:?} channel {c}: {} vs per-pixel {}",
                got[c],
                want[c]
            );
        }
    }

    // 1000 frames under a 300/15 window: floor((1000-300)/15) + 1 = 47.
    let map = random_map(&mut rng, 1000, 3);
    let windows = sliding_windows(&map, &WindowSpec::new(300, 15).unwrap()).unwrap();
    assert_eq!(windows.len(), 47, "window count for T=1000, 300/15");

    println!("criterion 5 (MSTmap correctness): PASS");
}

// ── CLI helpers (criteria 6, 10, 11) ────────────────────────────────────────

fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_pulseforge"))
}

fn run_cli(dir: &Path, args: &[&str]) -> std::process::Output {
    bin()
        .current_dir(dir)
        .env_remove("PULSEFORGE_SEED")
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run_cli(dir, args);
    assert!(
        out.status.success(),
        "`{}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

fn rmse_from_stdout(text: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix("rmse="))
        .expect("evaluate should print rmse=")
        .parse()
        .expect("rmse should parse")
}

fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("dir should list") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("under root").to_path_buf();
                map.insert(rel, std::fs::read(&path).expect("file should read"));
            }
        }
    }
    map
}

// ── Criterion 6: end-to-end baseline recovery ───────────────────────────────

#[test]
fn criterion_06_noisy_baseline_round_trip_stays_under_three_bpm() {
    let start = Instant::now();
    let tmp = tempfile::TempDir::new().expect("tempdir");
    run_ok(
        tmp.path(),
        &[
            "synth", "--out", "data", "--n", "32", "--snr-db", "10", "--seed", "42",
        ],
    );
    run_ok(
        tmp.path(),
        &["predict", "--manifest", "data/manifest.csv", "--out", "pred"],
    );
    let out = run_ok(
        tmp.path(),
        &[
            "evaluate", "--predictions", "pred/summary.csv", "--manifest",
            "data/manifest.csv", "--out", "report.csv",
        ],
    );
    let rmse = rmse_from_stdout(&out);
    assert!(
        rmse <= 3.0,
        "32-sample baseline at 10 dB should score RMSE <= 3 bpm, got {rmse}"
    );
    assert_within(start.elapsed(), 60, "criterion 6");
    println!("criterion 6 (end-to-end baseline recovery): PASS, rmse={rmse:.3}");
}

// ── Shared self-supervised lab (criteria 7 and 9) ───────────────────────────

struct SelfsupLab {
    config: StFormerConfig,
    init_params: StFormerParams,
    trained_params: StFormerParams,
    steps: usize,
    first_total: f64,
    last_total: f64,
    /// Held-out evaluation set: map, clean ground-truth pulse, true HR.
    heldout: Vec<(MstMap, Waveform, f64)>,
    /// Labeled fine-tuning set.
    labeled: Vec<(MstMap, Waveform)>,
}

static LAB: OnceLock<SelfsupLab> = OnceLock::new();

fn lab_sample(rng: &mut ChaCha8Rng) -> (MstMap, Waveform, f64) {
    let hr = rng.gen_range(48.0..150.0);
    // The drift smears each spectral peak across neighbouring bins, so the
    // argmax readout has genuine headroom between "pretrained" and
    // "fine-tuned" instead of a binary hit-or-miss per sample.
    let spec = SynthSpec {
        hr_bpm: hr,
        fs: FS,
        duration_s: 5.0,
        snr_db: 20.0,
        harmonic_ratio: 0.3,
        roi_gains: vec![1.0],
        seed: rng.gen(),
        hr_drift_bpm_per_min: 60.0,
    };
    let map = build_mstmap(&gen_roi_stats(&spec, 4).unwrap(), FS).unwrap();
    let clean = SynthSpec {
        snr_db: f64::INFINITY,
        ..spec
    };
    let pulse = gen_pulse(&clean).unwrap();
    // Reference HR the way PPG benchmarks derive it: the spectral peak of
    // the clean reference pulse over the same window and grid the readout
    // uses, rather than the nominal generator setting.
    let spec = fft_psd(&pulse.waveform, oracle_default_n_fft(pulse.waveform.len())).unwrap();
    let ref_hr = hr_from_psd(&spec, &band()).unwrap();
    (map, pulse.waveform, ref_hr)
}

fn totals(trace: &[TraceRow]) -> Vec<f64> {
    trace
        .iter()
        .filter(|r| r.loss_name == "total")
        .map(|r| r.value)
        .collect()
}

fn selfsup_lab() -> &'static SelfsupLab {
    LAB.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        // 64 training windows of 150 frames over 15 combination rows.
        let windows: Vec<MstMap> = (0..64).map(|_| lab_sample(&mut rng).0).collect();
        let heldout: Vec<(MstMap, Waveform, f64)> =
            (0..16).map(|_| lab_sample(&mut rng)).collect();
        let labeled: Vec<(MstMap, Waveform)> = (0..32)
            .map(|_| {
                let (m, gt, _) = lab_sample(&mut rng);
                (m, gt)
            })
            .collect();

        let config = StFormerConfig {
            feature_dim: 16,
            loops: 2,
            tokens: 15,
            frames: 150,
            channels: 6,
            mlp_hidden: 32,
            ln_bypass: false,
        };
        let init_params = StFormerParams::init(&config, 7).unwrap();
        // Deliberately short schedule: enough to learn a usable readout
        // while leaving headroom that fine-tuning can visibly close.
        let train_cfg = TrainConfig {
            lr: 1e-4,
            batch_size: 8,
            epochs: 1,
            seed: 7,
            ..TrainConfig::default()
        };
        let (trained_params, trace) = pretrain_selfsup(
            &windows,
            init_params.clone(),
            &config,
            &LossConfig::default(),
            &train_cfg,
        )
        .unwrap();
        let totals = totals(&trace);
        SelfsupLab {
            config,
            init_params,
            trained_params,
            steps: totals.len(),
            first_total: totals[0],
            last_total: *totals.last().unwrap(),
            heldout,
            labeled,
        }
    })
}

/// HR RMSE of a parameter set over (map, gt, hr) samples via the solution-1
/// prediction path.
fn heldout_rmse(params: &StFormerParams, lab: &SelfsupLab) -> f64 {
    let ckpt = ModelCheckpoint::StFormer {
        config: lab.config.clone(),
        params: params.clone(),
    };
    let cfg = PredictConfig {
        window_len: 150,
        window_step: 150,
        clip_len: 150,
        band: band(),
        reduce: Reduce::Mean,
    };
    let mut se = 0.0;
    for (i, (map, _, hr)) in lab.heldout.iter().enumerate() {
        let p: HrPrediction = predict_hr(
            &format!("sample_{i}"),
            &PredictInput::Map(map),
            Some(&ckpt),
            PredictMode::Solution1,
            &cfg,
        )
        .unwrap();
        se += (p.video_hr - hr) * (p.video_hr - hr);
    }
    (se / lab.heldout.len() as f64).sqrt()
}

/// Mean negative-Pearson loss of raw forward outputs against clean pulses.
fn heldout_pearson(params: &StFormerParams, lab: &SelfsupLab) -> f64 {
    let mut acc = 0.0;
    for (map, gt, _) in &lab.heldout {
        let y = st_former_forward(map, params, &lab.config).unwrap();
        acc += pearson_loss(&y, gt).unwrap().value;
    }
    acc / lab.heldout.len() as f64
}

// ── Criterion 7: self-supervised learning signal ────────────────────────────

#[test]
fn criterion_07_selfsup_pretraining_learns_a_usable_readout() {
    let start = Instant::now();
    let lab = selfsup_lab();

    assert!(
        lab.steps <= 300,
        "training used {} steps, over the 300-step budget",
        lab.steps
    );
    let drop = (lab.first_total - lab.last_total) / lab.first_total;
    assert!(
        drop >= 0.30,
        "total loss fell {:.1}% ({} -> {}), need >= 30%",
        drop * 100.0,
        lab.first_total,
        lab.last_total
    );

    let trained = heldout_rmse(&lab.trained_params, lab);
    let control = heldout_rmse(&lab.init_params, lab);
    assert!(
        trained <= 10.0,
        "held-out RMSE after pretraining should be <= 10 bpm, got {trained}"
    );
    assert!(
        trained < control,
        "pretraining should beat the untrained control, got {trained} vs {control}"
    );

    assert_within(start.elapsed(), 600, "criterion 7");
    println!(
        "criterion 7 (self-supervised learning signal): PASS, drop={:.0}%, rmse {trained:.2} vs control {control:.2}",
        drop * 100.0
    );
}

// ── Criterion 8: contrastive separation ─────────────────────────────────────

#[test]
fn criterion_08_contrastive_pretraining_separates_heart_rates() {
    let start = Instant::now();
    let clip = |hr: f64, seed: u64| -> VideoCube {
        let spec = SynthSpec {
            hr_bpm: hr,
            fs: FS,
            duration_s: 10.0,
            snr_db: 20.0,
            harmonic_ratio: 0.3,
            roi_gains: vec![1.0],
            seed,
            hr_drift_bpm_per_min: 0.0,
        };
        gen_video_cube(&spec, 8, 8).unwrap().0
    };

    let clips = vec![clip(60.0, 31), clip(120.0, 32)];
    let config = StEncoderConfig {
        hidden_channels: 4,
        spatial_out: 2,
    };
    let init = StEncoderParams::init(&config, 5).unwrap();
    let train_cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 2,
        epochs: 150, // one pair-step per epoch over two clips
        seed: 5,
        ..TrainConfig::default()
    };
    let (params, trace) =
        pretrain_contrastive(&clips, init, &config, &band(), &train_cfg).unwrap();
    let totals = totals(&trace);
    assert!(
        totals.len() <= 200,
        "contrastive training used {} steps, over the 200-step budget",
        totals.len()
    );
    assert!(
        *totals.last().unwrap() < totals[0],
        "contrastive loss should fall: first {} last {}",
        totals[0],
        totals.last().unwrap()
    );

    // Held-out clips at the same two rates: snippets of the same clip should
    // have closer normalized in-band PSDs than snippets across clips.
    let held = [clip(60.0, 41), clip(120.0, 42)];
    let mut per_clip: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, c) in held.iter().enumerate() {
        let block = st_encoder_forward(c, &params, &config).unwrap();
        let snips = sample_st_rppg(&block, 150, 2, 100 + i as u64).unwrap();
        let n_fft = oracle_default_n_fft(150);
        let mut normed = Vec::new();
        for s in &snips {
            let spec = fft_psd(&s.waveform, n_fft).unwrap();
            let (lo, hi) = spec.band_bin_range(&band()).unwrap();
            let total: f64 = spec.powers()[lo..=hi].iter().sum();
            normed.push(spec.powers()[lo..=hi].iter().map(|p| p / total).collect::<Vec<f64>>());
        }
        per_clip.push(normed);
    }
    let mse_between = |xs: &[Vec<f64>], ys: &[Vec<f64>], skip_same: bool| -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                if skip_same && i == j {
                    continue;
                }
                acc += dist2(x, y);
                n += 1;
            }
        }
        acc / n as f64
    };
    let within = (mse_between(&per_clip[0], &per_clip[0], true)
        + mse_between(&per_clip[1], &per_clip[1], true))
        / 2.0;
    let cross = mse_between(&per_clip[0], &per_clip[1], false);
    assert!(
        within < cross,
        "held-out within-clip PSD MSE {within} should undercut cross-clip {cross}"
    );

    assert_within(start.elapsed(), 600, "criterion 8");
    println!(
        "criterion 8 (contrastive separation): PASS, within={within:.4} cross={cross:.4}"
    );
}

// ── Criterion 9: fine-tuning improvement ────────────────────────────────────

#[test]
fn criterion_09_finetuning_improves_on_the_pretrained_checkpoint() {
    let start = Instant::now();
    let lab = selfsup_lab();

    let train_cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        epochs: 15,
        seed: 9,
        ..TrainConfig::default()
    };
    let (tuned, _) = finetune_stformer(
        &lab.labeled,
        lab.trained_params.clone(),
        &lab.config,
        &LossConfig::default(),
        &train_cfg,
    )
    .unwrap();

    let pear_before = heldout_pearson(&lab.trained_params, lab);
    let pear_after = heldout_pearson(&tuned, lab);
    assert!(
        pear_after < pear_before,
        "fine-tuning should reduce held-out pearson loss: {pear_after} vs {pear_before}"
    );

    let rmse_before = heldout_rmse(&lab.trained_params, lab);
    let rmse_after = heldout_rmse(&tuned, lab);
    assert!(
        rmse_after < rmse_before,
        "fine-tuning should reduce held-out RMSE: {rmse_after} vs {rmse_before}"
    );

    assert_within(start.elapsed(), 600, "criterion 9");
    println!(
        "criterion 9 (fine-tuning improvement): PASS, pearson {pear_before:.4}->{pear_after:.4}, rmse {rmse_before:.2}->{rmse_after:.2}"
    );
}

// ── Criterion 10: ensemble contract ─────────────────────────────────────────

#[test]
fn criterion_10_ensemble_and_evaluate_match_hand_computations() {
    let tmp = tempfile::TempDir::new().expect("tempdir");
    std::fs::write(
        tmp.path().join("r1.csv"),
        "sample_id,video_hr\na,70\nb,100.5\n",
    )
    .expect("r1");
    std::fs::write(
        tmp.path().join("r2.csv"),
        "sample_id,video_hr\na,74\nb,90.25\n",
    )
    .expect("r2");
    run_ok(
        tmp.path(),
        &["ensemble", "--out", "ens.csv", "r1.csv", "r2.csv"],
    );
    let merged = std::fs::read_to_string(tmp.path().join("ens.csv")).expect("ensemble output");
    assert_eq!(
        merged, "sample_id,video_hr\na,72\nb,95.375\n",
        "ensemble should equal the hand-computed per-sample means exactly"
    );

    // Two-row fixture with errors 2 and -5: RMSE = sqrt((4 + 25) / 2).
    std::fs::write(
        tmp.path().join("manifest.csv"),
        "sample_id,path,hr_bpm,fs,duration_s,seed\na,a.mstm,70,30,10,1\nb,b.mstm,85,30,10,2\n",
    )
    .expect("manifest");
    std::fs::write(tmp.path().join("summary.csv"), "sample_id,video_hr\na,72\nb,80\n")
        .expect("summary");
    let out = run_ok(
        tmp.path(),
        &[
            "evaluate", "--predictions", "summary.csv", "--manifest", "manifest.csv",
            "--out", "report.csv",
        ],
    );
    let rmse = rmse_from_stdout(&out);
    assert!(
        (rmse - 14.5f64.sqrt()).abs() <= 1e-12,
        "evaluate should reproduce sqrt(14.5), got {rmse}"
    );

    println!("criterion 10 (ensemble contract): PASS");
}

// ── Criterion 11: CLI determinism ───────────────────────────────────────────

#[test]
fn criterion_11_every_command_is_byte_deterministic_under_reruns() {
    let tmp = tempfile::TempDir::new().expect("tempdir");
    let dir = tmp.path();

    // Each entry: output directory to snapshot, and the full command.
    let synth: Vec<&str> = vec![
        "synth", "--out", "data", "--n", "4", "--duration", "6", "--rois", "2",
        "--cubes", "--height", "6", "--width", "6", "--snr-db", "15", "--seed", "9",
    ];
    let pre1: Vec<&str> = vec![
        "pretrain", "--manifest", "data/manifest.csv", "--out", "model1",
        "--solution", "1", "--window", "90", "--step", "45", "--feature-dim", "6",
        "--loops", "1", "--mlp-hidden", "9", "--lr", "0.001", "--seed", "1",
    ];
    let pre2: Vec<&str> = vec![
        "pretrain", "--manifest", "data/manifest.csv", "--out", "model2",
        "--solution", "2", "--hidden-channels", "3", "--delta-t", "60",
        "--batch", "2", "--seed", "2",
    ];
    let fine: Vec<&str> = vec![
        "finetune", "--manifest", "data/manifest.csv", "--out", "ft1",
        "--init", "model1/model.rppg", "--solution", "1", "--window", "90",
        "--step", "45", "--seed", "3",
    ];
    let predb: Vec<&str> = vec![
        "predict", "--manifest", "data/manifest.csv", "--out", "predb",
        "--window", "90", "--step", "45",
    ];
    let pred1: Vec<&str> = vec![
        "predict", "--manifest", "data/manifest.csv", "--out", "pred1",
        "--mode", "solution1", "--checkpoint", "ft1/model.rppg", "--step", "45",
    ];
    let pred2: Vec<&str> = vec![
        "predict", "--manifest", "data/manifest.csv", "--out", "pred2",
        "--mode", "solution2", "--checkpoint", "model2/model.rppg", "--clip-len", "90",
    ];
    let evald: Vec<&str> = vec![
        "evaluate", "--predictions", "predb/summary.csv", "--manifest",
        "data/manifest.csv", "--out", "evald/report.csv",
    ];
    let ens: Vec<&str> = vec![
        "ensemble", "--out", "ens/merged.csv", "predb/summary.csv", "pred1/summary.csv",
    ];

    let plan: Vec<(&str, &[&str])> = vec![
        ("data", &synth),
        ("model1", &pre1),
        ("model2", &pre2),
        ("ft1", &fine),
        ("predb", &predb),
        ("pred1", &pred1),
        ("pred2", &pred2),
        ("evald", &evald),
        ("ens", &ens),
    ];

    for (out_dir, args) in plan {
        run_ok(dir, args);
        let first = tree_bytes(&dir.join(out_dir));
        run_ok(dir, args);
        let second = tree_bytes(&dir.join(out_dir));
        assert_eq!(
            first.keys().collect::<Vec<_>>(),
            second.keys().collect::<Vec<_>>(),
            "`{}` rerun should reproduce the same file set",
            args.join(" ")
        );
        for (path, bytes) in &first {
            assert_eq!(
                Some(bytes),
                second.get(path),
                "`{}` rerun should reproduce {} byte for byte",
                args.join(" "),
                path.display()
            );
        }
    }

    println!("criterion 11 (CLI determinism): PASS");
}

//! Supervised objectives against ground-truth pulse waveforms: negative
//! Pearson correlation, negative max cross-correlation (MCC), and the
//! combined fine-tuning loss.
//!
//! MCC works on the circular cross-correlation computed through a length-T
//! DFT with a frequency-domain bandpass, so it tolerates temporal offsets
//! between prediction and ground truth. Gradients treat the max-lag index
//! (and Pearson's ground-truth side) as constants.

use super::{supervised_contrastive_loss, LossConfig, LossValue};
use crate::signal::fft::dft;
use crate::signal::{fft_psd, fft_psd_vjp, BandLimits, Waveform, VAR_GUARD};
use crate::{CoreError, Result};
use num_complex::Complex64;

/// Sign convention for the Pearson objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PearsonMode {
    /// `1 − r`: non-negative, 0 at perfect correlation.
    OneMinusR,
    /// `−r`: kept for parity experiments against implementations that negate.
    NegatedR,
}

// ── Pearson ─────────────────────────────────────────────────────────────────

fn mean_and_std(x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= VAR_GUARD {
        return Err(CoreError::degenerate(
            "signal variance is zero; correlation undefined",
        ));
    }
    Ok((mean, var.sqrt()))
}

/// Negative Pearson correlation with the `1 − r` convention and gradient
/// with respect to the prediction.
pub fn pearson_loss(y_pred: &Waveform, y_gt: &Waveform) -> Result<LossValue> {
    pearson_loss_with_mode(y_pred, y_gt, PearsonMode::OneMinusR)
}

pub fn pearson_loss_with_mode(
    y_pred: &Waveform,
    y_gt: &Waveform,
    mode: PearsonMode,
) -> Result<LossValue> {
    if y_pred.len() != y_gt.len() {
        return Err(CoreError::shape(format!(
            "prediction has {} samples, ground truth {}",
            y_pred.len(),
            y_gt.len()
        )));
    }
    let p = y_pred.samples();
    let g = y_gt.samples();
    let n = p.len() as f64;
    let (mu_p, sd_p) = mean_and_std(p)?;
    let (mu_g, sd_g) = mean_and_std(g)?;

    let cov = p
        .iter()
        .zip(g)
        .map(|(a, b)| (a - mu_p) * (b - mu_g))
        .sum::<f64>()
        / n;
    let r = cov / (sd_p * sd_g);

    // dr/dp_k = (g_k − μ_g)/(n σ_p σ_g) − r (p_k − μ_p)/(n σ_p²)
    let grad: Vec<f64> = p
        .iter()
        .zip(g)
        .map(|(&pk, &gk)| {
            let dr = (gk - mu_g) / (n * sd_p * sd_g) - r * (pk - mu_p) / (n * sd_p * sd_p);
            -dr
        })
        .collect();

    let value = match mode {
        PearsonMode::OneMinusR => 1.0 - r,
        PearsonMode::NegatedR => -r,
    };
    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

// ── MCC ─────────────────────────────────────────────────────────────────────

/// 0/1 mask over the length-`t` DFT bins keeping |f| inside the band, with
/// the same edge tolerance as [`crate::signal::Spectrum::band_bin_range`].
fn band_mask(t: usize, fs: f64, band: &BandLimits) -> Vec<f64> {
    let bin_width = fs / t as f64;
    let lo = ((band.low / bin_width) - 1e-9).ceil().max(0.0) as usize;
    let hi_f = ((band.high / bin_width) + 1e-9).floor();
    (0..t)
        .map(|k| {
            let m = k.min(t - k); // |f_k| in units of bin width
            if hi_f >= 0.0 && m >= lo && (m as f64) <= hi_f {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Negative maximum of the normalized, bandpassed circular cross-correlation:
/// value = −max_τ c_τ / (T σ_pred σ_gt). The maximizing lag is a constant for
/// the gradient; ties resolve to the lowest lag.
pub fn mcc_loss(y_pred: &Waveform, y_gt: &Waveform, band: &BandLimits) -> Result<LossValue> {
    if y_pred.len() != y_gt.len() {
        return Err(CoreError::shape(format!(
            "prediction has {} samples, ground truth {}",
            y_pred.len(),
            y_gt.len()
        )));
    }
    if (y_pred.fs() - y_gt.fs()).abs() > 1e-9 {
        return Err(CoreError::invalid(
            "prediction and ground truth must share a sampling rate",
        ));
    }
    let fs = y_pred.fs();
    band.validate_for_fs(fs)?;
    let t = y_pred.len();
    let p = y_pred.samples();
    let g = y_gt.samples();
    let (mu_p, sd_p) = mean_and_std(p)?;
    let (_, sd_g) = mean_and_std(g)?;

    let to_c = |x: &[f64]| -> Vec<Complex64> {
        x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    };
    let pf = dft(&to_c(p), false);
    let gf = dft(&to_c(g), false);
    let mask = band_mask(t, fs, band);

    // Bandpassed cross-spectrum → circular cross-correlation by lag.
    let cross: Vec<Complex64> = (0..t).map(|k| pf[k] * gf[k].conj() * mask[k]).collect();
    let corr = dft(&cross, true);

    let norm = t as f64 * sd_p * sd_g;
    let mut best_lag = 0usize;
    let mut best = corr[0].re;
    for (lag, c) in corr.iter().enumerate().skip(1) {
        if c.re > best {
            best = c.re;
            best_lag = lag;
        }
    }
    let rho = best / norm;
    let value = -rho;

    // Bandpassed ground truth back in the time domain:
    // c_τ = Σ_n p_n · g̃_{(n−τ) mod T}, so dc/dp_n = g̃_{(n−τ*) mod T}.
    let gt_banded: Vec<f64> = {
        let masked: Vec<Complex64> = (0..t).map(|k| gf[k] * mask[k]).collect();
        dft(&masked, true).into_iter().map(|c| c.re).collect()
    };
    let grad: Vec<f64> = (0..t)
        .map(|n| {
            let shifted = gt_banded[(n + t - best_lag) % t];
            let drho = shifted / norm - rho * (p[n] - mu_p) / (t as f64 * sd_p * sd_p);
            -drho
        })
        .collect();

    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

// ── Fine-tuning ─────────────────────────────────────────────────────────────

/// The two videos' predicted rPPG signals and matching ground truths, N per
/// video, all equal length and sampling rate.
#[derive(Debug, Clone)]
pub struct FinetuneInputs<'a> {
    pub pred: &'a [Waveform],
    pub pred_other: &'a [Waveform],
    pub gt: &'a [Waveform],
    pub gt_other: &'a [Waveform],
}

/// Component values of the fine-tuning objective and one gradient per
/// predicted waveform of each video.
#[derive(Debug, Clone)]
pub struct FinetuneLoss {
    pub pos: f64,
    pub neg: f64,
    pub pear: f64,
    pub mcc: f64,
    pub total: f64,
    pub grads: Vec<Vec<f64>>,
    pub grads_other: Vec<Vec<f64>>,
}

/// Combined supervised objective:
/// total = L_pos^gt + L_neg^gt + α·L_pear + β·L_mcc,
/// where the contrastive terms run on PSDs of the given waveforms and the
/// Pearson/MCC terms average over the 2N (prediction, ground truth) pairs of
/// both videos.
pub fn finetune_loss(inputs: &FinetuneInputs, cfg: &LossConfig) -> Result<FinetuneLoss> {
    cfg.validate()?;
    let n = inputs.pred.len();
    if n < 2
        || inputs.pred_other.len() != n
        || inputs.gt.len() != n
        || inputs.gt_other.len() != n
    {
        return Err(CoreError::invalid(format!(
            "finetune loss needs four equal lists of >= 2 signals, got {}/{}/{}/{}",
            inputs.pred.len(),
            inputs.pred_other.len(),
            inputs.gt.len(),
            inputs.gt_other.len()
        )));
    }
    let len = inputs.pred[0].len();
    let fs = inputs.pred[0].fs();
    let all = inputs
        .pred
        .iter()
        .chain(inputs.pred_other.iter())
        .chain(inputs.gt.iter())
        .chain(inputs.gt_other.iter());
    for w in all {
        if w.len() != len || (w.fs() - fs).abs() > 1e-9 {
            return Err(CoreError::shape(
                "finetune loss needs equal-length, equal-rate signals".to_string(),
            ));
        }
    }

    let n_fft = cfg.psd_n_fft(len);
    let psd_of = |ws: &[Waveform]| -> Result<Vec<_>> {
        ws.iter().map(|w| fft_psd(w, n_fft)).collect()
    };
    let (pf, pfo) = (psd_of(inputs.pred)?, psd_of(inputs.pred_other)?);
    let (gf, gfo) = (psd_of(inputs.gt)?, psd_of(inputs.gt_other)?);
    let ctr = supervised_contrastive_loss(&pf, &pfo, &gf, &gfo, &cfg.band)?;

    let pairs = 2.0 * n as f64;
    let mut pear = 0.0;
    let mut mcc = 0.0;
    let mut grads = Vec::with_capacity(n);
    let mut grads_other = Vec::with_capacity(n);
    for (preds, gts, ctr_grads, out) in [
        (inputs.pred, inputs.gt, &ctr.grads_a, &mut grads),
        (
            inputs.pred_other,
            inputs.gt_other,
            &ctr.grads_b,
            &mut grads_other,
        ),
    ] {
        for (i, (p, gt)) in preds.iter().zip(gts).enumerate() {
            let pe = pearson_loss(p, gt)?;
            let mc = mcc_loss(p, gt, &cfg.band)?;
            pear += pe.value / pairs;
            mcc += mc.value / pairs;

            let mut g = fft_psd_vjp(p, n_fft, &ctr_grads[i])?;
            for (gk, (ge, gm)) in g.iter_mut().zip(pe.grads[0].iter().zip(&mc.grads[0])) {
                *gk += (cfg.alpha * ge + cfg.beta * gm) / pairs;
            }
            out.push(g);
        }
    }

    Ok(FinetuneLoss {
        pos: ctr.pos,
        neg: ctr.neg,
        pear,
        mcc,
        total: ctr.total + cfg.alpha * pear + cfg.beta * mcc,
        grads,
        grads_other,
    })
}

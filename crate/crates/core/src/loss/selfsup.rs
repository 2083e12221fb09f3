//! Self-supervised spectral objectives over predicted waveforms: bandwidth,
//! sparsity, batch variance, periodicity, and their combination.
//!
//! Each loss computes the one-sided PSD on the grid chosen by
//! [`LossConfig::psd_n_fft`] and differentiates through it analytically.

use super::{band_range, LossConfig, LossValue};
use crate::signal::{fft_psd, fft_psd_vjp, Waveform, POWER_GUARD};
use crate::{CoreError, Result};

/// Out-of-band power fraction: 0 for a fully in-band signal, approaching 1
/// when all power sits outside the band. Gradient w.r.t. the samples.
pub fn bandwidth_loss(y: &Waveform, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let n_fft = cfg.psd_n_fft(y.len());
    let spec = fft_psd(y, n_fft)?;
    let (lo, hi) = band_range(&spec, &cfg.band)?;

    let total: f64 = spec.powers().iter().sum();
    if total < POWER_GUARD {
        return Err(CoreError::degenerate("total spectral power is zero"));
    }
    let in_band: f64 = spec.powers()[lo..=hi].iter().sum();
    let value = (total - in_band) / total;

    // d value / dP_k = (1_out - value) / total
    let upstream: Vec<f64> = (0..spec.n_bins())
        .map(|k| {
            let indicator = if k >= lo && k <= hi { 0.0 } else { 1.0 };
            (indicator - value) / total
        })
        .collect();
    let grad = fft_psd_vjp(y, n_fft, &upstream)?;
    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

/// In-band power sitting `delta_f_bins` or more bins away from the in-band
/// peak, as a fraction of all in-band power. The peak index is treated as a
/// constant (no gradient through the argmax).
pub fn sparsity_loss(y: &Waveform, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let n_fft = cfg.psd_n_fft(y.len());
    let spec = fft_psd(y, n_fft)?;
    let (lo, hi) = band_range(&spec, &cfg.band)?;

    let in_band: f64 = spec.powers()[lo..=hi].iter().sum();
    if in_band < POWER_GUARD {
        return Err(CoreError::degenerate("in-band spectral power is zero"));
    }
    let mut peak = lo;
    let mut peak_p = spec.powers()[lo];
    for k in lo + 1..=hi {
        if spec.powers()[k] > peak_p {
            peak = k;
            peak_p = spec.powers()[k];
        }
    }
    let far = |k: usize| k.abs_diff(peak) >= cfg.delta_f_bins;
    let far_power: f64 = (lo..=hi)
        .filter(|&k| far(k))
        .map(|k| spec.powers()[k])
        .sum();
    let value = far_power / in_band;

    let upstream: Vec<f64> = (0..spec.n_bins())
        .map(|k| {
            if k < lo || k > hi {
                0.0
            } else {
                let indicator = if far(k) { 1.0 } else { 0.0 };
                (indicator - value) / in_band
            }
        })
        .collect();
    let grad = fft_psd_vjp(y, n_fft, &upstream)?;
    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

/// Batch-level spread objective. The in-band PSDs of the batch are summed,
/// normalized into a distribution Q over the d in-band bins, and compared to
/// the uniform distribution P through their CDFs:
/// value = (1/d) * sum_i (CDF_i(Q) - CDF_i(P))^2.
/// One gradient per batch member.
pub fn variance_loss(batch: &[Waveform], cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(CoreError::invalid("variance loss needs at least one signal"));
    }
    let len = batch[0].len();
    let fs = batch[0].fs();
    if batch.iter().any(|w| w.len() != len || w.fs() != fs) {
        return Err(CoreError::shape(
            "variance loss needs equal-length, equal-rate signals".to_string(),
        ));
    }
    let n_fft = cfg.psd_n_fft(len);
    let specs: Vec<_> = batch.iter().map(|w| fft_psd(w, n_fft)).collect::<Result<_>>()?;
    let (lo, hi) = band_range(&specs[0], &cfg.band)?;
    let d = hi - lo + 1;

    // Aggregate in-band power per bin across the batch.
    let mut agg = vec![0.0f64; d];
    for spec in &specs {
        for (i, &p) in spec.powers()[lo..=hi].iter().enumerate() {
            agg[i] += p;
        }
    }
    let total: f64 = agg.iter().sum();
    if total < POWER_GUARD {
        return Err(CoreError::degenerate(
            "batch in-band spectral power is zero",
        ));
    }

    // CDF of Q and the squared CDF distance to uniform.
    let mut cdf = vec![0.0f64; d];
    let mut running = 0.0;
    for i in 0..d {
        running += agg[i] / total;
        cdf[i] = running;
    }
    let df = d as f64;
    let mut value = 0.0;
    for (i, &c) in cdf.iter().enumerate() {
        let diff = c - (i + 1) as f64 / df;
        value += diff * diff;
    }
    value /= df;

    // dL/dT_k = (2/d) * sum_i (C_i - U_i) * (1_{k<=i} - C_i) / total,
    // identical for every batch member (T_k is a plain sum over the batch).
    let mut d_agg = vec![0.0f64; d];
    for k in 0..d {
        let mut acc = 0.0;
        for (i, &c) in cdf.iter().enumerate() {
            let diff = c - (i + 1) as f64 / df;
            let indicator = if k <= i { 1.0 } else { 0.0 };
            acc += diff * (indicator - c);
        }
        d_agg[k] = 2.0 * acc / (df * total);
    }

    let n_bins = specs[0].n_bins();
    let mut upstream = vec![0.0f64; n_bins];
    upstream[lo..=hi].copy_from_slice(&d_agg);
    let grads = batch
        .iter()
        .map(|w| fft_psd_vjp(w, n_fft, &upstream))
        .collect::<Result<Vec<_>>>()?;

    Ok(LossValue { value, grads })
}

/// Spectral drift across the signal: split into `n_segments` equal contiguous
/// segments (remainder truncated), normalize each segment's in-band PSD to
/// unit sum, and accumulate squared differences between consecutive segments.
pub fn periodicity_loss(y: &Waveform, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let s = cfg.n_segments;
    if y.len() < s * 8 {
        return Err(CoreError::invalid(format!(
            "periodicity loss needs at least {} samples for {} segments, got {}",
            s * 8,
            s,
            y.len()
        )));
    }
    let seg_len = y.len() / s;
    let n_fft = cfg.psd_n_fft(seg_len);

    let mut segs = Vec::with_capacity(s);
    for j in 0..s {
        let slice = &y.samples()[j * seg_len..(j + 1) * seg_len];
        segs.push(Waveform::new(slice.to_vec(), y.fs())?);
    }
    let specs: Vec<_> = segs.iter().map(|w| fft_psd(w, n_fft)).collect::<Result<_>>()?;
    let (lo, hi) = band_range(&specs[0], &cfg.band)?;

    let mut norm = Vec::with_capacity(s);
    let mut totals = Vec::with_capacity(s);
    for spec in &specs {
        let (f, total) = super::normalized_band_slice(spec, lo, hi)?;
        norm.push(f);
        totals.push(total);
    }

    let d = hi - lo + 1;
    let mut value = 0.0;
    for j in 0..s - 1 {
        for i in 0..d {
            let diff = norm[j][i] - norm[j + 1][i];
            value += diff * diff;
        }
    }

    // Per-segment gradient w.r.t. the normalized slice, then through the
    // unit-sum normalization and the segment PSD back to the samples.
    let mut grad = vec![0.0f64; y.len()];
    let n_bins = specs[0].n_bins();
    for j in 0..s {
        let mut g_norm = vec![0.0f64; d];
        if j > 0 {
            for i in 0..d {
                g_norm[i] += 2.0 * (norm[j][i] - norm[j - 1][i]);
            }
        }
        if j + 1 < s {
            for i in 0..d {
                g_norm[i] += 2.0 * (norm[j][i] - norm[j + 1][i]);
            }
        }
        let g_band = super::unit_sum_vjp(&norm[j], totals[j], &g_norm);
        let mut upstream = vec![0.0f64; n_bins];
        upstream[lo..=hi].copy_from_slice(&g_band);
        let seg_grad = fft_psd_vjp(&segs[j], n_fft, &upstream)?;
        grad[j * seg_len..(j + 1) * seg_len].copy_from_slice(&seg_grad);
    }

    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

/// Combined self-supervised objective with per-component bookkeeping.
#[derive(Debug, Clone)]
pub struct SelfSupLoss {
    pub band: f64,
    pub sparse: f64,
    pub variance: f64,
    pub periodic: f64,
    pub total: f64,
    /// One gradient per batch member.
    pub grads: Vec<Vec<f64>>,
}

/// Batch mean of (bandwidth + sparsity + periodicity) plus the batch-level
/// variance loss, all unit-weighted. The reported `band`/`sparse`/`periodic`
/// components are batch means.
pub fn total_selfsup_loss(batch: &[Waveform], cfg: &LossConfig) -> Result<SelfSupLoss> {
    if batch.is_empty() {
        return Err(CoreError::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let var = variance_loss(batch, cfg)?;

    let mut band_mean = 0.0;
    let mut sparse_mean = 0.0;
    let mut perio_mean = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (i, y) in batch.iter().enumerate() {
        let b = bandwidth_loss(y, cfg)?;
        let s = sparsity_loss(y, cfg)?;
        let p = periodicity_loss(y, cfg)?;
        band_mean += b.value / n;
        sparse_mean += s.value / n;
        perio_mean += p.value / n;
        let mut g: Vec<f64> = b.grads[0]
            .iter()
            .zip(&s.grads[0])
            .zip(&p.grads[0])
            .map(|((gb, gs), gp)| (gb + gs + gp) / n)
            .collect();
        for (gi, gv) in g.iter_mut().zip(&var.grads[i]) {
            *gi += gv;
        }
        grads.push(g);
    }

    Ok(SelfSupLoss {
        band: band_mean,
        sparse: sparse_mean,
        variance: var.value,
        periodic: perio_mean,
        total: band_mean + sparse_mean + perio_mean + var.value,
        grads,
    })
}

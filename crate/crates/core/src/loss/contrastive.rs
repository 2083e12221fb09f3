//! Contrastive objectives over power spectra: the pair loss used for
//! pre-training and its ground-truth-anchored supervised variant.
//!
//! Inputs are raw one-sided PSDs. Each spectrum is restricted to the in-band
//! bins and normalized to unit sum before distances are taken; gradients are
//! reported with respect to the *raw* spectra so callers can chain through
//! [`crate::signal::fft_psd_vjp`] back to waveforms.

use super::{band_range, normalized_band_slice, unit_sum_vjp};
use crate::signal::{BandLimits, Spectrum};
use crate::{CoreError, Result};

/// Positive/negative decomposition of a contrastive objective, with one raw
/// PSD gradient per spectrum of each differentiated list.
#[derive(Debug, Clone)]
pub struct ContrastiveLoss {
    pub pos: f64,
    pub neg: f64,
    pub total: f64,
    pub grads_a: Vec<Vec<f64>>,
    pub grads_b: Vec<Vec<f64>>,
}

// ── Shared machinery ────────────────────────────────────────────────────────

fn ensure_common_grid<'a, I>(mut specs: I) -> Result<()>
where
    I: Iterator<Item = &'a Spectrum>,
{
    let first = specs
        .next()
        .ok_or_else(|| CoreError::invalid("no spectra given"))?;
    for s in specs {
        let width_off = (s.bin_width() - first.bin_width()).abs() > 1e-12 * first.bin_width();
        if s.n_fft() != first.n_fft() || width_off {
            return Err(CoreError::invalid(
                "all spectra must share one bin grid (same n_fft and bin width)",
            ));
        }
    }
    Ok(())
}

/// Unit-sum in-band slices and their pre-normalization totals.
fn normalize_all(specs: &[Spectrum], lo: usize, hi: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut norm = Vec::with_capacity(specs.len());
    let mut totals = Vec::with_capacity(specs.len());
    for s in specs {
        let (f, total) = normalized_band_slice(s, lo, hi)?;
        norm.push(f);
        totals.push(total);
    }
    Ok((norm, totals))
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Chain normalized-space gradients back to raw full-spectrum gradients.
fn raw_grads(
    norm: &[Vec<f64>],
    totals: &[f64],
    g_norm: &[Vec<f64>],
    lo: usize,
    n_bins: usize,
) -> Vec<Vec<f64>> {
    norm.iter()
        .zip(totals)
        .zip(g_norm)
        .map(|((f, &total), g)| {
            let banded = unit_sum_vjp(f, total, g);
            let mut full = vec![0.0; n_bins];
            full[lo..lo + banded.len()].copy_from_slice(&banded);
            full
        })
        .collect()
}

// ── Pre-training loss ───────────────────────────────────────────────────────

/// Pulls the N spectra of each video together and pushes the two videos
/// apart:
/// pos = Σ_{i≠j} (‖a_i−a_j‖² + ‖b_i−b_j‖²) / (2N(N−1)),
/// neg = −Σ_{i,j} ‖a_i−b_j‖² / N², total = pos + neg.
pub fn contrastive_pretrain_loss(
    psds_a: &[Spectrum],
    psds_b: &[Spectrum],
    band: &BandLimits,
) -> Result<ContrastiveLoss> {
    let n = psds_a.len();
    if n < 2 || psds_b.len() != n {
        return Err(CoreError::invalid(format!(
            "contrastive loss needs two equal lists of >= 2 spectra, got {} and {}",
            psds_a.len(),
            psds_b.len()
        )));
    }
    ensure_common_grid(psds_a.iter().chain(psds_b.iter()))?;
    let (lo, hi) = band_range(&psds_a[0], band)?;
    let (na, ta) = normalize_all(psds_a, lo, hi)?;
    let (nb, tb) = normalize_all(psds_b, lo, hi)?;
    let d = hi - lo + 1;
    let nf = n as f64;

    let pos_div = 2.0 * nf * (nf - 1.0);
    let neg_div = nf * nf;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut ga = vec![vec![0.0; d]; n];
    let mut gb = vec![vec![0.0; d]; n];

    for i in 0..n {
        for j in 0..n {
            if j != i {
                pos += (dist2(&na[i], &na[j]) + dist2(&nb[i], &nb[j])) / pos_div;
                for k in 0..d {
                    let da = 2.0 * (na[i][k] - na[j][k]) / pos_div;
                    ga[i][k] += da;
                    ga[j][k] -= da;
                    let db = 2.0 * (nb[i][k] - nb[j][k]) / pos_div;
                    gb[i][k] += db;
                    gb[j][k] -= db;
                }
            }
            neg -= dist2(&na[i], &nb[j]) / neg_div;
            for k in 0..d {
                let dd = 2.0 * (na[i][k] - nb[j][k]) / neg_div;
                ga[i][k] -= dd;
                gb[j][k] += dd;
            }
        }
    }

    let n_bins = psds_a[0].n_bins();
    Ok(ContrastiveLoss {
        pos,
        neg,
        total: pos + neg,
        grads_a: raw_grads(&na, &ta, &ga, lo, n_bins),
        grads_b: raw_grads(&nb, &tb, &gb, lo, n_bins),
    })
}

// ── Supervised (ground-truth-anchored) loss ─────────────────────────────────

/// Ground-truth-anchored contrastive objective:
/// pos = Σ_{i≠j} (‖f_i−g_j‖² + ‖f'_i−g'_j‖²) / (2N(N−1)),
/// neg = −Σ_{i,j} (‖f_i−g'_j‖² + ‖f'_i−g_j‖²) / N².
/// `pred`/`pred_other` are the two videos' predicted PSD lists (f, f'),
/// `gt`/`gt_other` the matching ground-truth PSD lists (g, g'). Gradients are
/// taken for the predictions only; the ground truths are constants.
pub fn supervised_contrastive_loss(
    pred: &[Spectrum],
    pred_other: &[Spectrum],
    gt: &[Spectrum],
    gt_other: &[Spectrum],
    band: &BandLimits,
) -> Result<ContrastiveLoss> {
    let n = pred.len();
    if n < 2 || pred_other.len() != n || gt.len() != n || gt_other.len() != n {
        return Err(CoreError::invalid(format!(
            "supervised contrastive loss needs four equal lists of >= 2 spectra, got {}/{}/{}/{}",
            pred.len(),
            pred_other.len(),
            gt.len(),
            gt_other.len()
        )));
    }
    ensure_common_grid(
        pred.iter()
            .chain(pred_other.iter())
            .chain(gt.iter())
            .chain(gt_other.iter()),
    )?;
    let (lo, hi) = band_range(&pred[0], band)?;
    let (nf_a, tf_a) = normalize_all(pred, lo, hi)?;
    let (nf_b, tf_b) = normalize_all(pred_other, lo, hi)?;
    let (ng_a, _) = normalize_all(gt, lo, hi)?;
    let (ng_b, _) = normalize_all(gt_other, lo, hi)?;
    let d = hi - lo + 1;
    let nn = n as f64;

    let pos_div = 2.0 * nn * (nn - 1.0);
    let neg_div = nn * nn;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut ga = vec![vec![0.0; d]; n];
    let mut gb = vec![vec![0.0; d]; n];

    for i in 0..n {
        for j in 0..n {
            if j != i {
                pos += (dist2(&nf_a[i], &ng_a[j]) + dist2(&nf_b[i], &ng_b[j])) / pos_div;
                for k in 0..d {
                    ga[i][k] += 2.0 * (nf_a[i][k] - ng_a[j][k]) / pos_div;
                    gb[i][k] += 2.0 * (nf_b[i][k] - ng_b[j][k]) / pos_div;
                }
            }
            neg -= (dist2(&nf_a[i], &ng_b[j]) + dist2(&nf_b[i], &ng_a[j])) / neg_div;
            for k in 0..d {
                ga[i][k] -= 2.0 * (nf_a[i][k] - ng_b[j][k]) / neg_div;
                gb[i][k] -= 2.0 * (nf_b[i][k] - ng_a[j][k]) / neg_div;
            }
        }
    }

    let n_bins = pred[0].n_bins();
    Ok(ContrastiveLoss {
        pos,
        neg,
        total: pos + neg,
        grads_a: raw_grads(&nf_a, &tf_a, &ga, lo, n_bins),
        grads_b: raw_grads(&nf_b, &tf_b, &gb, lo, n_bins),
    })
}

//! Scoring and run aggregation: RMSE against ground truth, per-sample
//! ensembling across runs, the deterministic train/val split, and the
//! evaluation report CSV.

use crate::pipeline::predict::HrPrediction;
use crate::{CoreError, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sample_id: String,
    pub hr_pred: f64,
    pub hr_gt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub rmse: f64,
}

/// Root mean squared error over aligned prediction/truth pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(CoreError::invalid("rmse needs at least one pair"));
    }
    let mse = pairs
        .iter()
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(mse.sqrt())
}

/// Joins predictions with ground truth by sample id and scores them.
///
/// Every prediction must have exactly one ground-truth entry; ids are matched
/// exactly and duplicates on either side are rejected.
pub fn evaluate(preds: &[HrPrediction], gt_by_id: &[(String, f64)]) -> Result<EvalReport> {
    let mut gt = BTreeMap::new();
    for (id, hr) in gt_by_id {
        if gt.insert(id.as_str(), *hr).is_some() {
            return Err(CoreError::invalid(format!(
                "duplicate ground-truth id {id:?}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(preds.len());
    let mut seen = std::collections::BTreeSet::new();
    for p in preds {
        if !seen.insert(p.sample_id.as_str()) {
            return Err(CoreError::invalid(format!(
                "duplicate prediction id {:?}",
                p.sample_id
            )));
        }
        let hr_gt = *gt.get(p.sample_id.as_str()).ok_or_else(|| {
            CoreError::invalid(format!("no ground truth for sample {:?}", p.sample_id))
        })?;
        rows.push(EvalRow {
            sample_id: p.sample_id.clone(),
            hr_pred: p.video_hr,
            hr_gt,
        });
    }
    let rmse = rmse(&rows.iter().map(|r| (r.hr_pred, r.hr_gt)).collect::<Vec<_>>())?;
    Ok(EvalReport { rows, rmse })
}

// ── Ensembling ──────────────────────────────────────────────────────────────

/// Averages predictions across runs per sample.
///
/// All runs must cover the same set of sample ids. Video HRs are averaged
/// always; window HRs are averaged elementwise only when every run produced
/// the same window count for that sample, otherwise the ensembled prediction
/// carries no per-window values. Output is sorted by sample id.
pub fn ensemble(runs: &[Vec<HrPrediction>]) -> Result<Vec<HrPrediction>> {
    if runs.is_empty() {
        return Err(CoreError::invalid("ensemble needs at least one run"));
    }
    let mut by_id: BTreeMap<&str, Vec<&HrPrediction>> = BTreeMap::new();
    for (ri, run) in runs.iter().enumerate() {
        for p in run {
            by_id.entry(p.sample_id.as_str()).or_default().push(p);
        }
        let distinct: std::collections::BTreeSet<&str> =
            run.iter().map(|p| p.sample_id.as_str()).collect();
        if distinct.len() != run.len() {
            return Err(CoreError::invalid(format!(
                "run {ri} repeats a sample id"
            )));
        }
    }
    let n_runs = runs.len();
    let mut out = Vec::with_capacity(by_id.len());
    for (id, preds) in by_id {
        if preds.len() != n_runs {
            return Err(CoreError::invalid(format!(
                "sample {id:?} appears in {} of {n_runs} runs",
                preds.len()
            )));
        }
        let video_hr = preds.iter().map(|p| p.video_hr).sum::<f64>() / n_runs as f64;
        let w = preds[0].window_hrs.len();
        let window_hrs = if preds.iter().all(|p| p.window_hrs.len() == w) {
            (0..w)
                .map(|i| preds.iter().map(|p| p.window_hrs[i]).sum::<f64>() / n_runs as f64)
                .collect()
        } else {
            Vec::new()
        };
        out.push(HrPrediction {
            sample_id: id.to_string(),
            window_hrs,
            video_hr,
        });
    }
    Ok(out)
}

// ── Train/val split ─────────────────────────────────────────────────────────

const FNV_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the raw id bytes; the split must not depend on
/// platform hashers or insertion order.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_BASIS;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic 8:2 split: a sample trains iff its id hashes into the first
/// eight of ten buckets.
pub fn is_train_sample(sample_id: &str) -> bool {
    fnv1a(sample_id.as_bytes()) % 10 < 8
}

// ── Report CSV ──────────────────────────────────────────────────────────────

const REPORT_HEADER: &str = "sample_id,hr_pred,hr_gt";

/// Writes `sample_id,hr_pred,hr_gt` rows and an `# rmse=` footer.
pub fn write_eval_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut text = String::from(REPORT_HEADER);
    text.push('\n');
    for r in &report.rows {
        if r.sample_id.contains(',') || r.sample_id.contains('\n') {
            return Err(CoreError::invalid(format!(
                "sample id {:?} may not contain commas or newlines",
                r.sample_id
            )));
        }
        text.push_str(&format!("{},{},{}\n", r.sample_id, r.hr_pred, r.hr_gt));
    }
    text.push_str(&format!("# rmse={}\n", report.rmse));
    std::fs::File::create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

/// Reads a report back, recomputing the RMSE and checking the footer agrees.
pub fn read_eval_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == REPORT_HEADER => {}
        _ => {
            return Err(CoreError::format(format!(
                "{}: eval report must start with header {REPORT_HEADER:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    let mut footer_rmse = None;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# rmse=") {
            let v = rest.trim().parse::<f64>().map_err(|_| {
                CoreError::format(format!(
                    "{}: line {line_no}: bad rmse footer {rest:?}",
                    path.display()
                ))
            })?;
            footer_rmse = Some(v);
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CoreError::format(format!(
                "{}: line {line_no}: expected 3 fields",
                path.display()
            )));
        }
        let parse = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                CoreError::format(format!(
                    "{}: line {line_no}: bad {what} {s:?}",
                    path.display()
                ))
            })
        };
        rows.push(EvalRow {
            sample_id: fields[0].trim().to_string(),
            hr_pred: parse(fields[1], "hr_pred")?,
            hr_gt: parse(fields[2], "hr_gt")?,
        });
    }
    let footer = footer_rmse.ok_or_else(|| {
        CoreError::format(format!("{}: missing # rmse= footer", path.display()))
    })?;
    let recomputed = rmse(&rows.iter().map(|r| (r.hr_pred, r.hr_gt)).collect::<Vec<_>>())?;
    if (recomputed - footer).abs() > 1e-9 * recomputed.abs().max(1.0) {
        return Err(CoreError::format(format!(
            "{}: rmse footer {footer} disagrees with rows ({recomputed})",
            path.display()
        )));
    }
    Ok(EvalReport {
        rows,
        rmse: recomputed,
    })
}

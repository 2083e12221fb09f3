//! Multi-scale spatial-temporal maps (MSTmaps).
//!
//! A clip of per-ROI pixel statistics becomes a T x N x 6 tensor: one row per
//! non-empty combination of the R meta-ROIs (N = 2^R - 1), one channel each
//! for R, G, B and their BT.601 full-range Y, U, V. Each (row, channel) trace
//! is min-max scaled to [0, 255] over the clip; flat traces map to zero.

use crate::{CoreError, Result};
use std::io::{Read, Write};
use std::path::Path;

const MSTM_MAGIC: &[u8; 4] = b"MSTM";
const MSTM_VERSION: u8 = 1;

pub const MSTMAP_CHANNELS: usize = 6;

/// Guard below which a min-max span counts as flat.
const SPAN_GUARD: f64 = 1e-12;

// ── Per-frame ROI statistics ────────────────────────────────────────────────

/// Pixel sums and counts for each meta-ROI in one frame. Channel order is
/// R, G, B. Counts are strictly positive so pooled means are always defined.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiFrameStats {
    sums: Vec<[f64; 3]>,
    counts: Vec<u64>,
}

impl RoiFrameStats {
    pub fn new(sums: Vec<[f64; 3]>, counts: Vec<u64>) -> Result<Self> {
        if sums.is_empty() {
            return Err(CoreError::invalid("need at least one meta-ROI"));
        }
        if sums.len() != counts.len() {
            return Err(CoreError::shape(format!(
                "{} sum entries vs {} counts",
                sums.len(),
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(CoreError::invalid("pixel counts must be positive"));
        }
        if sums.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("pixel sums must be finite"));
        }
        Ok(RoiFrameStats { sums, counts })
    }

    pub fn roi_count(&self) -> usize {
        self.sums.len()
    }

    pub fn sums(&self) -> &[[f64; 3]] {
        &self.sums
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// All non-empty subsets of `r` meta-ROIs as 0-based index lists, in
/// ascending bitmask order (mask 1, 2, 3, ..., 2^r - 1).
pub fn enumerate_combinations(r: usize) -> Result<Vec<Vec<usize>>> {
    if r == 0 || r > 16 {
        return Err(CoreError::invalid(format!(
            "meta-ROI count must be in 1..=16, got {r}"
        )));
    }
    let mut out = Vec::with_capacity((1usize << r) - 1);
    for mask in 1u32..(1u32 << r) {
        let mut subset = Vec::new();
        for bit in 0..r {
            if mask & (1 << bit) != 0 {
                subset.push(bit);
            }
        }
        out.push(subset);
    }
    Ok(out)
}

/// Pixel-pooled mean of a subset union: summed pixel sums over summed pixel
/// counts, per channel. Not the mean of the per-ROI means.
pub fn combo_channel_mean(stats: &RoiFrameStats, subset: &[usize]) -> Result<[f64; 3]> {
    if subset.is_empty() {
        return Err(CoreError::invalid("subset must be non-empty"));
    }
    let mut sum = [0.0f64; 3];
    let mut count = 0u64;
    for &r in subset {
        if r >= stats.roi_count() {
            return Err(CoreError::invalid(format!(
                "ROI index {r} out of range (have {})",
                stats.roi_count()
            )));
        }
        for ch in 0..3 {
            sum[ch] += stats.sums[r][ch];
        }
        count += stats.counts[r];
    }
    let denom = count as f64;
    Ok([sum[0] / denom, sum[1] / denom, sum[2] / denom])
}

/// BT.601 full-range conversion with the chroma channels offset to 128:
/// Y = 0.299 R + 0.587 G + 0.114 B, U = 0.492 (B - Y) + 128,
/// V = 0.877 (R - Y) + 128.
pub fn rgb_to_yuv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = 0.492 * (b - y) + 128.0;
    let v = 0.877 * (r - y) + 128.0;
    [y, u, v]
}

// ── The map itself ──────────────────────────────────────────────────────────

/// T x N x 6 tensor in (t, n, c) row-major order with channels R, G, B, Y, U, V.
/// N is always 2^R - 1 for R meta-ROIs.
#[derive(Debug, Clone, PartialEq)]
pub struct MstMap {
    data: Vec<f64>,
    frames: usize,
    combos: usize,
    meta_rois: usize,
    fs: f64,
}

impl MstMap {
    pub fn from_parts(data: Vec<f64>, frames: usize, combos: usize, fs: f64) -> Result<Self> {
        let meta_rois = combos_to_meta_rois(combos)?;
        if frames == 0 {
            return Err(CoreError::invalid("map needs at least one frame"));
        }
        if data.len() != frames * combos * MSTMAP_CHANNELS {
            return Err(CoreError::shape(format!(
                "map of {frames}x{combos}x{MSTMAP_CHANNELS} needs {} values, got {}",
                frames * combos * MSTMAP_CHANNELS,
                data.len()
            )));
        }
        if !fs.is_finite() || fs <= 0.0 {
            return Err(CoreError::invalid(format!("bad frame rate {fs}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("map contains non-finite values"));
        }
        Ok(MstMap {
            data,
            frames,
            combos,
            meta_rois,
            fs,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn combos(&self) -> usize {
        self.combos
    }

    pub fn meta_rois(&self) -> usize {
        self.meta_rois
    }

    pub fn channels(&self) -> usize {
        MSTMAP_CHANNELS
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, n: usize, c: usize) -> f64 {
        self.data[(t * self.combos + n) * MSTMAP_CHANNELS + c]
    }

    /// One (row, channel) trace over time.
    pub fn trace(&self, n: usize, c: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(t, n, c)).collect()
    }
}

fn combos_to_meta_rois(combos: usize) -> Result<usize> {
    let mut r = 0usize;
    while r <= 16 {
        if (1usize << r) - 1 == combos {
            if r == 0 {
                break;
            }
            return Ok(r);
        }
        r += 1;
    }
    Err(CoreError::invalid(format!(
        "row count {combos} is not 2^R - 1 for any R in 1..=16"
    )))
}

/// Build the map for a clip of per-frame ROI statistics. Every frame must
/// carry the same meta-ROI count; scaling is per (row, channel) over the
/// whole clip.
pub fn build_mstmap(stats_seq: &[RoiFrameStats], fs: f64) -> Result<MstMap> {
    if stats_seq.is_empty() {
        return Err(CoreError::invalid("need at least one frame of statistics"));
    }
    let r = stats_seq[0].roi_count();
    if stats_seq.iter().any(|s| s.roi_count() != r) {
        return Err(CoreError::shape(
            "meta-ROI count varies across frames".to_string(),
        ));
    }
    let combos = enumerate_combinations(r)?;
    let n = combos.len();
    let frames = stats_seq.len();

    let mut data = vec![0.0f64; frames * n * MSTMAP_CHANNELS];
    for (t, stats) in stats_seq.iter().enumerate() {
        for (ni, subset) in combos.iter().enumerate() {
            let rgb = combo_channel_mean(stats, subset)?;
            let yuv = rgb_to_yuv(rgb);
            let base = (t * n + ni) * MSTMAP_CHANNELS;
            data[base] = rgb[0];
            data[base + 1] = rgb[1];
            data[base + 2] = rgb[2];
            data[base + 3] = yuv[0];
            data[base + 4] = yuv[1];
            data[base + 5] = yuv[2];
        }
    }

    // Min-max scale each (row, channel) trace to [0, 255] over the clip.
    for ni in 0..n {
        for c in 0..MSTMAP_CHANNELS {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for t in 0..frames {
                let v = data[(t * n + ni) * MSTMAP_CHANNELS + c];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let span = hi - lo;
            if span < SPAN_GUARD {
                for t in 0..frames {
                    data[(t * n + ni) * MSTMAP_CHANNELS + c] = 0.0;
                }
            } else {
                for t in 0..frames {
                    let idx = (t * n + ni) * MSTMAP_CHANNELS + c;
                    data[idx] = (data[idx] - lo) / span * 255.0;
                }
            }
        }
    }

    MstMap::from_parts(data, frames, n, fs)
}

// ── Sliding windows ─────────────────────────────────────────────────────────

/// Window length and hop in frames.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub step: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, step: usize) -> Result<Self> {
        if window_len == 0 || step == 0 {
            return Err(CoreError::invalid(format!(
                "window length and step must be positive, got {window_len}/{step}"
            )));
        }
        Ok(WindowSpec { window_len, step })
    }
}

/// Full windows only, starting at frame 0 and hopping by `step`:
/// floor((T - window_len) / step) + 1 windows, each an exact slice.
pub fn sliding_windows(map: &MstMap, spec: &WindowSpec) -> Result<Vec<MstMap>> {
    if spec.window_len > map.frames() {
        return Err(CoreError::invalid(format!(
            "window of {} frames does not fit a {}-frame map",
            spec.window_len,
            map.frames()
        )));
    }
    let count = (map.frames() - spec.window_len) / spec.step + 1;
    let row = map.combos() * MSTMAP_CHANNELS;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * spec.step;
        let slice = &map.data[start * row..(start + spec.window_len) * row];
        out.push(MstMap::from_parts(
            slice.to_vec(),
            spec.window_len,
            map.combos(),
            map.fs(),
        )?);
    }
    Ok(out)
}

// ── Binary + CSV interchange ───────────────────────────────────────────────
//
// Binary: magic "MSTM", version byte 1, little-endian u32 T, N, C, f32 fs,
// then T*N*C little-endian f32 values in (t, n, c) row-major order.

pub fn write_mstmap(map: &MstMap, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(21 + map.data.len() * 4);
    buf.extend_from_slice(MSTM_MAGIC);
    buf.push(MSTM_VERSION);
    for dim in [map.frames, map.combos, MSTMAP_CHANNELS] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(map.fs as f32).to_le_bytes());
    for &v in &map.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_mstmap(path: &Path) -> Result<MstMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 21 {
        return Err(CoreError::format(format!(
            "{}: truncated MSTmap header",
            path.display()
        )));
    }
    if &bytes[0..4] != MSTM_MAGIC {
        return Err(CoreError::format(format!(
            "{}: bad magic, expected MSTM",
            path.display()
        )));
    }
    if bytes[4] != MSTM_VERSION {
        return Err(CoreError::format(format!(
            "{}: unsupported MSTmap version {}",
            path.display(),
            bytes[4]
        )));
    }
    let dim = |i: usize| {
        u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize
    };
    let (t, n, c) = (dim(0), dim(1), dim(2));
    if c != MSTMAP_CHANNELS {
        return Err(CoreError::format(format!(
            "{}: expected {MSTMAP_CHANNELS} channels, got {c}",
            path.display()
        )));
    }
    let fs = f32::from_le_bytes(bytes[17..21].try_into().unwrap()) as f64;
    let count = t
        .checked_mul(n)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| CoreError::format("MSTmap dimensions overflow"))?;
    if bytes.len() != 21 + 4 * count {
        return Err(CoreError::format(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            4 * count,
            bytes.len() - 21
        )));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let off = 21 + 4 * i;
        data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
    }
    MstMap::from_parts(data, t, n, fs)
}

/// Plain-text export: header `t,n,c,value`, one row per tensor entry in
/// (t, n, c) order.
pub fn write_mstmap_csv(map: &MstMap, path: &Path) -> Result<()> {
    let mut out = String::from("t,n,c,value\n");
    for t in 0..map.frames {
        for n in 0..map.combos {
            for c in 0..MSTMAP_CHANNELS {
                out.push_str(&format!("{t},{n},{c},{}\n", map.get(t, n, c)));
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

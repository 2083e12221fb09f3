//! Video clips as dense T x H x W x C tensors, frame differencing, and the
//! `VCUB` binary interchange format.

use super::VAR_GUARD;
use crate::{CoreError, Result};
use std::io::{Read, Write};
use std::path::Path;

const VCUB_MAGIC: &[u8; 4] = b"VCUB";

/// A video clip sampled at `fs` frames per second, stored row-major in
/// (t, h, w, c) order. All values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCube {
    data: Vec<f64>,
    t: usize,
    h: usize,
    w: usize,
    c: usize,
    fs: f64,
}

impl VideoCube {
    pub fn new(data: Vec<f64>, t: usize, h: usize, w: usize, c: usize, fs: f64) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(CoreError::invalid(format!(
                "video cube dimensions must be positive, got {t}x{h}x{w}x{c}"
            )));
        }
        if data.len() != t * h * w * c {
            return Err(CoreError::shape(format!(
                "video cube of {t}x{h}x{w}x{c} needs {} values, got {}",
                t * h * w * c,
                data.len()
            )));
        }
        if !fs.is_finite() || fs <= 0.0 {
            return Err(CoreError::invalid(format!(
                "frame rate must be finite and positive, got {fs}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("video cube contains non-finite values"));
        }
        Ok(VideoCube { data, t, h, w, c, fs })
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, t: usize, h: usize, w: usize, c: usize) -> usize {
        ((t * self.h + h) * self.w + w) * self.c + c
    }

    #[inline]
    pub fn get(&self, t: usize, h: usize, w: usize, c: usize) -> f64 {
        self.data[self.index(t, h, w, c)]
    }

    /// Temporal slice [t0, t1) as a new cube.
    pub fn slice_frames(&self, t0: usize, t1: usize) -> Result<VideoCube> {
        if t0 >= t1 || t1 > self.t {
            return Err(CoreError::invalid(format!(
                "frame slice [{t0}, {t1}) out of range for {} frames",
                self.t
            )));
        }
        let stride = self.h * self.w * self.c;
        VideoCube::new(
            self.data[t0 * stride..t1 * stride].to_vec(),
            t1 - t0,
            self.h,
            self.w,
            self.c,
            self.fs,
        )
    }
}

/// Forward frame differences with the last difference repeated so the frame
/// count is preserved: out[t] = in[t+1] - in[t], out[T-1] = out[T-2].
/// Needs at least two frames.
pub fn frame_diff_raw(clip: &VideoCube) -> Result<VideoCube> {
    if clip.t < 2 {
        return Err(CoreError::invalid(
            "frame differencing needs at least 2 frames",
        ));
    }
    let stride = clip.h * clip.w * clip.c;
    let mut out = vec![0.0; clip.data.len()];
    for t in 0..clip.t - 1 {
        let (a, b) = (&clip.data[t * stride..(t + 1) * stride], &clip.data[(t + 1) * stride..(t + 2) * stride]);
        for i in 0..stride {
            out[t * stride + i] = b[i] - a[i];
        }
    }
    let (last_src, last_dst) = (
        (clip.t - 2) * stride,
        (clip.t - 1) * stride,
    );
    for i in 0..stride {
        out[last_dst + i] = out[last_src + i];
    }
    VideoCube::new(out, clip.t, clip.h, clip.w, clip.c, clip.fs)
}

/// Frame differencing followed by per-clip, per-channel standardization
/// (population statistics, variance guard: a flat channel comes back zero).
pub fn frame_diff(clip: &VideoCube) -> Result<VideoCube> {
    let raw = frame_diff_raw(clip)?;
    let mut data = raw.data;
    let c = raw.c;
    let per_channel = data.len() / c;
    for ch in 0..c {
        let mut mean = 0.0;
        for i in 0..per_channel {
            mean += data[i * c + ch];
        }
        mean /= per_channel as f64;
        let mut var = 0.0;
        for i in 0..per_channel {
            let d = data[i * c + ch] - mean;
            var += d * d;
        }
        var /= per_channel as f64;
        if var < VAR_GUARD {
            for i in 0..per_channel {
                data[i * c + ch] = 0.0;
            }
        } else {
            let inv_std = 1.0 / var.sqrt();
            for i in 0..per_channel {
                data[i * c + ch] = (data[i * c + ch] - mean) * inv_std;
            }
        }
    }
    VideoCube::new(data, raw.t, raw.h, raw.w, raw.c, raw.fs)
}

// ── VCUB binary format ──────────────────────────────────────────────────────
//
// magic "VCUB", then little-endian u32 T, H, W, C (20-byte header), then
// T*H*W*C little-endian f32 values in (t, h, w, c) row-major order.
// The frame rate is carried out of band (manifest), not in the file.

pub fn write_video_cube(clip: &VideoCube, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + clip.data.len() * 4);
    buf.extend_from_slice(VCUB_MAGIC);
    for dim in [clip.t, clip.h, clip.w, clip.c] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in &clip.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read a `VCUB` file; `fs` is supplied by the caller (from the manifest).
pub fn read_video_cube(path: &Path, fs: f64) -> Result<VideoCube> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(CoreError::format(format!(
            "{}: truncated video cube header",
            path.display()
        )));
    }
    if &bytes[0..4] != VCUB_MAGIC {
        return Err(CoreError::format(format!(
            "{}: bad magic, expected VCUB",
            path.display()
        )));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (t, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
    let n = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| CoreError::format("video cube dimensions overflow"))?;
    if bytes.len() != 20 + 4 * n {
        return Err(CoreError::format(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            4 * n,
            bytes.len() - 20
        )));
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let off = 20 + 4 * i;
        data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
    }
    VideoCube::new(data, t, h, w, c, fs)
}

//! Training-time MSTmap augmentations: time-axis flip, ROI-axis flip, and
//! frequency up/down resampling. The deterministic primitives are public so
//! they can be tested and composed exactly; [`augment_mstmap`] applies the
//! enabled ones randomly per call, the way the training loops use them.

use crate::mstmap::MstMap;
use crate::{CoreError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentFlags {
    pub flip_time: bool,
    pub flip_roi: bool,
    pub freq_resample: bool,
    /// Frequency scaling factors drawn uniformly from this closed range.
    pub freq_range: (f64, f64),
}

impl Default for AugmentFlags {
    fn default() -> Self {
        AugmentFlags {
            flip_time: false,
            flip_roi: false,
            freq_resample: false,
            freq_range: (0.7, 1.4),
        }
    }
}

impl AugmentFlags {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.freq_range;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(CoreError::invalid(format!(
                "frequency range [{lo}, {hi}] must be positive and ordered"
            )));
        }
        Ok(())
    }

    pub fn any(&self) -> bool {
        self.flip_time || self.flip_roi || self.freq_resample
    }
}

/// An augmented map together with the factor by which the implied
/// ground-truth heart rate was scaled (1 unless frequency resampling ran).
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub map: MstMap,
    pub hr_scale: f64,
}

// ── Deterministic primitives ────────────────────────────────────────────────

/// Reverses the time axis.
pub fn flip_time(map: &MstMap) -> MstMap {
    let (t, n, c) = (map.frames(), map.combos(), map.channels());
    let mut data = vec![0.0; t * n * c];
    let stride = n * c;
    for ti in 0..t {
        let src = &map.data()[ti * stride..(ti + 1) * stride];
        data[(t - 1 - ti) * stride..(t - ti) * stride].copy_from_slice(src);
    }
    MstMap::from_parts(data, t, n, map.fs()).expect("flipping preserves validity")
}

/// Reverses the ROI-combination axis.
pub fn flip_roi(map: &MstMap) -> MstMap {
    let (t, n, c) = (map.frames(), map.combos(), map.channels());
    let mut data = vec![0.0; t * n * c];
    for ti in 0..t {
        for ni in 0..n {
            let src = &map.data()[(ti * n + ni) * c..(ti * n + ni + 1) * c];
            data[(ti * n + (n - 1 - ni)) * c..(ti * n + (n - ni)) * c].copy_from_slice(src);
        }
    }
    MstMap::from_parts(data, t, n, map.fs()).expect("flipping preserves validity")
}

/// Scales the signal frequency by `factor`: every (roi, channel) trace is
/// read at stretched positions t·factor and clamped at the final frame, so
/// the output keeps the original T (fast factors pad with the edge value,
/// slow factors crop the tail). The implied heart rate scales by `factor`.
pub fn freq_resample(map: &MstMap, factor: f64) -> Result<Augmented> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(CoreError::invalid(format!(
            "frequency factor must be positive, got {factor}"
        )));
    }
    let (t, n, c) = (map.frames(), map.combos(), map.channels());
    let last = (t - 1) as f64;
    let mut data = vec![0.0; t * n * c];
    for ti in 0..t {
        let pos = (ti as f64 * factor).min(last);
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        for ni in 0..n {
            for ci in 0..c {
                let a = map.get(i0, ni, ci);
                let v = if i0 + 1 < t {
                    a * (1.0 - frac) + map.get(i0 + 1, ni, ci) * frac
                } else {
                    a
                };
                data[(ti * n + ni) * c + ci] = v;
            }
        }
    }
    Ok(Augmented {
        map: MstMap::from_parts(data, t, n, map.fs())?,
        hr_scale: factor,
    })
}

// ── Random application ──────────────────────────────────────────────────────

/// Applies each enabled augmentation with probability 1/2 (frequency factors
/// drawn uniformly from the configured range). With all flags off this is the
/// identity. The rng draw order is fixed: time coin, roi coin, resample coin,
/// then the factor, consuming draws only for enabled flags.
pub fn augment_mstmap(
    map: &MstMap,
    flags: &AugmentFlags,
    rng: &mut ChaCha8Rng,
) -> Result<Augmented> {
    flags.validate()?;
    let mut out = map.clone();
    let mut hr_scale = 1.0;
    if flags.flip_time && rng.gen_bool(0.5) {
        out = flip_time(&out);
    }
    if flags.flip_roi && rng.gen_bool(0.5) {
        out = flip_roi(&out);
    }
    if flags.freq_resample && rng.gen_bool(0.5) {
        let factor = rng.gen_range(flags.freq_range.0..=flags.freq_range.1);
        let resampled = freq_resample(&out, factor)?;
        out = resampled.map;
        hr_scale = resampled.hr_scale;
    }
    Ok(Augmented { map: out, hr_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{
        bandpass_butter1, default_n_fft, fft_psd, hr_from_psd, BandLimits, Waveform,
    };
    use crate::synth::{gen_roi_stats, SynthSpec};
    use rand::SeedableRng;

    fn toy_map() -> MstMap {
        let spec = SynthSpec {
            hr_bpm: 60.0,
            duration_s: 20.0,
            harmonic_ratio: 0.0,
            ..SynthSpec::default()
        };
        let stats = gen_roi_stats(&spec, 2).unwrap();
        crate::mstmap::build_mstmap(&stats, spec.fs).unwrap()
    }

    #[test]
    fn all_flags_off_is_the_identity() {
        let map = toy_map();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment_mstmap(&map, &AugmentFlags::default(), &mut rng).unwrap();
        assert_eq!(out.map, map);
        assert_eq!(out.hr_scale, 1.0);
    }

    #[test]
    fn flips_are_involutions() {
        let map = toy_map();
        assert_eq!(flip_time(&flip_time(&map)), map);
        assert_eq!(flip_roi(&flip_roi(&map)), map);
    }

    #[test]
    fn time_flip_reverses_traces() {
        let map = toy_map();
        let flipped = flip_time(&map);
        let fwd = map.trace(1, 2);
        let mut rev = flipped.trace(1, 2);
        rev.reverse();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn roi_flip_swaps_rows() {
        let map = toy_map();
        let flipped = flip_roi(&map);
        let n = map.combos();
        for ni in 0..n {
            assert_eq!(map.trace(ni, 1), flipped.trace(n - 1 - ni, 1));
        }
    }

    #[test]
    fn unit_factor_resample_is_exact() {
        let map = toy_map();
        let out = freq_resample(&map, 1.0).unwrap();
        assert_eq!(out.map, map);
    }

    #[test]
    fn factor_two_doubles_the_readout_rate() {
        // 60 bpm at factor 2 must read ~120 bpm through the model-free path.
        let map = toy_map();
        let out = freq_resample(&map, 2.0).unwrap();
        assert_eq!(out.hr_scale, 2.0);
        let trace = Waveform::new(out.map.trace(0, 1), out.map.fs()).unwrap();
        let filtered = bandpass_butter1(&trace, &BandLimits::physiological()).unwrap();
        let psd = fft_psd(&filtered, default_n_fft(filtered.len())).unwrap();
        let hr = hr_from_psd(&psd, &BandLimits::physiological()).unwrap();
        assert!((hr - 120.0).abs() <= 3.0, "read {hr} bpm, expected ~120");
    }

    #[test]
    fn seeded_augmentation_is_reproducible() {
        let map = toy_map();
        let flags = AugmentFlags {
            flip_time: true,
            flip_roi: true,
            freq_resample: true,
            ..AugmentFlags::default()
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = augment_mstmap(&map, &flags, &mut r1).unwrap();
        let b = augment_mstmap(&map, &flags, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_ranges_and_factors_are_rejected() {
        let map = toy_map();
        assert!(freq_resample(&map, 0.0).is_err());
        assert!(freq_resample(&map, -1.0).is_err());
        let flags = AugmentFlags {
            freq_resample: true,
            freq_range: (1.4, 0.7),
            ..AugmentFlags::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(augment_mstmap(&map, &flags, &mut rng).is_err());
    }
}

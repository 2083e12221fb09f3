//! Discrete Fourier transforms: an iterative radix-2 kernel for power-of-two
//! lengths and Bluestein's chirp-z algorithm for everything else.
//!
//! All transforms use the unnormalized forward convention
//! `X[k] = sum_n x[n] * exp(-2*pi*i*k*n/N)`; the inverse divides by `N`.

use num_complex::Complex64;
use std::f64::consts::PI;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place radix-2 decimation-in-time transform.
/// `buf.len()` must be a power of two (including 1).
pub fn fft_pow2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(is_power_of_two(n), "fft_pow2 requires a power-of-two length");
    if n < 2 {
        return;
    }

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wlen = Complex64::from_polar(1.0, ang);
        let half = len / 2;
        let mut start = 0;
        while start < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
                w *= wlen;
            }
            start += len;
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// DFT of arbitrary length. Dispatches to the radix-2 kernel when possible,
/// otherwise runs Bluestein's algorithm on top of it.
pub fn dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    if is_power_of_two(n) {
        let mut buf = x.to_vec();
        fft_pow2(&mut buf, inverse);
        return buf;
    }
    if inverse {
        // IDFT(x) = conj(DFT(conj(x))) / N
        let conj_in: Vec<Complex64> = x.iter().map(|v| v.conj()).collect();
        return dft(&conj_in, false)
            .into_iter()
            .map(|v| v.conj() / n as f64)
            .collect();
    }
    bluestein(x)
}

/// Chirp-z transform: X[k] = w[k] * (a (*) b)[k] with a[n] = x[n]*w[n],
/// b[m] = conj(w[|m|]), w[k] = exp(-i*pi*k^2/N). The convolution runs on a
/// power-of-two grid of length >= 2N-1. Squares are reduced mod 2N to keep
/// the chirp angles small and accurate.
fn bluestein(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();

    let mut chirp = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in chirp.iter_mut().enumerate() {
        let kk = (k * k) % (2 * n);
        *c = Complex64::from_polar(1.0, -PI * kk as f64 / n as f64);
    }

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = Complex64::new(1.0, 0.0);
    for k in 1..n {
        let v = chirp[k].conj();
        b[k] = v;
        b[m - k] = v;
    }

    fft_pow2(&mut a, false);
    fft_pow2(&mut b, false);
    for i in 0..m {
        a[i] *= b[i];
    }
    fft_pow2(&mut a, true);

    (0..n).map(|k| a[k] * chirp[k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook O(n^2) DFT used as the reference here and in the
    /// integration-level oracles.
    fn dft_naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &v) in x.iter().enumerate() {
                let ang = sign * 2.0 * PI * (k * m) as f64 / n as f64;
                acc += v * Complex64::from_polar(1.0, ang);
            }
            *o = if inverse { acc / n as f64 } else { acc };
        }
        out
    }

    fn toy_signal(n: usize, salt: u64) -> Vec<Complex64> {
        // Deterministic pseudo-random complex data without pulling in an RNG.
        (0..n)
            .map(|i| {
                let a = ((i as u64).wrapping_mul(6364136223846793005).wrapping_add(salt) >> 33)
                    as f64
                    / (1u64 << 31) as f64;
                let b = ((i as u64).wrapping_mul(2862933555777941757).wrapping_add(salt ^ 0xff)
                    >> 33) as f64
                    / (1u64 << 31) as f64;
                Complex64::new(a - 1.0, b - 1.0)
            })
            .collect()
    }

    fn max_rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_naive_dft_on_all_lengths_up_to_128() {
        for n in 1..=128 {
            let x = toy_signal(n, n as u64);
            let got = dft(&x, false);
            let want = dft_naive(&x, false);
            let err = max_rel_err(&got, &want);
            assert!(err <= 1e-9, "length {n}: relative error {err}");
        }
    }

    #[test]
    fn inverse_round_trips() {
        for &n in &[1usize, 2, 3, 5, 8, 12, 64, 100, 127] {
            let x = toy_signal(n, 17 + n as u64);
            let back = dft(&dft(&x, false), true);
            let err = max_rel_err(&back, &x);
            assert!(err <= 1e-10, "length {n}: round-trip error {err}");
        }
    }

    #[test]
    fn impulse_transforms_to_flat_spectrum() {
        let mut x = vec![Complex64::new(0.0, 0.0); 16];
        x[0] = Complex64::new(1.0, 0.0);
        for v in dft(&x, false) {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}

//! Dense row-major tensors and the handful of BLAS-ish kernels the encoders
//! need. Deliberately minimal: no broadcasting, no views, no autograd — the
//! backward passes are written out by hand next to each forward.

use crate::{CoreError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(CoreError::shape(format!(
                "tensor of shape {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("tensor values must be finite"));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Filled with ones; used for layer-norm scales.
    pub fn ones(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![1.0; n],
        }
    }

    /// Uniform(−bound, bound) draw in a fixed element order.
    pub fn uniform(dims: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    /// Fan-in-scaled uniform init, bound = 1/√fan_in.
    pub fn fan_in_uniform(dims: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        Tensor::uniform(dims, 1.0 / (fan_in as f64).sqrt(), rng)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn zeros_like(&self) -> Tensor {
        Tensor::zeros(&self.dims)
    }
}

/// Named views over every parameter tensor of a model, in a fixed order.
/// Optimizers and checkpoints walk parameters exclusively through this.
pub trait ParamTensors {
    fn named_tensors(&self) -> Vec<(String, &Tensor)>;
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;
}

// ── Kernels ─────────────────────────────────────────────────────────────────

/// out[m×n] = a[m×k] · b[k×n]
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// out[m×n] = a[m×k] · b[n×k]ᵀ
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// out[k×n] = a[m×k]ᵀ · b[m×n]
pub(crate) fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Row-wise numerically stable softmax over an m×n matrix, in place.
pub(crate) fn softmax_rows(x: &mut [f64], m: usize, n: usize) {
    for i in 0..m {
        let row = &mut x[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_enforces_shape_and_finiteness() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        assert_eq!(Tensor::from_vec(&[2, 3], vec![1.0; 6]).unwrap().numel(), 6);
    }

    #[test]
    fn matmul_matches_hand_computation() {
        // [1 2; 3 4] · [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect(); // 3×4 or 4×3

        // a·bᵀ with b stored 4×3 equals a·(b transposed to 3×4).
        let mut b_t = vec![0.0; 12];
        for i in 0..4 {
            for j in 0..3 {
                b_t[j * 4 + i] = b[i * 3 + j];
            }
        }
        assert_eq!(matmul_bt(&a, &b, 2, 3, 4), matmul(&a, &b_t, 2, 3, 4));

        // aᵀ·c with a stored 2×3 equals (a transposed to 3×2)·c.
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(); // 2×4
        let mut a_t = vec![0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                a_t[j * 2 + i] = a[i * 3 + j];
            }
        }
        assert_eq!(matmul_at(&a, &c, 2, 3, 4), matmul(&a_t, &c, 3, 2, 4));
    }

    #[test]
    fn softmax_rows_are_probability_vectors() {
        let mut x = vec![1.0, 2.0, 3.0, -1.0, 0.0, 1000.0];
        softmax_rows(&mut x, 2, 3);
        for row in x.chunks(3) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9, "row sum {sum}");
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        // The huge logit dominates without overflowing.
        assert!((x[5] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Tensor::uniform(&[3, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Tensor::uniform(&[3, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() < 0.5));
    }
}

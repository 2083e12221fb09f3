//! The single-head attention encoder shared by the spatial and temporal paths
//! of the ST-former. For each independent group of M tokens:
//! Z = softmax(QKᵀ/√D)·V + X, then Z′ = MLP(LN(Z)) + Z, with a two-layer tanh
//! MLP. The backward pass replays the taped forward in reverse.

use super::tensor::{matmul, matmul_at, matmul_bt, softmax_rows, Tensor};
use rand_chacha::ChaCha8Rng;

pub const LN_EPS: f64 = 1e-5;

/// Weights of one attention encoder: Q/K/V projections, layer norm, MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w_q: Tensor,     // D×D
    pub w_k: Tensor,     // D×D
    pub w_v: Tensor,     // D×D
    pub ln_scale: Tensor, // D
    pub ln_shift: Tensor, // D
    pub mlp_w1: Tensor,  // D×H
    pub mlp_b1: Tensor,  // H
    pub mlp_w2: Tensor,  // H×D
    pub mlp_b2: Tensor,  // D
}

impl EncoderParams {
    pub fn init(d: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        EncoderParams {
            w_q: Tensor::fan_in_uniform(&[d, d], d, rng),
            w_k: Tensor::fan_in_uniform(&[d, d], d, rng),
            w_v: Tensor::fan_in_uniform(&[d, d], d, rng),
            ln_scale: Tensor::ones(&[d]),
            ln_shift: Tensor::zeros(&[d]),
            mlp_w1: Tensor::fan_in_uniform(&[d, hidden], d, rng),
            mlp_b1: Tensor::zeros(&[hidden]),
            mlp_w2: Tensor::fan_in_uniform(&[hidden, d], hidden, rng),
            mlp_b2: Tensor::zeros(&[d]),
        }
    }

    pub fn zeros(d: usize, hidden: usize) -> Self {
        EncoderParams {
            w_q: Tensor::zeros(&[d, d]),
            w_k: Tensor::zeros(&[d, d]),
            w_v: Tensor::zeros(&[d, d]),
            ln_scale: Tensor::zeros(&[d]),
            ln_shift: Tensor::zeros(&[d]),
            mlp_w1: Tensor::zeros(&[d, hidden]),
            mlp_b1: Tensor::zeros(&[hidden]),
            mlp_w2: Tensor::zeros(&[hidden, d]),
            mlp_b2: Tensor::zeros(&[d]),
        }
    }

    /// Fixed walk order used by optimizers and checkpoints.
    pub(crate) fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (name, t) in [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("ln_scale", &self.ln_scale),
            ("ln_shift", &self.ln_shift),
            ("mlp_w1", &self.mlp_w1),
            ("mlp_b1", &self.mlp_b1),
            ("mlp_w2", &self.mlp_w2),
            ("mlp_b2", &self.mlp_b2),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    pub(crate) fn push_named_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor)>,
    ) {
        for (name, t) in [
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("ln_scale", &mut self.ln_scale),
            ("ln_shift", &mut self.ln_shift),
            ("mlp_w1", &mut self.mlp_w1),
            ("mlp_b1", &mut self.mlp_b1),
            ("mlp_w2", &mut self.mlp_w2),
            ("mlp_b2", &mut self.mlp_b2),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
}

/// Everything the backward pass needs from one forward call.
pub struct EncoderTape {
    groups: usize,
    tokens: usize,
    x: Vec<f64>,       // G·M·D input
    q: Vec<f64>,       // G·M·D
    k: Vec<f64>,       // G·M·D
    v: Vec<f64>,       // G·M·D
    a: Vec<f64>,       // G·M·M attention rows
    z: Vec<f64>,       // G·M·D post-attention residual
    xhat: Vec<f64>,    // G·M·D normalized rows (z when bypassed)
    inv_std: Vec<f64>, // G·M
    ln_out: Vec<f64>,  // G·M·D
    t1: Vec<f64>,      // G·M·H tanh activations
    ln_bypass: bool,
}

impl EncoderTape {
    #[cfg(test)]
    pub(crate) fn attention_rows(&self) -> &[f64] {
        &self.a
    }
}

/// Runs the encoder over `groups` independent groups of `tokens` tokens laid
/// out as [group][token][d], returning the output and the tape.
pub fn encoder_forward(
    x: &[f64],
    groups: usize,
    tokens: usize,
    d: usize,
    p: &EncoderParams,
    ln_bypass: bool,
) -> (Vec<f64>, EncoderTape) {
    debug_assert_eq!(x.len(), groups * tokens * d);
    let hidden = p.mlp_b1.numel();
    let m = tokens;
    let scale = 1.0 / (d as f64).sqrt();

    let mut out = vec![0.0; x.len()];
    let mut tape = EncoderTape {
        groups,
        tokens,
        x: x.to_vec(),
        q: vec![0.0; x.len()],
        k: vec![0.0; x.len()],
        v: vec![0.0; x.len()],
        a: vec![0.0; groups * m * m],
        z: vec![0.0; x.len()],
        xhat: vec![0.0; x.len()],
        inv_std: vec![0.0; groups * m],
        ln_out: vec![0.0; x.len()],
        t1: vec![0.0; groups * m * hidden],
        ln_bypass,
    };

    for g in 0..groups {
        let xs = &x[g * m * d..(g + 1) * m * d];
        let q = matmul(xs, p.w_q.data(), m, d, d);
        let k = matmul(xs, p.w_k.data(), m, d, d);
        let v = matmul(xs, p.w_v.data(), m, d, d);

        let mut a = matmul_bt(&q, &k, m, d, m);
        for s in a.iter_mut() {
            *s *= scale;
        }
        softmax_rows(&mut a, m, m);

        let h = matmul(&a, &v, m, m, d);
        let z: Vec<f64> = h.iter().zip(xs).map(|(hv, xv)| hv + xv).collect();

        // Layer norm per token row, or identity on the diagnostic bypass.
        let mut xhat = vec![0.0; m * d];
        let mut inv_std = vec![1.0; m];
        let mut ln_out = vec![0.0; m * d];
        if ln_bypass {
            xhat.copy_from_slice(&z);
            ln_out.copy_from_slice(&z);
        } else {
            for t in 0..m {
                let row = &z[t * d..(t + 1) * d];
                let mu = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + LN_EPS).sqrt();
                inv_std[t] = is;
                for j in 0..d {
                    let xh = (row[j] - mu) * is;
                    xhat[t * d + j] = xh;
                    ln_out[t * d + j] = xh * p.ln_scale.data()[j] + p.ln_shift.data()[j];
                }
            }
        }

        let mut u1 = matmul(&ln_out, p.mlp_w1.data(), m, d, hidden);
        for t in 0..m {
            for j in 0..hidden {
                u1[t * hidden + j] = (u1[t * hidden + j] + p.mlp_b1.data()[j]).tanh();
            }
        }
        let t1 = u1; // tanh already applied
        let mut u2 = matmul(&t1, p.mlp_w2.data(), m, hidden, d);
        for t in 0..m {
            for j in 0..d {
                u2[t * d + j] += p.mlp_b2.data()[j];
            }
        }

        let base = g * m * d;
        for i in 0..m * d {
            out[base + i] = u2[i] + z[i];
        }
        tape.q[base..base + m * d].copy_from_slice(&q);
        tape.k[base..base + m * d].copy_from_slice(&k);
        tape.v[base..base + m * d].copy_from_slice(&v);
        tape.a[g * m * m..(g + 1) * m * m].copy_from_slice(&a);
        tape.z[base..base + m * d].copy_from_slice(&z);
        tape.xhat[base..base + m * d].copy_from_slice(&xhat);
        tape.inv_std[g * m..(g + 1) * m].copy_from_slice(&inv_std);
        tape.ln_out[base..base + m * d].copy_from_slice(&ln_out);
        tape.t1[g * m * hidden..(g + 1) * m * hidden].copy_from_slice(&t1);
    }

    (out, tape)
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the encoder input.
pub fn encoder_backward(
    tape: &EncoderTape,
    d_out: &[f64],
    d: usize,
    p: &EncoderParams,
    grads: &mut EncoderParams,
) -> Vec<f64> {
    let (groups, m) = (tape.groups, tape.tokens);
    let hidden = p.mlp_b1.numel();
    let scale = 1.0 / (d as f64).sqrt();
    let mut d_x = vec![0.0; tape.x.len()];

    for g in 0..groups {
        let base = g * m * d;
        let dout = &d_out[base..base + m * d];
        let xs = &tape.x[base..base + m * d];
        let q = &tape.q[base..base + m * d];
        let k = &tape.k[base..base + m * d];
        let v = &tape.v[base..base + m * d];
        let a = &tape.a[g * m * m..(g + 1) * m * m];
        let xhat = &tape.xhat[base..base + m * d];
        let inv_std = &tape.inv_std[g * m..(g + 1) * m];
        let ln_out = &tape.ln_out[base..base + m * d];
        let t1 = &tape.t1[g * m * hidden..(g + 1) * m * hidden];

        // out = u2 + z: both branches get dout.
        let du2 = dout;
        let mut dz = dout.to_vec();

        // u2 = t1·W2 + b2
        for (gw, dv) in grads
            .mlp_w2
            .data_mut()
            .iter_mut()
            .zip(matmul_at(t1, du2, m, hidden, d))
        {
            *gw += dv;
        }
        for t in 0..m {
            for j in 0..d {
                grads.mlp_b2.data_mut()[j] += du2[t * d + j];
            }
        }
        let dt1 = matmul_bt(du2, p.mlp_w2.data(), m, d, hidden);

        // t1 = tanh(ln_out·W1 + b1)
        let du1: Vec<f64> = dt1
            .iter()
            .zip(t1)
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        for (gw, dv) in grads
            .mlp_w1
            .data_mut()
            .iter_mut()
            .zip(matmul_at(ln_out, &du1, m, d, hidden))
        {
            *gw += dv;
        }
        for t in 0..m {
            for j in 0..hidden {
                grads.mlp_b1.data_mut()[j] += du1[t * hidden + j];
            }
        }
        let d_lnout = matmul_bt(&du1, p.mlp_w1.data(), m, hidden, d);

        // Layer norm (or its bypass).
        if tape.ln_bypass {
            for i in 0..m * d {
                dz[i] += d_lnout[i];
            }
        } else {
            for t in 0..m {
                let row_hat = &xhat[t * d..(t + 1) * d];
                let drow = &d_lnout[t * d..(t + 1) * d];
                let mut dxhat = vec![0.0; d];
                for j in 0..d {
                    grads.ln_scale.data_mut()[j] += drow[j] * row_hat[j];
                    grads.ln_shift.data_mut()[j] += drow[j];
                    dxhat[j] = drow[j] * p.ln_scale.data()[j];
                }
                let m1 = dxhat.iter().sum::<f64>() / d as f64;
                let m2 = dxhat
                    .iter()
                    .zip(row_hat)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / d as f64;
                for j in 0..d {
                    dz[t * d + j] += inv_std[t] * (dxhat[j] - m1 - row_hat[j] * m2);
                }
            }
        }

        // z = a·v + x
        let dh = &dz;
        let da = matmul_bt(dh, v, m, d, m);
        let dv = matmul_at(a, dh, m, m, d);

        // Softmax rows: ds_ij = a_ij (da_ij − Σ_k da_ik a_ik), then the 1/√D.
        let mut ds = vec![0.0; m * m];
        for i in 0..m {
            let arow = &a[i * m..(i + 1) * m];
            let drow = &da[i * m..(i + 1) * m];
            let dot: f64 = arow.iter().zip(drow).map(|(x, y)| x * y).sum();
            for j in 0..m {
                ds[i * m + j] = arow[j] * (drow[j] - dot) * scale;
            }
        }
        let dq = matmul(&ds, k, m, m, d);
        let dk = matmul_at(&ds, q, m, m, d);

        for (gw, dv2) in grads
            .w_q
            .data_mut()
            .iter_mut()
            .zip(matmul_at(xs, &dq, m, d, d))
        {
            *gw += dv2;
        }
        for (gw, dv2) in grads
            .w_k
            .data_mut()
            .iter_mut()
            .zip(matmul_at(xs, &dk, m, d, d))
        {
            *gw += dv2;
        }
        for (gw, dv2) in grads
            .w_v
            .data_mut()
            .iter_mut()
            .zip(matmul_at(xs, &dv, m, d, d))
        {
            *gw += dv2;
        }

        let dxq = matmul_bt(&dq, p.w_q.data(), m, d, d);
        let dxk = matmul_bt(&dk, p.w_k.data(), m, d, d);
        let dxv = matmul_bt(&dv, p.w_v.data(), m, d, d);
        let out_dx = &mut d_x[base..base + m * d];
        for i in 0..m * d {
            out_dx[i] = dz[i] + dxq[i] + dxk[i] + dxv[i];
        }
    }

    d_x
}

//! Plain-slice kernels shared by the autodiff graph and the standalone
//! reference operations.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Strided read-only view of a matrix inside a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Contiguous row-major matrix with `cols` columns.
    pub fn rm(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            offset: 0,
            rs: cols,
            cs: 1,
        }
    }

    /// Transposed view of a contiguous row-major matrix with `cols` columns.
    pub fn rm_t(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            offset: 0,
            rs: 1,
            cs: cols,
        }
    }

    pub fn at(self, offset: usize) -> Self {
        View {
            offset: self.offset + offset,
            ..self
        }
    }
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c`, where `c` is row-major with
/// row stride `rsc` starting at `c_off`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |v: &View<'_>, r: usize, cc: usize| v.offset + (r - 1) * v.rs + (cc - 1) * v.cs;
    if k > 0 {
        assert!(last(&a, m, k) < a.data.len(), "gemm: lhs view out of bounds");
        assert!(last(&b, k, n) < b.data.len(), "gemm: rhs view out of bounds");
    }
    assert!(c_off + (m - 1) * rsc + n - 1 < c.len(), "gemm: output view out of bounds");
    // SAFETY: every index touched by dgemm lies inside the slices, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            1,
        );
    }
}

/// Numerically stable in-place softmax. Entries equal to `-inf` receive
/// probability exactly zero.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = if *v == f64::NEG_INFINITY {
            0.0
        } else {
            (*v - max).exp()
        };
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Softmax of a finite vector.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// `-log softmax(v)[target]`, computed as `(max - v[target]) + ln_1p(rest)`
/// so that near-zero losses keep full relative precision.
pub(crate) fn neg_log_softmax(v: &[f64], target: usize) -> f64 {
    let (arg, max) = v
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
    let rest: f64 = v
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, x)| (x - max).exp())
        .sum();
    (max - v[target]) + rest.ln_1p()
}

/// Layer normalization of one vector: `gamma * (v - mean) / sqrt(var + eps) + beta`
/// with the biased variance.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != gamma.len() || v.len() != beta.len() {
        return Err(Error::shape(
            "layer_norm",
            format!("lengths {} / {} / {}", v.len(), gamma.len(), beta.len()),
        ));
    }
    if v.is_empty() {
        return Err(Error::Empty("layer_norm input"));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("layer_norm eps {eps}")));
    }
    let mut out = vec![0.0; v.len()];
    let mut xhat = vec![0.0; v.len()];
    layer_norm_row(v, gamma, beta, eps, &mut out, &mut xhat);
    Ok(out)
}

/// Writes the normalized row into `out` and the pre-affine values into
/// `xhat`; returns `1 / sqrt(var + eps)`.
pub(crate) fn layer_norm_row(
    v: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
    out: &mut [f64],
    xhat: &mut [f64],
) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    for i in 0..v.len() {
        xhat[i] = (v[i] - mean) * inv_std;
        out[i] = gamma[i] * xhat[i] + beta[i];
    }
    inv_std
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            index: target,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "cross_entropy" });
    }
    Ok(neg_log_softmax(logits, target))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One attention block: rows `[q_start, q_start + q_len)` of the queries
/// attend to rows `[k_start, k_start + k_len)` of the keys and values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnSegment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

impl AttnSegment {
    /// Self-attention over `len` rows starting at `start`.
    pub fn square(start: usize, len: usize) -> Self {
        AttnSegment {
            q_start: start,
            q_len: len,
            k_start: start,
            k_len: len,
        }
    }
}

/// Scaled dot-product attention with an optional row-major `n x m` mask,
/// `true` meaning "may attend".
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    let (n, dk) = (q.rows(), q.cols());
    let (m, dv) = (k.rows(), v.cols());
    if k.cols() != dk || v.rows() != m {
        return Err(Error::shape(
            "attention",
            format!(
                "Q {n}x{dk}, K {}x{}, V {}x{dv}",
                k.rows(),
                k.cols(),
                v.rows()
            ),
        ));
    }
    if let Some(mask) = mask {
        if mask.len() != n * m {
            return Err(Error::shape("attention", format!("mask has {} entries, need {}", mask.len(), n * m)));
        }
        if let Some(row) = (0..n).find(|&i| !mask[i * m..(i + 1) * m].iter().any(|&b| b)) {
            return Err(Error::FullyMaskedRow { row });
        }
    }
    let mut scores = vec![0.0; n * m];
    let scale = 1.0 / (dk as f64).sqrt();
    gemm(
        n,
        dk,
        m,
        scale,
        View::rm(q.data(), dk),
        View::rm_t(k.data(), dk),
        0.0,
        &mut scores,
        0,
        m,
    );
    if let Some(mask) = mask {
        for (s, &keep) in scores.iter_mut().zip(mask) {
            if !keep {
                *s = f64::NEG_INFINITY;
            }
        }
    }
    for row in scores.chunks_mut(m) {
        softmax_in_place(row);
    }
    let mut out = vec![0.0; n * dv];
    gemm(
        n,
        m,
        dv,
        1.0,
        View::rm(&scores, m),
        View::rm(v.data(), dv),
        0.0,
        &mut out,
        0,
        dv,
    );
    let out = Tensor::matrix(n, dv, out)?;
    if !out.is_finite() {
        return Err(Error::NonFinite { op: "attention" });
    }
    Ok(out)
}

/// Multi-head attention forward over a set of segments. `q`, `k`, `v` are
/// row-major with `width` columns split evenly across `heads`. Returns the
/// output and the attention probabilities (per segment, per head, `q_len x
/// k_len`, concatenated) for the backward pass.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mha_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    q_rows: usize,
    width: usize,
    heads: usize,
    segments: &[AttnSegment],
    causal: bool,
) -> (Vec<f64>, Vec<f64>) {
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let total: usize = segments.iter().map(|s| s.q_len * s.k_len).sum::<usize>() * heads;
    let mut probs = vec![0.0; total];
    let mut out = vec![0.0; q_rows * width];
    let mut off = 0;
    for seg in segments {
        let (nq, nk) = (seg.q_len, seg.k_len);
        for h in 0..heads {
            let p = &mut probs[off..off + nq * nk];
            gemm(
                nq,
                dh,
                nk,
                scale,
                View::rm(q, width).at(seg.q_start * width + h * dh),
                View::rm_t(k, width).at(seg.k_start * width + h * dh),
                0.0,
                p,
                0,
                nk,
            );
            for (i, row) in p.chunks_mut(nk).enumerate() {
                if causal {
                    for s in row.iter_mut().skip(i + 1) {
                        *s = f64::NEG_INFINITY;
                    }
                }
                softmax_in_place(row);
            }
            gemm(
                nq,
                nk,
                dh,
                1.0,
                View::rm(p, nk),
                View::rm(v, width).at(seg.k_start * width + h * dh),
                0.0,
                &mut out,
                seg.q_start * width + h * dh,
                width,
            );
            off += nq * nk;
        }
    }
    (out, probs)
}

/// Gradients of [`mha_forward`] with respect to `q`, `k` and `v`, accumulated
/// into the provided buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mha_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    d_out: &[f64],
    width: usize,
    heads: usize,
    segments: &[AttnSegment],
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut off = 0;
    let mut dp = Vec::new();
    for seg in segments {
        let (nq, nk) = (seg.q_len, seg.k_len);
        for h in 0..heads {
            let p = &probs[off..off + nq * nk];
            let col = h * dh;
            // dV += P^T dO
            gemm(
                nk,
                nq,
                dh,
                1.0,
                View::rm_t(p, nk),
                View::rm(d_out, width).at(seg.q_start * width + col),
                1.0,
                dv,
                seg.k_start * width + col,
                width,
            );
            // dP = dO V^T
            dp.clear();
            dp.resize(nq * nk, 0.0);
            gemm(
                nq,
                dh,
                nk,
                1.0,
                View::rm(d_out, width).at(seg.q_start * width + col),
                View::rm_t(v, width).at(seg.k_start * width + col),
                0.0,
                &mut dp,
                0,
                nk,
            );
            // dS = P * (dP - rowsum(dP * P)), scaled
            for (drow, prow) in dp.chunks_mut(nk).zip(p.chunks(nk)) {
                let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                for (d, &pp) in drow.iter_mut().zip(prow) {
                    *d = pp * (*d - dot) * scale;
                }
            }
            // dQ += dS K ; dK += dS^T Q
            gemm(
                nq,
                nk,
                dh,
                1.0,
                View::rm(&dp, nk),
                View::rm(k, width).at(seg.k_start * width + col),
                1.0,
                dq,
                seg.q_start * width + col,
                width,
            );
            gemm(
                nk,
                nq,
                dh,
                1.0,
                View::rm_t(&dp, nk),
                View::rm(q, width).at(seg.q_start * width + col),
                1.0,
                dk,
                seg.k_start * width + col,
                width,
            );
            off += nq * nk;
        }
    }
}

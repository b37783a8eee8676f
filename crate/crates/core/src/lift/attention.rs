//! Multi-head scaled dot-product attention with pre-norm residual wiring.
//!
//! All projections are bias-free square matrices drawn once from a seeded
//! stream, scaled by `1/sqrt(d)` so activations stay O(1). Layer
//! normalization carries no learned affine part; its epsilon guard maps the
//! all-zero token to exactly zero, which is what makes the zero-token
//! degenerate case an exact no-op for cross-attention.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::symmetric;

const LN_EPSILON: f64 = 1e-5;

/// Query/key/value/output projections of one attention module, row-major
/// `d x d`.
pub(crate) struct AttentionWeights {
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    wo: Vec<f64>,
    d: usize,
    n_heads: usize,
}

impl AttentionWeights {
    /// Draws the four projections in a fixed order from `rng`.
    pub(crate) fn draw(rng: &mut ChaCha8Rng, d: usize, n_heads: usize) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        let mut matrix = || -> Vec<f64> { (0..d * d).map(|_| symmetric(rng) * scale).collect() };
        let wq = matrix();
        let wk = matrix();
        let wv = matrix();
        let wo = matrix();
        Self {
            wq,
            wk,
            wv,
            wo,
            d,
            n_heads,
        }
    }
}

/// `out = W x` for a row-major `d x d` matrix.
fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (r, slot) in out.iter_mut().enumerate() {
        let row = &w[r * d..(r + 1) * d];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *slot = acc;
    }
}

/// Normalizes every `d`-sized row to zero mean and unit variance
/// (population, epsilon-guarded). The all-zero row maps to all zeros.
pub(crate) fn layer_norm_rows(rows: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len()];
    out.par_chunks_mut(d)
        .zip(rows.par_chunks(d))
        .for_each(|(dst, src)| {
            let n = d as f64;
            let mean = src.iter().sum::<f64>() / n;
            let var = src.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPSILON).sqrt();
            for (o, v) in dst.iter_mut().zip(src) {
                *o = (v - mean) * inv;
            }
        });
    out
}

/// Applies one pre-norm residual attention update in place:
/// `volume += MHA(LN(volume), kv_ln)`, with `kv_ln` already normalized.
///
/// Queries are processed in parallel; each query's reduction over keys runs
/// in a fixed sequential order, so the update is deterministic.
pub(crate) fn attention_residual(
    w: &AttentionWeights,
    volume: &mut [f64],
    kv_ln: &[f64],
    d: usize,
    n_heads: usize,
) {
    debug_assert_eq!(w.d, d);
    debug_assert_eq!(w.n_heads, n_heads);
    let n_kv = kv_ln.len() / d;
    let dh = d / n_heads;
    let inv_sqrt_dh = 1.0 / (dh as f64).sqrt();

    let q_ln = layer_norm_rows(volume, d);
    let mut k_proj = vec![0.0; kv_ln.len()];
    k_proj
        .par_chunks_mut(d)
        .zip(kv_ln.par_chunks(d))
        .for_each(|(out, row)| matvec(&w.wk, row, out));
    let mut v_proj = vec![0.0; kv_ln.len()];
    v_proj
        .par_chunks_mut(d)
        .zip(kv_ln.par_chunks(d))
        .for_each(|(out, row)| matvec(&w.wv, row, out));

    let mut delta = vec![0.0; volume.len()];
    delta
        .par_chunks_mut(d)
        .zip(q_ln.par_chunks(d))
        .for_each(|(out, q_row)| {
            let mut q_proj = vec![0.0; d];
            matvec(&w.wq, q_row, &mut q_proj);
            let mut context = vec![0.0; d];
            let mut scores = vec![0.0; n_kv];
            for h in 0..n_heads {
                let lo = h * dh;
                let hi = lo + dh;
                let q_h = &q_proj[lo..hi];
                let mut max_score = f64::NEG_INFINITY;
                for (j, slot) in scores.iter_mut().enumerate() {
                    let k_h = &k_proj[j * d + lo..j * d + hi];
                    let mut s = 0.0;
                    for (a, b) in q_h.iter().zip(k_h) {
                        s += a * b;
                    }
                    let s = s * inv_sqrt_dh;
                    *slot = s;
                    if s > max_score {
                        max_score = s;
                    }
                }
                let mut denom = 0.0;
                for slot in scores.iter_mut() {
                    let e = (*slot - max_score).exp();
                    *slot = e;
                    denom += e;
                }
                for (j, &e) in scores.iter().enumerate() {
                    let weight = e / denom;
                    let v_h = &v_proj[j * d + lo..j * d + hi];
                    for (c, v) in context[lo..hi].iter_mut().zip(v_h) {
                        *c += weight * v;
                    }
                }
            }
            matvec(&w.wo, &context, out);
        });

    for (x, dx) in volume.iter_mut().zip(&delta) {
        *x += dx;
    }
}

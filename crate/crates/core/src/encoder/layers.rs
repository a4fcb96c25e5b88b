//! Dense kernels for the encoder: same-padded convolution, pooling and their
//! adjoints. Tensors are channel-major `[c][y][x]` flat slices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Average,
}

/// Copy `input` (`c × h × w`) into a zero border of width `pad`.
pub(crate) fn pad(input: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            let src = &input[(ch * h + y) * w..(ch * h + y + 1) * w];
            let o = (ch * hp + y + pad) * wp + pad;
            out[o..o + w].copy_from_slice(src);
        }
    }
    out
}

pub(crate) struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvShape {
    fn padded(&self) -> (usize, usize) {
        (self.h + self.k - 1, self.w + self.k - 1)
    }
}

/// `out[o] = bias[o] + Σ_i weight[o,i] ⋆ padded[i]`.
pub(crate) fn conv_forward(
    s: &ConvShape,
    padded: &[f64],
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let (hp, wp) = s.padded();
    let (h, w, k) = (s.h, s.w, s.k);
    for o in 0..s.c_out {
        let out_o = &mut out[o * h * w..(o + 1) * h * w];
        out_o.fill(bias[o]);
        for i in 0..s.c_in {
            let in_i = &padded[i * hp * wp..(i + 1) * hp * wp];
            let w_oi = &weight[(o * s.c_in + i) * k * k..(o * s.c_in + i + 1) * k * k];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w_oi[ky * k + kx];
                    for y in 0..h {
                        let src = &in_i[(y + ky) * wp + kx..(y + ky) * wp + kx + w];
                        let dst = &mut out_o[y * w..(y + 1) * w];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulate weight/bias gradients and (optionally) the gradient w.r.t. the
/// padded input, given `d_out` (gradient w.r.t. the conv output).
pub(crate) fn conv_backward(
    s: &ConvShape,
    padded: &[f64],
    weight: &[f64],
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    mut d_padded: Option<&mut [f64]>,
) {
    let (hp, wp) = s.padded();
    let (h, w, k) = (s.h, s.w, s.k);
    for o in 0..s.c_out {
        let d_o = &d_out[o * h * w..(o + 1) * h * w];
        d_bias[o] += d_o.iter().sum::<f64>();
        for i in 0..s.c_in {
            let in_i = &padded[i * hp * wp..(i + 1) * hp * wp];
            let base = (o * s.c_in + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let src = &in_i[(y + ky) * wp + kx..(y + ky) * wp + kx + w];
                        let g = &d_o[y * w..(y + 1) * w];
                        acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    d_weight[base + ky * k + kx] += acc;
                }
            }
            if let Some(dp) = d_padded.as_deref_mut() {
                let dp_i = &mut dp[i * hp * wp..(i + 1) * hp * wp];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[base + ky * k + kx];
                        for y in 0..h {
                            let dst = &mut dp_i[(y + ky) * wp + kx..(y + ky) * wp + kx + w];
                            let g = &d_o[y * w..(y + 1) * w];
                            for (d, v) in dst.iter_mut().zip(g) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Strip the zero border added by [`pad`].
pub(crate) fn crop(padded: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            let o = (ch * hp + y + pad) * wp + pad;
            out.extend_from_slice(&padded[o..o + w]);
        }
    }
    out
}

/// Non-overlapping `p × p` pooling. For max pooling returns the flat source
/// index of each output's winner.
pub(crate) fn pool_forward(
    kind: PoolKind,
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    p: usize,
) -> (Vec<f64>, Vec<u32>) {
    let (ho, wo) = (h / p, w / p);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut argmax = Vec::new();
    let norm = 1.0 / (p * p) as f64;
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                match kind {
                    PoolKind::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = 0;
                        for dy in 0..p {
                            for dx in 0..p {
                                let idx = (ch * h + y * p + dy) * w + x * p + dx;
                                if input[idx] > best {
                                    best = input[idx];
                                    at = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(at as u32);
                    }
                    PoolKind::Average => {
                        let mut acc = 0.0;
                        for dy in 0..p {
                            let row = (ch * h + y * p + dy) * w + x * p;
                            acc += input[row..row + p].iter().sum::<f64>();
                        }
                        out.push(acc * norm);
                    }
                }
            }
        }
    }
    (out, argmax)
}

pub(crate) fn pool_backward(
    kind: PoolKind,
    d_out: &[f64],
    argmax: &[u32],
    c: usize,
    h: usize,
    w: usize,
    p: usize,
) -> Vec<f64> {
    let (ho, wo) = (h / p, w / p);
    let mut d_in = vec![0.0; c * h * w];
    match kind {
        PoolKind::Max => {
            for (g, &src) in d_out.iter().zip(argmax) {
                d_in[src as usize] += g;
            }
        }
        PoolKind::Average => {
            let norm = 1.0 / (p * p) as f64;
            for ch in 0..c {
                for y in 0..ho {
                    for x in 0..wo {
                        let g = d_out[(ch * ho + y) * wo + x] * norm;
                        for dy in 0..p {
                            let row = (ch * h + y * p + dy) * w + x * p;
                            for v in &mut d_in[row..row + p] {
                                *v += g;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

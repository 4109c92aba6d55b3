//! Shared encoder: embedding slots -> one tanh hidden layer -> linear head.
//!
//! The input vector concatenates, in order: condition token embeddings in
//! left-aligned slots, the same condition right-aligned (so "k-th token from
//! the end" has a fixed column), the mean condition embedding, the last few
//! prefix tokens right-aligned, the mean prefix embedding, and a one-hot of
//! the next-token position. Everything downstream is dense f64 math.

use super::{ModelArch, ParameterVector, PrefixState};

/// Parameter offsets for one model. `out_dim` is vocab_size for the
/// generator head and 1 for the discriminator head.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub embed: usize,
    pub w1: usize,
    pub b1: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub input_dim: usize,
    pub out_dim: usize,
    pub total: usize,
}

impl ModelArch {
    pub(crate) fn layout(&self, out_dim: usize) -> Layout {
        let d = self.input_dim();
        let embed = 0;
        let w1 = embed + self.vocab_size * self.embed_dim;
        let b1 = w1 + self.hidden_dim * d;
        let w_out = b1 + self.hidden_dim;
        let b_out = w_out + out_dim * self.hidden_dim;
        Layout { embed, w1, b1, w_out, b_out, input_dim: d, out_dim, total: b_out + out_dim }
    }

    pub fn generator_param_count(&self) -> usize {
        self.layout(self.vocab_size).total
    }

    pub fn discriminator_param_count(&self) -> usize {
        self.layout(1).total
    }
}

/// Which embedding rows flow into which input columns, and with what weight.
/// `(column, token, weight)` means `x[column..column+E] += weight * emb[token]`.
pub(crate) struct InputSpans {
    pub contribs: Vec<(usize, usize, f64)>,
    pub pos_index: usize,
}

pub(crate) fn input_spans(arch: &ModelArch, state: &PrefixState) -> InputSpans {
    let e = arch.embed_dim;
    let c = arch.cond_slots;
    let cond = state.condition.token_ids();
    let prefix = &state.prefix;
    let m = cond.len();
    let t = prefix.len();
    let mut contribs = Vec::with_capacity(2 * m.min(c) + m + t.min(arch.prefix_slots) + t);

    for (i, &tok) in cond.iter().take(c).enumerate() {
        contribs.push((i * e, tok, 1.0));
    }
    let right_base = c * e;
    for j in 0..m.min(c) {
        contribs.push((right_base + j * e, cond[m - 1 - j], 1.0));
    }
    let mean_base = 2 * c * e;
    for &tok in cond {
        contribs.push((mean_base, tok, 1.0 / m as f64));
    }
    let recent_base = (2 * c + 1) * e;
    for j in 0..t.min(arch.prefix_slots) {
        contribs.push((recent_base + j * e, prefix[t - 1 - j], 1.0));
    }
    let prefix_mean_base = (2 * c + 1 + arch.prefix_slots) * e;
    if t > 0 {
        for &tok in prefix {
            contribs.push((prefix_mean_base, tok, 1.0 / t as f64));
        }
    }
    let pos_base = (2 * c + 2 + arch.prefix_slots) * e;
    let pos_index = pos_base + t.min(arch.max_positions - 1);
    InputSpans { contribs, pos_index }
}

pub(crate) struct ForwardCache {
    pub spans: InputSpans,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn forward_hidden(
    arch: &ModelArch,
    layout: &Layout,
    values: &[f64],
    state: &PrefixState,
) -> ForwardCache {
    let spans = input_spans(arch, state);
    let e = arch.embed_dim;
    let d = layout.input_dim;
    let mut x = vec![0.0; d];
    for &(col, tok, w) in &spans.contribs {
        let row = layout.embed + tok * e;
        for k in 0..e {
            x[col + k] += w * values[row + k];
        }
    }
    x[spans.pos_index] = 1.0;

    let mut h = vec![0.0; arch.hidden_dim];
    for j in 0..arch.hidden_dim {
        let row = layout.w1 + j * d;
        let mut z = values[layout.b1 + j];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                z += values[row + k] * xk;
            }
        }
        h[j] = z.tanh();
    }
    ForwardCache { spans, x, h }
}

pub(crate) fn output_logits(layout: &Layout, values: &[f64], h: &[f64]) -> Vec<f64> {
    let mut logits = vec![0.0; layout.out_dim];
    for (v, logit) in logits.iter_mut().enumerate() {
        let row = layout.w_out + v * h.len();
        let mut z = values[layout.b_out + v];
        for (j, &hj) in h.iter().enumerate() {
            z += values[row + j] * hj;
        }
        *logit = z;
    }
    logits
}

/// Accumulates gradients for one forward pass, given the loss gradient with
/// respect to the output logits.
pub(crate) fn backward_from_dlogits(
    arch: &ModelArch,
    layout: &Layout,
    params: &mut ParameterVector,
    cache: &ForwardCache,
    dlogits: &[f64],
) {
    debug_assert_eq!(dlogits.len(), layout.out_dim);
    let hdim = arch.hidden_dim;
    let d = layout.input_dim;
    let e = arch.embed_dim;

    let mut dh = vec![0.0; hdim];
    {
        let values = params.values();
        for (v, &dl) in dlogits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            let row = layout.w_out + v * hdim;
            for (j, dhj) in dh.iter_mut().enumerate() {
                *dhj += values[row + j] * dl;
            }
        }
    }
    {
        let grads = params.grads_mut();
        for (v, &dl) in dlogits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            grads[layout.b_out + v] += dl;
            let row = layout.w_out + v * hdim;
            for (j, &hj) in cache.h.iter().enumerate() {
                grads[row + j] += dl * hj;
            }
        }
    }

    let mut dhpre = vec![0.0; hdim];
    for j in 0..hdim {
        dhpre[j] = dh[j] * (1.0 - cache.h[j] * cache.h[j]);
    }

    let mut dx = vec![0.0; d];
    {
        let values = params.values();
        for (j, &dz) in dhpre.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let row = layout.w1 + j * d;
            for (k, dxk) in dx.iter_mut().enumerate() {
                *dxk += values[row + k] * dz;
            }
        }
    }
    {
        let grads = params.grads_mut();
        for (j, &dz) in dhpre.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grads[layout.b1 + j] += dz;
            let row = layout.w1 + j * d;
            for (k, &xk) in cache.x.iter().enumerate() {
                if xk != 0.0 {
                    grads[row + k] += dz * xk;
                }
            }
        }
        for &(col, tok, w) in &cache.spans.contribs {
            let row = layout.embed + tok * e;
            for k in 0..e {
                grads[row + k] += w * dx[col + k];
            }
        }
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

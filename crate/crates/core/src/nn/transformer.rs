//! Sequence encoder: input projection with learned positions, post-norm
//! encoder layers, mean pooling over time.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{apply_mask, dropout_mask, relu, relu_backward, LayerNorm, Linear, LnCache};
use super::params::{Init, Layout, Slot};

/// Row-stochastic attention weights: `[layer][head]`, each `t × t` row-major.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionMaps {
    pub seq_len: usize,
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl AttentionMaps {
    pub fn row(&self, layer: usize, head: usize, i: usize) -> &[f64] {
        let t = self.seq_len;
        &self.layers[layer][head][i * t..(i + 1) * t]
    }

    /// Nested `[layer][head][row][col]` form for export.
    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let t = self.seq_len;
        self.layers
            .iter()
            .map(|heads| heads.iter().map(|a| a.chunks(t).map(<[f64]>::to_vec).collect()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhaCache {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// per head, `t × t`
    pub attn: Vec<Vec<f64>>,
    pub ctx: Vec<f64>,
}

/// In-place numerically stable softmax.
pub fn softmax(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v /= s);
}

impl MultiHeadAttention {
    pub fn new(layout: &mut Layout, name: &str, d: usize, heads: usize) -> Self {
        MultiHeadAttention {
            q: Linear::new(layout, &format!("{name}.q"), d, d),
            k: Linear::new(layout, &format!("{name}.k"), d, d),
            v: Linear::new(layout, &format!("{name}.v"), d, d),
            o: Linear::new(layout, &format!("{name}.o"), d, d),
            heads,
            d,
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, MhaCache) {
        let d = self.d;
        let t = x.len() / d;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward(p, x);
        let k = self.k.forward(p, x);
        let v = self.v.forward(p, x);
        let mut ctx = vec![0.0; t * d];
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let c0 = h * dh;
            let mut a = vec![0.0; t * t];
            for i in 0..t {
                let qi = &q[i * d + c0..i * d + c0 + dh];
                let row = &mut a[i * t..(i + 1) * t];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = scale * super::layers::dot(qi, &k[j * d + c0..j * d + c0 + dh]);
                }
                softmax(row);
                let out = &mut ctx[i * d + c0..i * d + c0 + dh];
                for j in 0..t {
                    super::layers::axpy(row[j], &v[j * d + c0..j * d + c0 + dh], out);
                }
            }
            attn.push(a);
        }
        let y = self.o.forward(p, &ctx);
        (y, MhaCache { x: x.to_vec(), q, k, v, attn, ctx })
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], c: &MhaCache, dy: &[f64]) -> Vec<f64> {
        let d = self.d;
        let t = c.x.len() / d;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dctx = self.o.backward(p, grads, &c.ctx, dy);
        let mut dq = vec![0.0; t * d];
        let mut dk = vec![0.0; t * d];
        let mut dv = vec![0.0; t * d];
        for h in 0..self.heads {
            let c0 = h * dh;
            let a = &c.attn[h];
            for i in 0..t {
                let go = &dctx[i * d + c0..i * d + c0 + dh];
                let arow = &a[i * t..(i + 1) * t];
                let mut da = vec![0.0; t];
                for j in 0..t {
                    da[j] = super::layers::dot(go, &c.v[j * d + c0..j * d + c0 + dh]);
                    super::layers::axpy(arow[j], go, &mut dv[j * d + c0..j * d + c0 + dh]);
                }
                let inner: f64 = (0..t).map(|j| arow[j] * da[j]).sum();
                for j in 0..t {
                    let ds = arow[j] * (da[j] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let (kj, qi) = (&c.k[j * d + c0..j * d + c0 + dh], &c.q[i * d + c0..i * d + c0 + dh]);
                    super::layers::axpy(ds, kj, &mut dq[i * d + c0..i * d + c0 + dh]);
                    super::layers::axpy(ds, qi, &mut dk[j * d + c0..j * d + c0 + dh]);
                }
            }
        }
        let mut dx = self.q.backward(p, grads, &c.x, &dq);
        for (lin, g) in [(&self.k, &dk), (&self.v, &dv)] {
            let part = lin.backward(p, grads, &c.x, g);
            dx.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub mha: MhaCache,
    pub ln1: LnCache,
    pub x1: Vec<f64>,
    pub ff_pre: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub ff_hidden: Vec<f64>,
    pub ln2: LnCache,
}

impl EncoderLayer {
    pub fn new(layout: &mut Layout, name: &str, d: usize, heads: usize, d_ffn: usize) -> Self {
        EncoderLayer {
            attn: MultiHeadAttention::new(layout, &format!("{name}.attn"), d, heads),
            ln1: LayerNorm::new(layout, &format!("{name}.ln1"), d),
            ff1: Linear::new(layout, &format!("{name}.ff1"), d, d_ffn),
            ff2: Linear::new(layout, &format!("{name}.ff2"), d_ffn, d),
            ln2: LayerNorm::new(layout, &format!("{name}.ln2"), d),
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64], dropout: f64, rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, LayerCache) {
        let (a, mha) = self.attn.forward(p, x);
        let r1: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u + v).collect();
        let (x1, ln1) = self.ln1.forward(p, &r1);
        let ff_pre = self.ff1.forward(p, &x1);
        let mask = dropout_mask(rng, ff_pre.len(), dropout);
        let ff_hidden = apply_mask(&relu(&ff_pre), &mask);
        let f2 = self.ff2.forward(p, &ff_hidden);
        let r2: Vec<f64> = x1.iter().zip(&f2).map(|(u, v)| u + v).collect();
        let (y, ln2) = self.ln2.forward(p, &r2);
        (y, LayerCache { mha, ln1, x1, ff_pre, mask, ff_hidden, ln2 })
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], c: &LayerCache, dy: &[f64]) -> Vec<f64> {
        let dr2 = self.ln2.backward(p, grads, &c.ln2, dy);
        let dh = apply_mask(&self.ff2.backward(p, grads, &c.ff_hidden, &dr2), &c.mask);
        let dpre = relu_backward(&c.ff_pre, &dh);
        let mut dx1 = self.ff1.backward(p, grads, &c.x1, &dpre);
        dx1.iter_mut().zip(&dr2).for_each(|(a, b)| *a += b);
        let dr1 = self.ln1.backward(p, grads, &c.ln1, &dx1);
        let mut dx = self.attn.backward(p, grads, &c.mha, &dr1);
        dx.iter_mut().zip(&dr1).for_each(|(a, b)| *a += b);
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEncoder {
    pub input: Linear,
    /// `seq_len × d`
    pub pos: Slot,
    pub layers: Vec<EncoderLayer>,
    pub seq_len: usize,
    pub d: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCache {
    pub seq: Vec<f64>,
    pub layers: Vec<LayerCache>,
}

impl SequenceEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: &mut Layout,
        name: &str,
        d_in: usize,
        seq_len: usize,
        d: usize,
        heads: usize,
        d_ffn: usize,
        n_layers: usize,
        dropout: f64,
    ) -> Self {
        let input = Linear::new(layout, &format!("{name}.input"), d_in, d);
        let pos = layout.add(format!("{name}.pos"), &[seq_len, d], Init::Normal(0.02));
        let layers = (0..n_layers).map(|i| EncoderLayer::new(layout, &format!("{name}.layer{i}"), d, heads, d_ffn)).collect();
        SequenceEncoder { input, pos, layers, seq_len, d, dropout }
    }

    /// Pooled `d`-vector plus attention maps for a `seq_len × d_in` input.
    pub fn forward(&self, p: &[f64], seq: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, EncoderCache, AttentionMaps) {
        let mut h = self.input.forward(p, seq);
        h.iter_mut().zip(self.pos.of(p)).for_each(|(a, b)| *a += b);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut maps = AttentionMaps { seq_len: self.seq_len, layers: Vec::with_capacity(self.layers.len()) };
        for layer in &self.layers {
            let (next, c) = layer.forward(p, &h, self.dropout, rng.as_deref_mut());
            maps.layers.push(c.mha.attn.clone());
            caches.push(c);
            h = next;
        }
        let mut pooled = vec![0.0; self.d];
        for row in h.chunks_exact(self.d) {
            pooled.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        pooled.iter_mut().for_each(|v| *v /= self.seq_len as f64);
        (pooled, EncoderCache { seq: seq.to_vec(), layers: caches }, maps)
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], c: &EncoderCache, dpooled: &[f64]) {
        let inv = 1.0 / self.seq_len as f64;
        let mut dh: Vec<f64> = (0..self.seq_len).flat_map(|_| dpooled.iter().map(|g| g * inv)).collect();
        for (layer, lc) in self.layers.iter().zip(&c.layers).rev() {
            dh = layer.backward(p, grads, lc, &dh);
        }
        self.pos.of_mut(grads).iter_mut().zip(&dh).for_each(|(a, b)| *a += b);
        self.input.backward(p, grads, &c.seq, &dh);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_uniform_rows() {
        let mut l = Layout::default();
        let enc = SequenceEncoder::new(&mut l, "s", 4, 60, 8, 2, 16, 2, 0.0);
        let mut p = l.init(1);
        // zero query weights and biases make every logit equal
        for layer in &enc.layers {
            layer.attn.q.w.of_mut(&mut p).iter_mut().for_each(|v| *v = 0.0);
            layer.attn.q.b.of_mut(&mut p).iter_mut().for_each(|v| *v = 0.0);
        }
        let seq: Vec<f64> = (0..240).map(|i| (i as f64 * 0.37).sin()).collect();
        let (_, _, maps) = enc.forward(&p, &seq, None);
        for layer in &maps.layers {
            for head in layer {
                assert!(head.iter().all(|a| (a - 1.0 / 60.0).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn two_step_attention_matches_closed_form() {
        let mut l = Layout::default();
        let mha = MultiHeadAttention::new(&mut l, "a", 2, 1);
        let mut p = vec![0.0; l.len];
        // identity projections
        for lin in [&mha.q, &mha.k, &mha.v, &mha.o] {
            lin.w.of_mut(&mut p).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }
        let x = [1.0, 0.0, 0.5, 2.0];
        let (_, c) = mha.forward(&p, &x);
        let s = 1.0 / 2f64.sqrt();
        // row 0: logits q0·k0 = 1, q0·k1 = 0.5
        let (l00, l01) = (s * 1.0, s * 0.5);
        let a00 = l00.exp() / (l00.exp() + l01.exp());
        // row 1: q1·k0 = 0.5, q1·k1 = 4.25
        let (l10, l11) = (s * 0.5, s * 4.25);
        let a10 = l10.exp() / (l10.exp() + l11.exp());
        assert!((c.attn[0][0] - a00).abs() < 1e-12);
        assert!((c.attn[0][1] - (1.0 - a00)).abs() < 1e-12);
        assert!((c.attn[0][2] - a10).abs() < 1e-12);
        assert!((c.attn[0][3] - (1.0 - a10)).abs() < 1e-12);
    }
}

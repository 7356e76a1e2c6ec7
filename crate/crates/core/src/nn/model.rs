//! The fused regressor: structured MLP, one CNN per image kind, sequence
//! encoder, concatenation, and a two-output head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Cnn, CnnCache};
use super::layers::{apply_mask, dropout_mask, relu, relu_backward, LayerNorm, Linear, LnCache};
use super::params::Layout;
use super::transformer::{AttentionMaps, EncoderCache, SequenceEncoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_struct_in: usize,
    pub seq_len: usize,
    pub d_seq_in: usize,
    pub d_mlp: usize,
    pub d_seq_hidden: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub dropout: f64,
    pub d_img: usize,
    pub img_channels: usize,
    pub cnn_channels: Vec<usize>,
    pub fusion_hidden: usize,
    pub out_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_struct_in: crate::features::N_SLOTS,
            seq_len: 60,
            d_seq_in: 4,
            d_mlp: 128,
            d_seq_hidden: 128,
            n_layers: 2,
            n_heads: 4,
            d_ffn: 256,
            dropout: 0.1,
            d_img: 512,
            img_channels: 3,
            cnn_channels: vec![16, 32, 64, 128],
            fusion_hidden: 256,
            out_dim: 2,
        }
    }
}

impl ModelConfig {
    /// Small widths that train in seconds on one core.
    pub fn desk() -> Self {
        ModelConfig {
            d_mlp: 32,
            d_seq_hidden: 16,
            n_heads: 2,
            d_ffn: 32,
            d_img: 32,
            cnn_channels: vec![8, 16, 16, 32],
            fusion_hidden: 64,
            ..Default::default()
        }
    }

    /// Every hidden width at most 8 and a 5-step sequence, for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            seq_len: 5,
            d_mlp: 4,
            d_seq_hidden: 4,
            n_layers: 2,
            n_heads: 2,
            d_ffn: 8,
            d_img: 4,
            cnn_channels: vec![2, 3, 4, 4],
            fusion_hidden: 8,
            ..Default::default()
        }
    }

    pub fn fusion_width(&self) -> usize {
        self.d_mlp + self.d_seq_hidden + 2 * self.d_img
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_owned()));
        if self.out_dim != 2 {
            return bad("out_dim must be 2 (time offset, duration)");
        }
        if self.n_heads == 0 || !self.d_seq_hidden.is_multiple_of(self.n_heads) {
            return bad("d_seq_hidden must be divisible by n_heads");
        }
        if self.cnn_channels.is_empty() || self.cnn_channels.contains(&0) {
            return bad("cnn_channels must be a non-empty list of positive widths");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        let widths = [self.d_struct_in, self.seq_len, self.d_seq_in, self.d_mlp, self.d_seq_hidden, self.d_ffn, self.d_img];
        if widths.contains(&0) || self.fusion_hidden == 0 || self.img_channels == 0 {
            return bad("all layer widths must be positive");
        }
        Ok(())
    }
}

/// Standardized network input for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub structured: Vec<f64>,
    /// `seq_len × d_seq_in`
    pub sequence: Vec<f64>,
    /// channel-major `img_channels × img_h × img_w`
    pub history: Vec<f64>,
    pub snapshot: Vec<f64>,
    pub img_h: usize,
    pub img_w: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// dropout active; the mask stream is fully determined by the seed
    Train { mask_seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub layout: Layout,
    s1: Linear,
    s1_ln: LayerNorm,
    s2: Linear,
    s2_ln: LayerNorm,
    cnn_hist: Cnn,
    cnn_snap: Cnn,
    seq: SequenceEncoder,
    fuse: Linear,
    fuse_ln: LayerNorm,
    head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct DenseBlockCache {
    x: Vec<f64>,
    ln: LnCache,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    s1: DenseBlockCache,
    s2: DenseBlockCache,
    hist: CnnCache,
    snap: CnnCache,
    seq: EncoderCache,
    fuse: DenseBlockCache,
    fused_out: Vec<f64>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over every ReLU in the network.
    pub fn relu_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        let mut see = |v: &[f64]| v.iter().for_each(|z| m = m.min(z.abs()));
        for b in [&self.s1, &self.s2, &self.fuse] {
            see(&b.pre);
        }
        for c in [&self.hist, &self.snap] {
            c.pre.iter().for_each(|z| see(z));
        }
        self.seq.layers.iter().for_each(|l| see(&l.ff_pre));
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// standardized (offset, duration)
    pub out: [f64; 2],
    pub attention: AttentionMaps,
    pub cache: ForwardCache,
}

/// Linear → LayerNorm → ReLU → dropout.
fn dense_block(
    lin: &Linear,
    ln: &LayerNorm,
    p: &[f64],
    x: &[f64],
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Vec<f64>, DenseBlockCache) {
    let (pre, lnc) = ln.forward(p, &lin.forward(p, x));
    let mask = dropout_mask(rng, pre.len(), dropout);
    let y = apply_mask(&relu(&pre), &mask);
    (y, DenseBlockCache { x: x.to_vec(), ln: lnc, pre, mask })
}

fn dense_block_backward(lin: &Linear, ln: &LayerNorm, p: &[f64], g: &mut [f64], c: &DenseBlockCache, dy: &[f64]) -> Vec<f64> {
    let d = relu_backward(&c.pre, &apply_mask(dy, &c.mask));
    let d = ln.backward(p, g, &c.ln, &d);
    lin.backward(p, g, &c.x, &d)
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut l = Layout::default();
        let s1 = Linear::new(&mut l, "struct.fc1", cfg.d_struct_in, cfg.d_mlp);
        let s1_ln = LayerNorm::new(&mut l, "struct.ln1", cfg.d_mlp);
        let s2 = Linear::new(&mut l, "struct.fc2", cfg.d_mlp, cfg.d_mlp);
        let s2_ln = LayerNorm::new(&mut l, "struct.ln2", cfg.d_mlp);
        let cnn_hist = Cnn::new(&mut l, "history", cfg.img_channels, &cfg.cnn_channels, cfg.d_img);
        let cnn_snap = Cnn::new(&mut l, "snapshot", cfg.img_channels, &cfg.cnn_channels, cfg.d_img);
        let seq = SequenceEncoder::new(
            &mut l,
            "sequence",
            cfg.d_seq_in,
            cfg.seq_len,
            cfg.d_seq_hidden,
            cfg.n_heads,
            cfg.d_ffn,
            cfg.n_layers,
            cfg.dropout,
        );
        let fuse = Linear::new(&mut l, "fusion.fc", cfg.fusion_width(), cfg.fusion_hidden);
        let fuse_ln = LayerNorm::new(&mut l, "fusion.ln", cfg.fusion_hidden);
        let head = Linear::new(&mut l, "head", cfg.fusion_hidden, cfg.out_dim);
        Ok(Model { cfg: cfg.clone(), layout: l, s1, s1_ln, s2, s2_ln, cnn_hist, cnn_snap, seq, fuse, fuse_ln, head })
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.layout.init(seed)
    }

    /// Output layer slots, for tests that pin the head.
    pub fn head(&self) -> &Linear {
        &self.head
    }

    fn check(&self, p: &[f64], x: &ModelInput) -> Result<()> {
        let c = &self.cfg;
        let img = c.img_channels * x.img_h * x.img_w;
        if p.len() != self.layout.len {
            return Err(Error::SchemaMismatch(format!("{} parameters, model expects {}", p.len(), self.layout.len)));
        }
        if x.structured.len() != c.d_struct_in {
            return Err(Error::SchemaMismatch(format!("{} structured features, model expects {}", x.structured.len(), c.d_struct_in)));
        }
        if x.sequence.len() != c.seq_len * c.d_seq_in {
            return Err(Error::SchemaMismatch(format!(
                "sequence of {} values, model expects {} × {}",
                x.sequence.len(),
                c.seq_len,
                c.d_seq_in
            )));
        }
        if x.img_h == 0 || x.img_w == 0 || x.history.len() != img || x.snapshot.len() != img {
            return Err(Error::SchemaMismatch("image buffers do not match their declared shape".into()));
        }
        Ok(())
    }

    pub fn forward(&self, p: &[f64], x: &ModelInput, mode: Mode) -> Result<Forward> {
        self.check(p, x)?;
        let mut rng = match mode {
            Mode::Eval => None,
            Mode::Train { mask_seed } => Some(ChaCha8Rng::seed_from_u64(mask_seed)),
        };
        let drop = self.cfg.dropout;
        let (h1, s1) = dense_block(&self.s1, &self.s1_ln, p, &x.structured, drop, rng.as_mut());
        let (hs, s2) = dense_block(&self.s2, &self.s2_ln, p, &h1, drop, rng.as_mut());
        let (hh, hist) = self.cnn_hist.forward(p, &x.history, x.img_h, x.img_w);
        let (hn, snap) = self.cnn_snap.forward(p, &x.snapshot, x.img_h, x.img_w);
        let (hq, seq, attention) = self.seq.forward(p, &x.sequence, rng.as_mut());
        let mut fused = Vec::with_capacity(self.cfg.fusion_width());
        for part in [&hs, &hq, &hh, &hn] {
            fused.extend_from_slice(part);
        }
        let (hf, fuse) = dense_block(&self.fuse, &self.fuse_ln, p, &fused, drop, rng.as_mut());
        let y = self.head.forward(p, &hf);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model output"));
        }
        Ok(Forward {
            out: [y[0], y[1]],
            attention,
            cache: ForwardCache { s1, s2, hist, snap, seq, fuse, fused_out: hf },
        })
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(out).
    pub fn backward(&self, p: &[f64], c: &ForwardCache, dout: [f64; 2], grads: &mut [f64]) {
        let dhf = self.head.backward(p, grads, &c.fused_out, &dout);
        let dfused = dense_block_backward(&self.fuse, &self.fuse_ln, p, grads, &c.fuse, &dhf);
        let (m, q, i) = (self.cfg.d_mlp, self.cfg.d_seq_hidden, self.cfg.d_img);
        let (ds, rest) = dfused.split_at(m);
        let (dq, rest) = rest.split_at(q);
        let (dh, dn) = rest.split_at(i);
        self.cnn_snap.backward(p, grads, &c.snap, dn);
        self.cnn_hist.backward(p, grads, &c.hist, dh);
        self.seq.backward(p, grads, &c.seq, dq);
        let d1 = dense_block_backward(&self.s2, &self.s2_ln, p, grads, &c.s2, ds);
        dense_block_backward(&self.s1, &self.s1_ln, p, grads, &c.s1, &d1);
    }
}

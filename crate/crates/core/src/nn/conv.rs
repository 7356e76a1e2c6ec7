//! Shallow image encoder: 3×3 stride-2 convolutions, global average pool,
//! linear projection.

use super::layers::{relu, relu_backward, Linear};
use super::params::{Init, Layout, Slot};

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;

pub fn out_size(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `cout × cin × 3 × 3`
    pub w: Slot,
    pub b: Slot,
    pub cin: usize,
    pub cout: usize,
}

impl Conv2d {
    pub fn new(layout: &mut Layout, name: &str, cin: usize, cout: usize) -> Self {
        let fan_in = cin * KERNEL * KERNEL;
        let w = layout.add(format!("{name}.weight"), &[cout, cin, KERNEL, KERNEL], Init::FanIn(fan_in));
        let b = layout.add(format!("{name}.bias"), &[cout], Init::Zeros);
        Conv2d { w, b, cin, cout }
    }

    /// Input `cin × h × w`, output `cout × out_size(h) × out_size(w)`.
    pub fn forward(&self, p: &[f64], x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (wt, b) = (self.w.of(p), self.b.of(p));
        let (ho, wo) = (out_size(h), out_size(w));
        let mut y = vec![0.0; self.cout * ho * wo];
        for co in 0..self.cout {
            let yc = &mut y[co * ho * wo..(co + 1) * ho * wo];
            yc.iter_mut().for_each(|v| *v = b[co]);
            for ci in 0..self.cin {
                let xc = &x[ci * h * w..(ci + 1) * h * w];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let k = wt[((co * self.cin + ci) * KERNEL + ky) * KERNEL + kx];
                        for oy in 0..ho {
                            let Some(iy) = (oy * STRIDE + ky).checked_sub(PAD).filter(|&iy| iy < h) else { continue };
                            let xrow = &xc[iy * w..(iy + 1) * w];
                            let yrow = &mut yc[oy * wo..(oy + 1) * wo];
                            for (ox, yv) in yrow.iter_mut().enumerate() {
                                if let Some(ix) = (ox * STRIDE + kx).checked_sub(PAD).filter(|&ix| ix < w) {
                                    *yv += k * xrow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], x: &[f64], h: usize, w: usize, dy: &[f64]) -> Vec<f64> {
        let wt = self.w.of(p);
        let (ho, wo) = (out_size(h), out_size(w));
        let mut dx = vec![0.0; x.len()];
        for co in 0..self.cout {
            let dyc = &dy[co * ho * wo..(co + 1) * ho * wo];
            self.b.of_mut(grads)[co] += dyc.iter().sum::<f64>();
            for ci in 0..self.cin {
                let xc = &x[ci * h * w..(ci + 1) * h * w];
                let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wi = ((co * self.cin + ci) * KERNEL + ky) * KERNEL + kx;
                        let k = wt[wi];
                        let mut gk = 0.0;
                        for oy in 0..ho {
                            let Some(iy) = (oy * STRIDE + ky).checked_sub(PAD).filter(|&iy| iy < h) else { continue };
                            for ox in 0..wo {
                                if let Some(ix) = (ox * STRIDE + kx).checked_sub(PAD).filter(|&ix| ix < w) {
                                    let g = dyc[oy * wo + ox];
                                    gk += g * xc[iy * w + ix];
                                    dxc[iy * w + ix] += g * k;
                                }
                            }
                        }
                        self.w.of_mut(grads)[wi] += gk;
                    }
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub convs: Vec<Conv2d>,
    pub proj: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnCache {
    /// input of each conv block, with its spatial size
    pub inputs: Vec<(Vec<f64>, usize, usize)>,
    /// pre-activation output of each conv block
    pub pre: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
}

impl Cnn {
    pub fn new(layout: &mut Layout, name: &str, in_channels: usize, channels: &[usize], d_out: usize) -> Self {
        let mut convs = Vec::with_capacity(channels.len());
        let mut cin = in_channels;
        for (i, &c) in channels.iter().enumerate() {
            convs.push(Conv2d::new(layout, &format!("{name}.conv{i}"), cin, c));
            cin = c;
        }
        let proj = Linear::new(layout, &format!("{name}.proj"), cin, d_out);
        Cnn { convs, proj }
    }

    pub fn forward(&self, p: &[f64], img: &[f64], h: usize, w: usize) -> (Vec<f64>, CnnCache) {
        let mut x = img.to_vec();
        let (mut h, mut w) = (h, w);
        let mut cache = CnnCache { inputs: Vec::new(), pre: Vec::new(), pooled: Vec::new() };
        for conv in &self.convs {
            let z = conv.forward(p, &x, h, w);
            let next = relu(&z);
            cache.inputs.push((std::mem::replace(&mut x, next), h, w));
            cache.pre.push(z);
            h = out_size(h);
            w = out_size(w);
        }
        let c = self.convs.last().map_or(0, |c| c.cout);
        let hw = (h * w) as f64;
        let pooled: Vec<f64> = (0..c).map(|k| x[k * h * w..(k + 1) * h * w].iter().sum::<f64>() / hw).collect();
        let out = self.proj.forward(p, &pooled);
        cache.pooled = pooled;
        (out, cache)
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], c: &CnnCache, dout: &[f64]) {
        let dpool = self.proj.backward(p, grads, &c.pooled, dout);
        let last = self.convs.len() - 1;
        let (_, lh, lw) = c.inputs[last];
        let (ho, wo) = (out_size(lh), out_size(lw));
        let hw = ho * wo;
        let mut dact: Vec<f64> = dpool.iter().flat_map(|g| std::iter::repeat_n(g / hw as f64, hw)).collect();
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let dz = relu_backward(&c.pre[i], &dact);
            let (x, h, w) = &c.inputs[i];
            dact = conv.backward(p, grads, x, *h, *w, &dz);
        }
    }
}

//! Row-wise dense layers with explicit backward passes.
//!
//! Activations are row-major `rows × width` buffers. Every backward function
//! accumulates parameter gradients into the flat `grads` vector and returns the
//! gradient with respect to its input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Init, Layout, Slot};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `n_out × n_in`
    pub w: Slot,
    pub b: Slot,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), &[n_out, n_in], Init::FanIn(n_in));
        let b = layout.add(format!("{name}.bias"), &[n_out], Init::Zeros);
        Linear { w, b, n_in, n_out }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = (self.w.of(p), self.b.of(p));
        let rows = x.len() / self.n_in;
        let mut y = Vec::with_capacity(rows * self.n_out);
        for r in 0..rows {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let wo = &w[o * self.n_in..(o + 1) * self.n_in];
                y.push(b[o] + dot(wo, xr));
            }
        }
        y
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let w = self.w.of(p);
        let rows = x.len() / self.n_in;
        let mut dx = vec![0.0; x.len()];
        for r in 0..rows {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            let dxr = &mut dx[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let g = dy[r * self.n_out + o];
                if g == 0.0 {
                    continue;
                }
                axpy(g, &w[o * self.n_in..(o + 1) * self.n_in], dxr);
                let gw = &mut self.w.of_mut(grads)[o * self.n_in..(o + 1) * self.n_in];
                axpy(g, xr, gw);
                self.b.of_mut(grads)[o] += g;
            }
        }
        dx
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Slot,
    pub offset: Slot,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(layout: &mut Layout, name: &str, d: usize) -> Self {
        let gain = layout.add(format!("{name}.gain"), &[d], Init::Ones);
        let offset = layout.add(format!("{name}.offset"), &[d], Init::Zeros);
        LayerNorm { gain, offset, d }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, LnCache) {
        let (g, b) = (self.gain.of(p), self.offset.of(p));
        let d = self.d;
        let rows = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            let mu = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            for k in 0..d {
                let h = (xr[k] - mu) * rs;
                xhat[r * d + k] = h;
                y[r * d + k] = g[k] * h + b[k];
            }
            rstd.push(rs);
        }
        (y, LnCache { xhat, rstd })
    }

    pub fn backward(&self, p: &[f64], grads: &mut [f64], c: &LnCache, dy: &[f64]) -> Vec<f64> {
        let g = self.gain.of(p);
        let d = self.d;
        let rows = dy.len() / d;
        let mut dx = vec![0.0; dy.len()];
        for r in 0..rows {
            let mut dxhat = vec![0.0; d];
            for k in 0..d {
                let i = r * d + k;
                dxhat[k] = dy[i] * g[k];
                self.gain.of_mut(grads)[k] += dy[i] * c.xhat[i];
                self.offset.of_mut(grads)[k] += dy[i];
            }
            let m1 = dxhat.iter().sum::<f64>() / d as f64;
            let m2 = (0..d).map(|k| dxhat[k] * c.xhat[r * d + k]).sum::<f64>() / d as f64;
            for k in 0..d {
                dx[r * d + k] = c.rstd[r] * (dxhat[k] - m1 - c.xhat[r * d + k] * m2);
            }
        }
        dx
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Gradient through a ReLU given its pre-activation.
pub fn relu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter().zip(dy).map(|(z, g)| if *z > 0.0 { *g } else { 0.0 }).collect()
}

/// Inverted-dropout multipliers (0 or 1/(1-p)); `None` means identity.
pub fn dropout_mask(rng: Option<&mut ChaCha8Rng>, n: usize, p: f64) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

pub fn apply_mask(x: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_arithmetic() {
        let mut l = Layout::default();
        let lin = Linear::new(&mut l, "l", 2, 2);
        let mut p = vec![0.0; l.len];
        lin.w.of_mut(&mut p).copy_from_slice(&[1.0, 2.0, -1.0, 0.5]);
        lin.b.of_mut(&mut p).copy_from_slice(&[0.1, -0.2]);
        let y = lin.forward(&p, &[3.0, 4.0]);
        assert!((y[0] - 11.1).abs() < 1e-12 && (y[1] - (-1.2)).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let mut l = Layout::default();
        let ln = LayerNorm::new(&mut l, "ln", 4);
        let p = l.init(0);
        let (y, _) = ln.forward(&p, &[1.0, 2.0, 3.0, 10.0]);
        let mu: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 4.0;
        assert!(mu.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}

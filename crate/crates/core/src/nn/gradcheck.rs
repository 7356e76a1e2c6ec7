//! Finite-difference verification of the hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{loss_joint, LossVariant};
use super::model::{Model, ModelConfig, ModelInput, Mode};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, far above finite-difference
/// round-off (about 1e-16 / FD_STEP) so near-zero gradients do not dominate.
pub const REL_FLOOR: f64 = 1e-6;
/// Pre-activations closer than this to a ReLU kink trigger a nudge.
pub const RELU_MARGIN: f64 = 1e-4;
const MAX_NUDGES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub n_params: usize,
    pub nudges: usize,
    pub relu_margin: f64,
}

/// Standard-normal structured and sequence inputs, uniform [0,1] images.
pub fn random_input(cfg: &ModelConfig, img_h: usize, img_w: usize, rng: &mut ChaCha8Rng) -> ModelInput {
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let structured = normal(cfg.d_struct_in);
    let sequence = normal(cfg.seq_len * cfg.d_seq_in);
    let img = cfg.img_channels * img_h * img_w;
    let history = (0..img).map(|_| rng.random::<f64>()).collect();
    let snapshot = (0..img).map(|_| rng.random::<f64>()).collect();
    ModelInput { structured, sequence, history, snapshot, img_h, img_w }
}

struct Problem<'a> {
    model: &'a Model,
    inputs: Vec<ModelInput>,
    targets: Vec<[f64; 2]>,
    variant: LossVariant,
    mask_seed: u64,
}

impl Problem<'_> {
    fn mode(&self, i: usize) -> Mode {
        Mode::Train { mask_seed: self.mask_seed.wrapping_add(i as u64) }
    }

    fn loss(&self, p: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            let f = self.model.forward(p, x, self.mode(i))?;
            total += loss_joint(f.out, *y, self.variant)?.0;
        }
        Ok(total / self.inputs.len() as f64)
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; p.len()];
        let n = self.inputs.len() as f64;
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            let f = self.model.forward(p, x, self.mode(i))?;
            let (_, d) = loss_joint(f.out, *y, self.variant)?;
            self.model.backward(p, &f.cache, [d[0] / n, d[1] / n], &mut g);
        }
        Ok(g)
    }

    fn margin(&self, p: &[f64]) -> Result<f64> {
        let mut m = f64::INFINITY;
        for (i, x) in self.inputs.iter().enumerate() {
            m = m.min(self.model.forward(p, x, self.mode(i))?.cache.relu_margin());
        }
        Ok(m)
    }
}

/// Compares analytic gradients of the mean joint loss over `n_samples` random
/// samples (train mode, fixed dropout masks) with central differences for
/// every parameter. Parameters are nudged until no ReLU sits at its kink.
pub fn gradient_check(
    cfg: &ModelConfig,
    seed: u64,
    n_samples: usize,
    img_size: usize,
    variant: LossVariant,
) -> Result<GradCheckReport> {
    let model = Model::new(cfg)?;
    let mut p = model.init_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let inputs: Vec<ModelInput> = (0..n_samples).map(|_| random_input(cfg, img_size, img_size, &mut rng)).collect();
    let targets: Vec<[f64; 2]> =
        (0..n_samples).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
    let prob = Problem { model: &model, inputs, targets, variant, mask_seed: seed };

    let mut nudges = 0;
    let mut margin = prob.margin(&p)?;
    while margin < RELU_MARGIN && nudges < MAX_NUDGES {
        for v in p.iter_mut() {
            *v += 1e-3 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        nudges += 1;
        margin = prob.margin(&p)?;
    }

    let analytic = prob.gradient(&p)?;
    let mut worst = (0.0, 0);
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = prob.loss(&p)?;
        p[i] = orig - FD_STEP;
        let down = prob.loss(&p)?;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param: model.layout.name_of(worst.1).to_owned(),
        n_params: p.len(),
        nudges,
        relu_margin: margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_model_gradients_match_finite_differences() {
        for variant in LossVariant::ALL {
            let r = gradient_check(&ModelConfig::tiny(), 3, 3, 8, variant).unwrap();
            assert!(r.max_rel_error < 1e-4, "{variant:?}: {r:?}");
        }
    }
}

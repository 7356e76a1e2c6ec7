//! Mini-batch training with per-epoch validation and checkpoint selection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_joint, LossVariant};
use super::model::{Model, ModelConfig, ModelInput, Mode};
use super::optim::{cosine_lr, Adam};
use crate::align::{Dataset, LifecycleSample, NormStats, SampleInputs, Split};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, EvaluationSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_variant: LossVariant,
    pub cosine: bool,
    /// checkpoints retained per selection category
    pub keep_top: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-5, batch: 16, epochs: 50, seed: 42, loss_variant: LossVariant::Mixed, cosine: true, keep_top: 2 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 || self.keep_top == 0 {
            return Err(Error::BadConfig("lr must be positive and batch, keep_top at least 1".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine {
            cosine_lr(self.lr, epoch, self.epochs)
        } else {
            self.lr
        }
    }
}

/// The validation score a checkpoint was selected for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Offset,
    Duration,
    Overall,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Offset, Category::Duration, Category::Overall];

    pub fn name(self) -> &'static str {
        match self {
            Category::Offset => "offset",
            Category::Duration => "duration",
            Category::Overall => "overall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValScores {
    pub mae_offset: f64,
    pub mae_duration: f64,
    pub mae_overall: f64,
}

impl ValScores {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Offset => self.mae_offset,
            Category::Duration => self.mae_duration,
            Category::Overall => self.mae_overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub variant: LossVariant,
    pub epoch: usize,
    /// categories whose validation score improved at this epoch
    pub tags: Vec<Category>,
    pub val: ValScores,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// mean mini-batch loss in train mode
    pub train_loss: f64,
    pub val: ValScores,
    pub improved: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// eval-mode mean loss on the training split before the first update
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub curve: Vec<EpochLog>,
    /// best `keep_top` checkpoints per category, best first
    pub best: BTreeMap<Category, Vec<Checkpoint>>,
    pub final_params: Vec<f64>,
}

/// Standardized network input for a sample.
pub fn model_input(inputs: &SampleInputs, norm: &NormStats, image_shape: [usize; 3]) -> ModelInput {
    let [h, w, c] = image_shape;
    let chw = |px: &[f32]| {
        let mut out = vec![0.0; px.len()];
        for p in 0..h * w {
            for k in 0..c {
                out[k * h * w + p] = px[p * c + k] as f64;
            }
        }
        out
    };
    ModelInput {
        structured: norm.features.standardize(&inputs.features),
        sequence: norm.sequence.standardize(&inputs.sequence),
        history: chw(&inputs.history),
        snapshot: chw(&inputs.snapshot),
        img_h: h,
        img_w: w,
    }
}

pub fn standardized_target(s: &LifecycleSample, norm: &NormStats) -> [f64; 2] {
    let z = norm.targets.standardize(&[s.meta.time_offset_s, s.meta.duration_s]);
    [z[0], z[1]]
}

/// Eval-mode predictions in seconds.
pub fn predict_seconds(model: &Model, params: &[f64], norm: &NormStats, inputs: &[ModelInput]) -> Result<Vec<[f64; 2]>> {
    crate::par::map(inputs, |x| {
        let f = model.forward(params, x, Mode::Eval)?;
        let y = norm.targets.destandardize(&f.out);
        Ok([y[0], y[1]])
    })
    .into_iter()
    .collect()
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mean_loss(model: &Model, p: &[f64], xs: &[ModelInput], ys: &[[f64; 2]], v: LossVariant) -> Result<f64> {
    let losses: Vec<Result<f64>> = crate::par::map_range(xs.len(), |i| {
        let f = model.forward(p, &xs[i], Mode::Eval)?;
        Ok(loss_joint(f.out, ys[i], v)?.0)
    });
    let mut s = 0.0;
    for l in losses {
        s += l?;
    }
    Ok(s / xs.len() as f64)
}

pub fn train(ds: &Dataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let model = Model::new(mcfg)?;
    let norm = &ds.schema.norm;
    let shape = ds.schema.image_shape;
    if mcfg.seq_len != ds.schema.seq_len || mcfg.d_struct_in != ds.schema.feature_names.len() || mcfg.img_channels != shape[2] {
        return Err(Error::SchemaMismatch("model configuration does not fit the dataset schema".into()));
    }
    let mut train_set: Vec<&LifecycleSample> = ds.split(Split::Train);
    if train_set.is_empty() {
        return Err(Error::NoData);
    }
    train_set.sort_by_key(|s| s.meta.id);
    let mut val_set: Vec<&LifecycleSample> = ds.split(Split::Val);
    if val_set.is_empty() {
        log::warn!("empty validation split; selecting checkpoints on the training split");
        val_set = train_set.clone();
    }
    val_set.sort_by_key(|s| s.meta.id);

    let tx: Vec<ModelInput> = train_set.iter().map(|s| model_input(&s.inputs, norm, shape)).collect();
    let ty: Vec<[f64; 2]> = train_set.iter().map(|s| standardized_target(s, norm)).collect();
    let ids: Vec<u64> = train_set.iter().map(|s| s.meta.id as u64).collect();
    let vx: Vec<ModelInput> = val_set.iter().map(|s| model_input(&s.inputs, norm, shape)).collect();
    let vtruth: Vec<[f64; 2]> = val_set.iter().map(|s| [s.meta.time_offset_s, s.meta.duration_s]).collect();

    let mut params = model.init_params(tcfg.seed);
    let mut opt = Adam::new(params.len());
    let initial_train_loss = mean_loss(&model, &params, &tx, &ty, tcfg.loss_variant)?;
    let mut best_score: BTreeMap<Category, f64> = BTreeMap::new();
    let mut best: BTreeMap<Category, Vec<Checkpoint>> = BTreeMap::new();
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..tx.len()).collect();

    for epoch in 0..tcfg.epochs {
        let lr = tcfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(tcfg.seed, epoch as u64, 0)));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(tcfg.batch) {
            let per_sample: Vec<Result<(f64, Vec<f64>)>> = crate::par::map(chunk, |&i| {
                let mode = Mode::Train { mask_seed: mix(tcfg.seed, epoch as u64 + 1, ids[i] + 1) };
                let f = model.forward(&params, &tx[i], mode)?;
                let (l, d) = loss_joint(f.out, ty[i], tcfg.loss_variant)?;
                let mut g = vec![0.0; params.len()];
                model.backward(&params, &f.cache, d, &mut g);
                Ok((l, g))
            });
            let mut grad = vec![0.0; params.len()];
            for r in per_sample {
                let (l, g) = r?;
                loss_sum += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.update(&mut params, &grad, lr);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters after update"));
        }

        let pred = predict_seconds(&model, &params, norm, &vx)?;
        let m = compute_metrics(&EvaluationSet::new(vtruth.clone(), pred)?);
        let val = ValScores { mae_offset: m.mae_offset, mae_duration: m.mae_duration, mae_overall: m.mae_overall };
        let improved: Vec<Category> = Category::ALL
            .into_iter()
            .filter(|c| best_score.get(c).is_none_or(|b| val.get(*c) < *b))
            .collect();
        if !improved.is_empty() {
            let ck = Checkpoint {
                config: mcfg.clone(),
                norm: norm.clone(),
                variant: tcfg.loss_variant,
                epoch,
                tags: improved.clone(),
                val,
                params: params.clone(),
            };
            for c in &improved {
                best_score.insert(*c, val.get(*c));
                let list = best.entry(*c).or_default();
                list.insert(0, ck.clone());
                list.truncate(tcfg.keep_top);
            }
        }
        log::info!(
            "{} epoch {epoch}: lr {lr:.3e} loss {:.4} val mae offset {:.3} duration {:.3} overall {:.3}",
            tcfg.loss_variant.name(),
            loss_sum / tx.len() as f64,
            val.mae_offset,
            val.mae_duration,
            val.mae_overall
        );
        curve.push(EpochLog { epoch, lr, train_loss: loss_sum / tx.len() as f64, val, improved });
    }
    let final_train_loss = mean_loss(&model, &params, &tx, &ty, tcfg.loss_variant)?;
    Ok(TrainOutcome { initial_train_loss, final_train_loss, curve, best, final_params: params })
}

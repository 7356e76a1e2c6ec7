//! Task-aware weighted ensemble over selected checkpoints, prediction files,
//! and permutation importance.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{LifecycleSample, SampleInputs};
use crate::error::{Error, Result};
use crate::features::slot_index;
use crate::metrics::{compute_metrics, EvaluationSet};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::train::{model_input, predict_seconds, Category, Checkpoint, TrainOutcome};
use crate::nn::{LossVariant, Model};

/// Relative weight of each selection category for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryWeights {
    pub offset: f64,
    pub duration: f64,
    pub overall: f64,
}

impl CategoryWeights {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Offset => self.offset,
            Category::Duration => self.duration,
            Category::Overall => self.overall,
        }
    }

    pub fn normalized(&self) -> Result<CategoryWeights> {
        let s = self.offset + self.duration + self.overall;
        if !(self.offset >= 0.0 && self.duration >= 0.0 && self.overall >= 0.0 && s > 0.0) {
            return Err(Error::BadConfig("ensemble weights must be non-negative with a positive sum".into()));
        }
        Ok(CategoryWeights { offset: self.offset / s, duration: self.duration / s, overall: self.overall / s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleWeights {
    pub offset_target: CategoryWeights,
    pub duration_target: CategoryWeights,
}

impl Default for EnsembleWeights {
    fn default() -> Self {
        EnsembleWeights {
            offset_target: CategoryWeights { offset: 0.5, overall: 0.3, duration: 0.1 },
            duration_target: CategoryWeights { duration: 0.5, overall: 0.3, offset: 0.1 },
        }
    }
}

/// Mean of `xs` written as offsets from the first value, so equal inputs
/// reproduce that value bit for bit.
fn centered_mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = xs.clone();
    let first = it.next().unwrap_or(0.0);
    let n = xs.count() as f64;
    first + it.map(|x| x - first).sum::<f64>() / n
}

/// Mean member prediction per category, then a weighted sum over categories
/// with each target's renormalized weights. The sum is taken around the
/// heaviest category, which keeps equal category means and fully
/// concentrated weights exact.
pub fn combine(by_category: &BTreeMap<Category, Vec<[f64; 2]>>, w: &EnsembleWeights) -> Result<[f64; 2]> {
    let weights = [w.offset_target.normalized()?, w.duration_target.normalized()?];
    let mut means = [[0.0; 2]; 3];
    for (ci, c) in Category::ALL.into_iter().enumerate() {
        let preds = by_category.get(&c).filter(|v| !v.is_empty()).ok_or_else(|| Error::IncompleteEnsemble(c.name().into()))?;
        for k in 0..2 {
            means[ci][k] = centered_mean(preds.iter().map(|p| p[k]));
        }
    }
    let mut out = [0.0; 2];
    for k in 0..2 {
        let wk: Vec<f64> = Category::ALL.iter().map(|c| weights[k].get(*c)).collect();
        let r = (0..3).fold(0, |best, i| if wk[i] > wk[best] { i } else { best });
        let anchor = means[r][k];
        out[k] = anchor + (0..3).filter(|&i| i != r).map(|i| wk[i] * (means[i][k] - anchor)).sum::<f64>();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub category: Category,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<Member>,
    pub weights: EnsembleWeights,
    model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub file: String,
    pub category: Category,
    pub variant: LossVariant,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub weights: EnsembleWeights,
    pub members: Vec<ManifestMember>,
}

pub const MANIFEST: &str = "ensemble.json";

impl Ensemble {
    pub fn new(members: Vec<Member>, weights: EnsembleWeights) -> Result<Self> {
        for c in Category::ALL {
            if !members.iter().any(|m| m.category == c) {
                return Err(Error::IncompleteEnsemble(c.name().into()));
            }
        }
        let cfg = &members[0].checkpoint.config;
        if members.iter().any(|m| &m.checkpoint.config != cfg) {
            return Err(Error::SchemaMismatch("ensemble members use different model configurations".into()));
        }
        let model = Model::new(cfg)?;
        Ok(Ensemble { members, weights, model })
    }

    /// Top checkpoints of every category from each training run.
    pub fn from_runs(runs: &[TrainOutcome], weights: EnsembleWeights) -> Result<Self> {
        let mut members = Vec::new();
        for run in runs {
            for (c, list) in &run.best {
                members.extend(list.iter().map(|ck| Member { category: *c, checkpoint: ck.clone() }));
            }
        }
        if members.is_empty() {
            return Err(Error::IncompleteEnsemble("all".into()));
        }
        Ensemble::new(members, weights)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Predictions in seconds; identical checkpoints are evaluated once.
    pub fn predict(&self, inputs: &[&SampleInputs], image_shape: [usize; 3]) -> Result<Vec<[f64; 2]>> {
        let mut cache: HashMap<(LossVariant, usize), Vec<[f64; 2]>> = HashMap::new();
        let mut by_category: Vec<BTreeMap<Category, Vec<[f64; 2]>>> = vec![BTreeMap::new(); inputs.len()];
        for m in &self.members {
            let ck = &m.checkpoint;
            let key = (ck.variant, ck.epoch);
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
                let xs: Vec<_> = inputs.iter().map(|s| model_input(s, &ck.norm, image_shape)).collect();
                e.insert(predict_seconds(&self.model, &ck.params, &ck.norm, &xs)?);
            }
            for (slot, p) in by_category.iter_mut().zip(&cache[&key]) {
                slot.entry(m.category).or_default().push(*p);
            }
        }
        by_category.iter().map(|b| combine(b, &self.weights)).collect()
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = Vec::new();
        let mut manifest = EnsembleManifest { weights: self.weights, members: Vec::new() };
        let mut saved: HashMap<(LossVariant, usize), String> = HashMap::new();
        for m in &self.members {
            let ck = &m.checkpoint;
            let file = saved
                .entry((ck.variant, ck.epoch))
                .or_insert_with(|| format!("{}_e{:03}.ckpt", ck.variant.name(), ck.epoch))
                .clone();
            let path = dir.join(&file);
            if !written.contains(&path) {
                write_checkpoint(&path, ck)?;
                written.push(path);
            }
            manifest.members.push(ManifestMember { file, category: m.category, variant: ck.variant, epoch: ck.epoch });
        }
        let mpath = dir.join(MANIFEST);
        crate::io::write_json_pretty(&mpath, &manifest)?;
        written.push(mpath);
        Ok(written)
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: EnsembleManifest = crate::io::read_json(dir.join(MANIFEST))?;
        let mut loaded: HashMap<String, Checkpoint> = HashMap::new();
        let mut members = Vec::with_capacity(manifest.members.len());
        for m in &manifest.members {
            if !loaded.contains_key(&m.file) {
                loaded.insert(m.file.clone(), read_checkpoint(dir.join(&m.file))?);
            }
            members.push(Member { category: m.category, checkpoint: loaded[&m.file].clone() });
        }
        Ensemble::new(members, manifest.weights)
    }
}

/// One row of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub callsign: String,
    pub onset_t: f64,
    pub offset_hat: f64,
    pub duration_hat: f64,
    pub offset_true: Option<f64>,
    pub duration_true: Option<f64>,
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<()> {
    crate::io::write_atomic(path, |w| {
        let mut wr = csv::Writer::from_writer(w);
        for r in rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    })
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Ground-truth labels keyed by maneuver, for scoring predictions made without them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub callsign: String,
    pub onset_t: f64,
    pub offset_true: f64,
    pub duration_true: f64,
}

pub fn write_labels(path: impl AsRef<Path>, rows: &[LabelRow]) -> Result<()> {
    crate::io::write_atomic(path, |w| {
        let mut wr = csv::Writer::from_writer(w);
        for r in rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    })
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Replaces the truth columns with labels matched on (callsign, onset time).
pub fn attach_labels(rows: &[PredictionRow], labels: &[LabelRow]) -> Result<Vec<PredictionRow>> {
    let by_key: HashMap<(&str, u64), &LabelRow> =
        labels.iter().map(|l| ((l.callsign.as_str(), l.onset_t.to_bits()), l)).collect();
    rows.iter()
        .map(|r| {
            let l = by_key
                .get(&(r.callsign.as_str(), r.onset_t.to_bits()))
                .ok_or_else(|| Error::TargetMissing(format!("{} at {}", r.callsign, r.onset_t)))?;
            Ok(PredictionRow { offset_true: Some(l.offset_true), duration_true: Some(l.duration_true), ..r.clone() })
        })
        .collect()
}

/// Evaluation set from rows carrying their own truth.
pub fn evaluation_set(rows: &[PredictionRow]) -> Result<EvaluationSet> {
    let mut truth = Vec::with_capacity(rows.len());
    for r in rows {
        match (r.offset_true, r.duration_true) {
            (Some(o), Some(d)) => truth.push([o, d]),
            _ => return Err(Error::TargetMissing(format!("{} at {}", r.callsign, r.onset_t))),
        }
    }
    EvaluationSet::new(truth, rows.iter().map(|r| [r.offset_hat, r.duration_hat]).collect())
}

/// Increase in pooled MAE when one structured slot is shuffled across the
/// samples with a seeded permutation.
pub fn permutation_importance(
    predict: impl Fn(&[&SampleInputs]) -> Result<Vec<[f64; 2]>>,
    samples: &[&LifecycleSample],
    slot: &str,
    seed: u64,
) -> Result<f64> {
    Ok(importance_ranking(predict, samples, &[slot], seed)?[0].1)
}

/// [`permutation_importance`] for several slots against one unpermuted
/// baseline, in the order given.
pub fn importance_ranking<'s>(
    predict: impl Fn(&[&SampleInputs]) -> Result<Vec<[f64; 2]>>,
    samples: &[&LifecycleSample],
    slots: &[&'s str],
    seed: u64,
) -> Result<Vec<(&'s str, f64)>> {
    let idx: Vec<usize> = slots.iter().map(|s| slot_index(s)).collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::NoData);
    }
    let truth: Vec<[f64; 2]> = samples.iter().map(|s| [s.meta.time_offset_s, s.meta.duration_s]).collect();
    let mae = |pred| -> Result<f64> { Ok(compute_metrics(&EvaluationSet::new(truth.clone(), pred)?).mae_overall) };
    let base_inputs: Vec<&SampleInputs> = samples.iter().map(|s| &s.inputs).collect();
    let base = mae(predict(&base_inputs)?)?;
    let mut out = Vec::with_capacity(slots.len());
    for (name, k) in slots.iter().zip(idx) {
        let mut column: Vec<f64> = samples.iter().map(|s| s.inputs.features[k]).collect();
        column.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<SampleInputs> = samples
            .iter()
            .zip(&column)
            .map(|(s, v)| {
                let mut x = s.inputs.clone();
                x.features[k] = *v;
                x
            })
            .collect();
        let refs: Vec<&SampleInputs> = permuted.iter().collect();
        out.push((*name, mae(predict(&refs)?)? - base));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats(o: f64, v: f64, d: f64) -> BTreeMap<Category, Vec<[f64; 2]>> {
        BTreeMap::from([
            (Category::Offset, vec![[o, o]]),
            (Category::Overall, vec![[v, v]]),
            (Category::Duration, vec![[d, d]]),
        ])
    }

    #[test]
    fn renormalized_weighting_by_hand() {
        let y = combine(&cats(10.0, 20.0, 30.0), &EnsembleWeights::default()).unwrap();
        assert!((y[0] - (0.5 * 10.0 + 0.3 * 20.0 + 0.1 * 30.0) / 0.9).abs() < 1e-12);
        assert!((y[1] - (0.1 * 10.0 + 0.3 * 20.0 + 0.5 * 30.0) / 0.9).abs() < 1e-12);
    }

    #[test]
    fn missing_category_is_incomplete() {
        let mut b = cats(1.0, 2.0, 3.0);
        b.remove(&Category::Overall);
        assert!(matches!(combine(&b, &EnsembleWeights::default()), Err(Error::IncompleteEnsemble(_))));
    }

    #[test]
    fn concentrated_weights_pick_category() {
        let one = CategoryWeights { offset: 0.0, duration: 0.0, overall: 1.0 };
        let w = EnsembleWeights { offset_target: one, duration_target: one };
        let mut b = cats(1.0, 2.0, 3.0);
        b.get_mut(&Category::Overall).unwrap().push([4.0, 4.0]);
        assert_eq!(combine(&b, &w).unwrap(), [3.0, 3.0]);
    }
}

//! Pooled and per-target regression scores for (time offset, duration).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truth and prediction pairs for both targets; index 0 is the time offset,
/// index 1 the duration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSet {
    pub truth: Vec<[f64; 2]>,
    pub pred: Vec<[f64; 2]>,
}

impl EvaluationSet {
    pub fn new(truth: Vec<[f64; 2]>, pred: Vec<[f64; 2]>) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::SchemaMismatch(format!("{} truths vs {} predictions", truth.len(), pred.len())));
        }
        if truth.is_empty() {
            return Err(Error::NoData);
        }
        if truth.iter().chain(&pred).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation set"));
        }
        Ok(EvaluationSet { truth, pred })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn target_mean(&self, k: usize) -> f64 {
        self.truth.iter().map(|t| t[k]).sum::<f64>() / self.len() as f64
    }
}

/// R² values are `None` when the truth has no variance to explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae_overall: f64,
    pub rmse_overall: f64,
    pub r2_overall: Option<f64>,
    pub mae_offset: f64,
    pub mae_duration: f64,
    pub rmse_offset: f64,
    pub rmse_duration: f64,
    pub r2_offset: Option<f64>,
    pub r2_duration: Option<f64>,
}

fn r2(sse: f64, sst: f64) -> Option<f64> {
    (sst > 0.0).then(|| 1.0 - sse / sst)
}

pub fn compute_metrics(ev: &EvaluationSet) -> MetricsReport {
    let n = ev.len() as f64;
    let means = [ev.target_mean(0), ev.target_mean(1)];
    let mut abs = [0.0; 2];
    let mut sq = [0.0; 2];
    let mut var = [0.0; 2];
    for (t, p) in ev.truth.iter().zip(&ev.pred) {
        for k in 0..2 {
            let e = p[k] - t[k];
            abs[k] += e.abs();
            sq[k] += e * e;
            var[k] += (t[k] - means[k]).powi(2);
        }
    }
    MetricsReport {
        n: ev.len(),
        mae_overall: (abs[0] + abs[1]) / (2.0 * n),
        rmse_overall: ((sq[0] + sq[1]) / (2.0 * n)).sqrt(),
        r2_overall: r2(sq[0] + sq[1], var[0] + var[1]),
        mae_offset: abs[0] / n,
        mae_duration: abs[1] / n,
        rmse_offset: (sq[0] / n).sqrt(),
        rmse_duration: (sq[1] / n).sqrt(),
        r2_offset: r2(sq[0], var[0]),
        r2_duration: r2(sq[1], var[1]),
    }
}

/// Predicts the given per-target means for every sample.
pub fn mean_baseline(means: [f64; 2], truth: &[[f64; 2]]) -> Result<EvaluationSet> {
    EvaluationSet::new(truth.to_vec(), vec![means; truth.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let ev = EvaluationSet::new(vec![[10.0, 3.0], [20.0, 4.0]], vec![[12.0, 3.0], [18.0, 5.0]]).unwrap();
        let m = compute_metrics(&ev);
        assert_eq!(m.mae_overall, 1.25);
        assert_eq!(m.rmse_overall, 1.5);
        assert!((m.r2_overall.unwrap() - (1.0 - 9.0 / 50.5)).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_mean_predictions() {
        let truth = vec![[1.0, 2.0], [3.0, 5.0], [4.0, 1.0]];
        let m = compute_metrics(&EvaluationSet::new(truth.clone(), truth.clone()).unwrap());
        assert_eq!((m.mae_overall, m.rmse_overall, m.r2_overall), (0.0, 0.0, Some(1.0)));
        let ev = mean_baseline([8.0 / 3.0, 8.0 / 3.0], &truth).unwrap();
        let m = compute_metrics(&ev);
        assert!(m.r2_overall.unwrap().abs() < 1e-12);
        assert!(m.r2_offset.unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_truth_has_undefined_r2() {
        let ev = EvaluationSet::new(vec![[1.0, 1.0]; 3], vec![[2.0, 1.0]; 3]).unwrap();
        let m = compute_metrics(&ev);
        assert_eq!(m.r2_overall, None);
        assert!(EvaluationSet::new(vec![], vec![]).is_err());
    }
}

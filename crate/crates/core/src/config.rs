//! Single-file run configuration merging every stage's settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{AlignmentConfig, DatasetConfig};
use crate::ensemble::EnsembleWeights;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::nn::train::TrainConfig;
use crate::nn::ModelConfig;
use crate::raster::RasterConfig;
use crate::signal::DetectorConfig;
use crate::synth::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParserConfig {
    /// count a bare "maintain" as an altitude command
    pub bare_maintain: bool,
    /// optional phraseology table replacing the bundled one
    pub phraseology: Option<String>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig { bare_maintain: true, phraseology: None }
    }
}

impl ParserConfig {
    pub fn phraseology(&self) -> Result<crate::phrase::Phraseology> {
        let p = match &self.phraseology {
            Some(path) => crate::phrase::Phraseology::load(path)?,
            None => crate::phrase::Phraseology::default(),
        };
        Ok(if self.bare_maintain { p } else { p.without_bare_maintain() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub window_s: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig { window_s: 300.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// master seed; overrides the scenario, split and training seeds
    pub seed: u64,
    pub synth: ScenarioConfig,
    pub detector: DetectorConfig,
    pub parser: ParserConfig,
    pub features: FeatureConfig,
    pub raster: RasterConfig,
    pub alignment: AlignmentConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ensemble: EnsembleWeights,
    pub workload: WorkloadConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let raster = RasterConfig { width: 32, height: 32, ..RasterConfig::default() };
        RunConfig {
            seed: 42,
            synth: ScenarioConfig::default(),
            detector: DetectorConfig::default(),
            parser: ParserConfig::default(),
            features: FeatureConfig::default(),
            raster,
            alignment: AlignmentConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::desk(),
            train: TrainConfig { lr: 1e-3, ..TrainConfig::default() },
            ensemble: EnsembleWeights::default(),
            workload: WorkloadConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Applies the master seed everywhere and validates every section.
    pub fn resolved(mut self) -> Result<Self> {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.synth.validate()?;
        self.detector.validate()?;
        self.raster.validate()?;
        self.alignment.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.ensemble.offset_target.normalized()?;
        self.ensemble.duration_target.normalized()?;
        if !(self.workload.window_s > 0.0) {
            return Err(Error::BadWindow(self.workload.window_s));
        }
        if !(0.0..1.0).contains(&self.dataset.val_frac) || self.dataset.seq_len != self.model.seq_len {
            return Err(Error::BadConfig("val_frac must be in [0,1) and dataset.seq_len equal model.seq_len".into()));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = RunConfig::default().resolved().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rate = 0.1").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[workload]\nwindow_s = 60.0\n").unwrap().resolved().unwrap();
        assert_eq!(cfg.synth.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.workload.window_s, 60.0);
        assert_eq!(cfg.detector, DetectorConfig::default());
    }
}

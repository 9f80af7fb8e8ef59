use std::fs;
use std::path::{Path, PathBuf};

use gancd::expand::ExpansionConfig;
use gancd::infer::ComparisonConfig;
use gancd::nets::ArchitectureConfig;
use gancd::rng::{derive_seed, tag};
use gancd::synth::SceneConfig;
use gancd::train::TrainConfig;
use gancd::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// The sweep uses `thresholds + 1` evenly spaced values in `[0, 1]`.
    pub thresholds: usize,
    /// Threshold for the binary map written by `infer`.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: 100, threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivlabConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for DivlabConfig {
    fn default() -> Self {
        Self { count: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub run_dir: PathBuf,
    /// Input pair; a synthetic scene is generated when absent.
    pub image_a: Option<PathBuf>,
    pub image_b: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed. When set, every section seed is derived from it.
    pub seed: Option<u64>,
    pub scene: SceneConfig,
    pub expansion: ExpansionConfig,
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub compare: ComparisonConfig,
    pub eval: EvalConfig,
    pub divlab: DivlabConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            scene: SceneConfig::default(),
            expansion: ExpansionConfig::default(),
            arch: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            compare: ComparisonConfig::default(),
            eval: EvalConfig::default(),
            divlab: DivlabConfig::default(),
            io: IoConfig { run_dir: PathBuf::from("run"), ..Default::default() },
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reduced desk-scale profile: 2000 steps at batch 16 with narrower
    /// networks and a smaller expanded set.
    pub fn apply_smoke(&mut self) {
        self.arch.base_channels = 16;
        self.train.batch_size = 16;
        self.train.epochs = 40;
        self.train.steps_per_epoch = 50;
        self.train.checkpoint_every = 10;
        self.expansion.n = 800;
    }

    /// Overwrites section seeds from the root seed, if one is set.
    pub fn resolve_seeds(&mut self) {
        let Some(root) = self.seed else { return };
        self.scene.seed = derive_seed(root, &[tag::SCENE]);
        self.expansion.seed = derive_seed(root, &[tag::EXPAND]);
        self.train.seed = derive_seed(root, &[tag::TRAIN_STEP]);
        self.compare.seed = derive_seed(root, &[tag::INFER]);
        self.divlab.seed = derive_seed(root, &[tag::DIVLAB]);
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.expansion.validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        self.compare.validate()?;
        if self.train.clip_size != self.arch.clip_size {
            return Err(Error::InvalidConfig(format!(
                "train.clip_size {} differs from arch.clip_size {}",
                self.train.clip_size, self.arch.clip_size
            )));
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::InvalidConfig(format!("eval.threshold {} outside [0,1]", self.eval.threshold)));
        }
        if self.eval.thresholds == 0 {
            return Err(Error::InvalidConfig("eval.thresholds must be positive".into()));
        }
        if self.io.image_a.is_some() != self.io.image_b.is_some() {
            return Err(Error::InvalidConfig("io.image_a and io.image_b must be given together".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"trian": {}}"#).is_err());
        let e = RunConfig::from_json(r#"{"train": {"lr": 1.0}}"#).unwrap_err();
        assert_eq!(e.kind(), "invalid_config");
    }

    #[test]
    fn root_seed_splits() {
        let mut c = RunConfig { seed: Some(5), ..Default::default() };
        c.resolve_seeds();
        let seeds = [c.scene.seed, c.expansion.seed, c.train.seed, c.compare.seed, c.divlab.seed];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        let mut d = RunConfig::default();
        d.resolve_seeds();
        assert_eq!(d, RunConfig::default());
    }

    #[test]
    fn smoke_profile_is_valid() {
        let mut c = RunConfig::default();
        c.apply_smoke();
        c.validate().unwrap();
        assert_eq!(c.train.epochs * c.train.steps_per_epoch, 2000);
        assert_eq!(c.train.batch_size, 16);
    }
}

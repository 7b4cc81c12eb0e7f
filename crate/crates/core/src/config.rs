//! Declarative run configuration (JSON).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SyntheticSpec;
use crate::error::{HernError, Result};
use crate::model::ModelConfig;
use crate::train::TrainSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub root: PathBuf,
    pub synthetic: SyntheticSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub data: DataConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Tiny network, two short stages, eight 32x32 synthetic pairs.
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::tiny(),
            schedule: TrainSchedule::desk(),
            data: DataConfig {
                root: "runs/desk/data".into(),
                synthetic: SyntheticSpec::default(),
            },
            seed: 0,
            output_dir: "runs/desk".into(),
        }
    }

    /// Full-size network with the four-stage 72/144/192/224 schedule.
    pub fn paper() -> Self {
        RunConfig {
            model: ModelConfig::paper(),
            schedule: TrainSchedule::paper(),
            data: DataConfig {
                root: "runs/paper/data".into(),
                synthetic: SyntheticSpec {
                    count: 64,
                    size: 224,
                    ..SyntheticSpec::default()
                },
            },
            seed: 0,
            output_dir: "runs/paper".into(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(HernError::Config(format!(
                "unknown preset `{other}` (expected desk or paper)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HernError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HernError::io(path, e))?;
        Self::from_json(&text).map_err(|e| HernError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        let syn = &self.data.synthetic;
        syn.validate()?;
        if syn.scale != self.model.output_scale {
            return Err(HernError::Config(format!(
                "data scale {} differs from model output_scale {}",
                syn.scale, self.model.output_scale
            )));
        }
        let raw_side = syn.size / syn.scale;
        if raw_side < self.schedule.max_patch() {
            return Err(HernError::Config(format!(
                "synthetic RAW side {raw_side} is smaller than the largest patch {}",
                self.schedule.max_patch()
            )));
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoints")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join("metrics.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_and_validate() {
        for cfg in [RunConfig::desk(), RunConfig::paper()] {
            cfg.validate().unwrap();
            assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
        v["extra"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
        v["data"]["synthetic"]["size"] = 16.into();
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.is_config(), "{err}");
        assert!(RunConfig::preset("huge").is_err());
    }
}

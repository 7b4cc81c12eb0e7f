use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HernError, Result};

/// One resolution stage. `patch_size` is the RAW-domain crop side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStage {
    pub patch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl TrainStage {
    pub fn new(patch_size: usize, epochs: usize, learning_rate: f64, batch_size: usize) -> Self {
        TrainStage {
            patch_size,
            epochs,
            learning_rate,
            batch_size,
        }
    }

    /// `learning_rate` may be zero here so a stage can be a frozen replay;
    /// negative or non-finite rates are rejected.
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(4) {
            return Err(HernError::Config(format!(
                "patch_size {} must be a positive multiple of 4",
                self.patch_size
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(HernError::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(HernError::Config(format!(
                "learning_rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub stages: Vec<TrainStage>,
}

impl TrainSchedule {
    pub fn new(stages: Vec<TrainStage>) -> Result<Self> {
        let s = TrainSchedule { stages };
        s.validate()?;
        Ok(s)
    }

    /// 72, 144, 192 and 224 pixel patches for 48, 36, 24 and 8 epochs.
    pub fn paper() -> Self {
        TrainSchedule {
            stages: vec![
                TrainStage::new(72, 48, 1e-4, 16),
                TrainStage::new(144, 36, 1e-5, 4),
                TrainStage::new(192, 24, 1e-5, 2),
                TrainStage::new(224, 8, 1e-5, 2),
            ],
        }
    }

    /// Two short stages for CPU runs on 32x32 synthetic pairs.
    pub fn desk() -> Self {
        TrainSchedule {
            stages: vec![TrainStage::new(16, 100, 2e-3, 1), TrainStage::new(32, 300, 2e-4, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(HernError::Config("schedule has no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate()
                .map_err(|e| HernError::Config(format!("stage {i}: {e}")))?;
        }
        if let Some(w) = self.stages.windows(2).find(|w| w[1].patch_size <= w[0].patch_size) {
            return Err(HernError::Config(format!(
                "patch sizes must strictly increase, got {} then {}",
                w[0].patch_size, w[1].patch_size
            )));
        }
        Ok(())
    }

    pub fn max_patch(&self) -> usize {
        self.stages.iter().map(|s| s.patch_size).max().unwrap_or(0)
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }
}

impl fmt::Display for TrainSchedule {
    /// `[(patch,epochs,lr,batch),...]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .stages
            .iter()
            .map(|s| {
                format!(
                    "({},{},{:e},{})",
                    s.patch_size, s.epochs, s.learning_rate, s.batch_size
                )
            })
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TrainSchedule::paper().validate().unwrap();
        TrainSchedule::desk().validate().unwrap();
        assert_eq!(TrainSchedule::paper().total_epochs(), 116);
    }

    #[test]
    fn paper_table_text() {
        assert_eq!(
            TrainSchedule::paper().to_string(),
            "[(72,48,1e-4,16),(144,36,1e-5,4),(192,24,1e-5,2),(224,8,1e-5,2)]"
        );
    }

    #[test]
    fn rejects_bad_stages() {
        assert!(TrainSchedule::new(vec![]).is_err());
        assert!(TrainSchedule::new(vec![TrainStage::new(18, 1, 1e-3, 1)]).is_err());
        assert!(TrainSchedule::new(vec![TrainStage::new(16, 0, 1e-3, 1)]).is_err());
        assert!(TrainSchedule::new(vec![TrainStage::new(16, 1, -1.0, 1)]).is_err());
        assert!(TrainSchedule::new(vec![
            TrainStage::new(32, 1, 1e-3, 1),
            TrainStage::new(32, 1, 1e-3, 1)
        ])
        .is_err());
    }
}

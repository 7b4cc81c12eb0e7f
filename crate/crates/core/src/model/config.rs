use serde::{Deserialize, Serialize};

use crate::error::{HernError, Result};

/// Architecture hyperparameters.
///
/// Serialized with the short keys `G`, `B`, `M`, `P` for the residual-group
/// count, RIR blocks per group, MSRB count and pyramid-encoder conv count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "G")]
    pub groups: usize,
    #[serde(rename = "B")]
    pub blocks: usize,
    #[serde(rename = "M")]
    pub msrbs: usize,
    #[serde(rename = "P")]
    pub encoder_convs: usize,
    pub global_width: usize,
    pub local_width: usize,
    /// Length of the pyramid-encoder vector; must equal `global_width`.
    pub encoder_dim: usize,
    /// Side the encoder input is bilinearly resized to.
    pub fixed_res: usize,
    pub output_scale: usize,
    pub prelu_init: f64,
}

impl Default for ModelConfig {
    /// Full-size network: 16 groups of 10 blocks at 128 channels, 8 MSRBs at
    /// 64 channels and a 6-layer encoder fed 192x192 inputs.
    fn default() -> Self {
        ModelConfig {
            groups: 16,
            blocks: 10,
            msrbs: 8,
            encoder_convs: 6,
            global_width: 128,
            local_width: 64,
            encoder_dim: 128,
            fixed_res: 192,
            output_scale: 1,
            prelu_init: 0.25,
        }
    }
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Desk-scale network used by tests and the desk preset.
    pub fn tiny() -> Self {
        ModelConfig {
            groups: 2,
            blocks: 2,
            msrbs: 2,
            encoder_convs: 2,
            global_width: 8,
            local_width: 8,
            encoder_dim: 8,
            fixed_res: 16,
            output_scale: 1,
            prelu_init: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("G", self.groups),
            ("B", self.blocks),
            ("M", self.msrbs),
            ("P", self.encoder_convs),
            ("global_width", self.global_width),
            ("local_width", self.local_width),
            ("encoder_dim", self.encoder_dim),
            ("fixed_res", self.fixed_res),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(HernError::Config(format!("{name} must be at least 1")));
        }
        if self.encoder_convs >= usize::BITS as usize
            || !self.fixed_res.is_multiple_of(1usize << self.encoder_convs)
        {
            return Err(HernError::Config(format!(
                "fixed_res {} must be divisible by 2^P = 2^{}",
                self.fixed_res, self.encoder_convs
            )));
        }
        if self.output_scale != 1 && self.output_scale != 2 {
            return Err(HernError::Config(format!(
                "output_scale must be 1 or 2, got {}",
                self.output_scale
            )));
        }
        if self.encoder_dim != self.global_width {
            return Err(HernError::Config(format!(
                "encoder_dim ({}) must equal global_width ({}) for the broadcast add",
                self.encoder_dim, self.global_width
            )));
        }
        if !self.prelu_init.is_finite() {
            return Err(HernError::Config("prelu_init must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_uses_short_keys() {
        let json = serde_json::to_value(ModelConfig::default()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "B",
                "G",
                "M",
                "P",
                "encoder_dim",
                "fixed_res",
                "global_width",
                "local_width",
                "output_scale",
                "prelu_init"
            ]
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut json = serde_json::to_value(ModelConfig::tiny()).unwrap();
        json["attention"] = true.into();
        assert!(serde_json::from_value::<ModelConfig>(json).is_err());
    }

    #[test]
    fn validation() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        let bad = ModelConfig {
            fixed_res: 18,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            output_scale: 3,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            groups: 0,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
    }
}

//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HERN" | version u32 | config_len u32 | config JSON
//! stage u32 | epoch u32 | adam_step u64 | tensor_count u32
//! per tensor: name_len u32 | name | dtype u8 | ndim u32 | dims u32.. | f32 data
//! ```
//!
//! Tensors are written in name order as `param/<path>`, then `adam_m/<path>`,
//! then `adam_v/<path>`, so encoding a decoded file reproduces it exactly.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use crate::error::{HernError, Result};
use crate::model::{check_params, Hern, ModelConfig};
use crate::params::ModelParams;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HERN";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

const GROUPS: [&str; 3] = ["param/", "adam_m/", "adam_v/"];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub optimizer: AdamState<f32>,
    /// Stage of the last completed epoch.
    pub stage_index: u32,
    /// Epoch within that stage, counted from 0.
    pub epoch_index: u32,
    pub format_version: u32,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        params: ModelParams<f32>,
        optimizer: AdamState<f32>,
        stage_index: u32,
        epoch_index: u32,
    ) -> Self {
        Checkpoint {
            config,
            params,
            optimizer,
            stage_index,
            epoch_index,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn model(&self) -> Result<Hern> {
        Hern::from_parts(self.config.clone(), self.params.clone())
    }

    /// Check the stored tensors against a caller-supplied config.
    pub fn expect_config(&self, config: &ModelConfig) -> Result<()> {
        check_params(config, &self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.format_version);
        let json = serde_json::to_vec(&self.config)
            .map_err(|e| HernError::Checkpoint(format!("encoding config: {e}")))?;
        put_u32(&mut out, len_u32(json.len())?);
        out.extend_from_slice(&json);
        put_u32(&mut out, self.stage_index);
        put_u32(&mut out, self.epoch_index);
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        let sets = [&self.params, &self.optimizer.m, &self.optimizer.v];
        let count: usize = sets.iter().map(|s| s.len()).sum();
        put_u32(&mut out, len_u32(count)?);
        for (prefix, set) in GROUPS.iter().zip(sets) {
            for (name, t) in set.iter() {
                let full = format!("{prefix}{name}");
                put_u32(&mut out, len_u32(full.len())?);
                out.extend_from_slice(full.as_bytes());
                out.push(DTYPE_F32);
                put_u32(&mut out, len_u32(t.shape().len())?);
                for &d in t.shape() {
                    put_u32(&mut out, len_u32(d)?);
                }
                for &v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(HernError::Checkpoint("bad magic bytes, not a checkpoint".into()));
        }
        let format_version = r.u32("format version")?;
        if format_version != FORMAT_VERSION {
            return Err(HernError::Checkpoint(format!(
                "format version {format_version} unsupported, expected {FORMAT_VERSION}"
            )));
        }
        let json_len = r.u32("config length")? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(json_len, "config")?)
            .map_err(|e| HernError::Checkpoint(format!("embedded config: {e}")))?;
        config.validate()?;
        let stage_index = r.u32("stage index")?;
        let epoch_index = r.u32("epoch index")?;
        let step = u64::from_le_bytes(r.take(8, "adam step")?.try_into().unwrap());
        let count = r.u32("tensor count")? as usize;

        let mut sets = [ModelParams::new(), ModelParams::new(), ModelParams::new()];
        for _ in 0..count {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| HernError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(HernError::Checkpoint(format!(
                    "tensor `{name}` has unknown dtype tag {dtype}"
                )));
            }
            let ndim = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u32("dimension")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| HernError::Checkpoint(format!("tensor `{name}` is too large")))?;
            let raw = r.take(n.saturating_mul(4), &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let group = GROUPS
                .iter()
                .position(|p| name.starts_with(p))
                .ok_or_else(|| HernError::Checkpoint(format!("unexpected tensor `{name}`")))?;
            let key = &name[GROUPS[group].len()..];
            if sets[group].contains(key) {
                return Err(HernError::Checkpoint(format!("duplicate tensor `{name}`")));
            }
            sets[group].insert(key, Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(HernError::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        let [params, m, v] = sets;
        for set in [&params, &m, &v] {
            check_params(&config, set)?;
        }
        Ok(Checkpoint {
            config,
            params,
            optimizer: AdamState { m, v, step },
            stage_index,
            epoch_index,
            format_version,
        })
    }
}

/// Write atomically: the file appears only once fully written.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes).map_err(|e| HernError::io(Path::new(&tmp), e))?;
    fs::rename(&tmp, path).map_err(|e| HernError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| HernError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
        .map_err(|e| HernError::Checkpoint(format!("{}: {e}", path.display())))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| HernError::Checkpoint(format!("length {n} exceeds u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(HernError::Checkpoint(format!(
                "truncated file while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let model = Hern::new(ModelConfig::tiny(), 3).unwrap();
        let mut opt = AdamState::new(&model.params);
        opt.step = 7;
        for (_, t) in opt.m.iter_mut() {
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = i as f32 * 1e-3;
            }
        }
        Checkpoint::new(model.config, model.params, opt, 1, 4)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn version_and_truncation() {
        let good = sample().to_bytes().unwrap();
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("version"));
        for cut in [3, 10, good.len() / 2, good.len() - 1] {
            let err = Checkpoint::from_bytes(&good[..cut]).unwrap_err();
            assert!(err.to_string().contains("truncated"), "cut {cut}: {err}");
        }
        let mut long = good;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn mismatched_config_names_first_tensor() {
        let ck = sample();
        let other = ModelConfig {
            local_width: 6,
            ..ModelConfig::tiny()
        };
        let err = ck.expect_config(&other).unwrap_err().to_string();
        assert!(err.contains("`fusion.weight`"), "{err}");
    }
}

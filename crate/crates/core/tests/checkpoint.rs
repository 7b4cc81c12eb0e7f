mod common;

use std::fs;

use hern::train::{load_checkpoint, save_checkpoint, AdamState, Checkpoint, TrainStage, Trainer};
use hern::{Hern, HernError, ModelConfig};

fn trained() -> Checkpoint {
    let data = common::pairs(2, 16, 4);
    let mut t = Trainer::new(Hern::new(ModelConfig::tiny(), 2).unwrap(), 2);
    t.train_stage(&data, &TrainStage::new(8, 2, 1e-3, 2), 0).unwrap();
    t.checkpoint()
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&ck, &a).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    for (name, t) in ck.params.iter() {
        assert_eq!(loaded.params.get(name).unwrap(), t, "{name}");
    }
    assert_eq!(loaded, ck);
    save_checkpoint(&loaded, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(!dir.path().join("a.ckpt.tmp").exists());
}

#[test]
fn header_fields_are_in_the_documented_layout() {
    let ck = trained();
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"HERN");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cfg: ModelConfig = serde_json::from_slice(&bytes[12..12 + n]).unwrap();
    assert_eq!(cfg, ModelConfig::tiny());
    let at = 12 + n;
    assert_eq!(u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()), 0);
    assert_eq!(u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[at + 8..at + 16].try_into().unwrap()), 2);
}

#[test]
fn corrupt_magic_gives_error_and_no_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.ckpt");
    let mut bytes = trained().to_bytes().unwrap();
    bytes[..4].copy_from_slice(b"NREH");
    fs::write(&p, bytes).unwrap();
    match load_checkpoint(&p) {
        Err(HernError::Checkpoint(msg)) => assert!(msg.contains("magic"), "{msg}"),
        other => panic!("expected checkpoint error, got {other:?}"),
    }
}

#[test]
fn truncated_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.ckpt");
    let bytes = trained().to_bytes().unwrap();
    fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
    let err = load_checkpoint(&p).unwrap_err().to_string();
    assert!(err.contains("truncated"), "{err}");
}

#[test]
fn mismatched_config_names_first_offending_tensor() {
    let ck = trained();
    let wider = ModelConfig {
        global_width: 12,
        encoder_dim: 12,
        ..ModelConfig::tiny()
    };
    // first tensor in path order whose shape depends on the width
    let err = ck.expect_config(&wider).unwrap_err().to_string();
    assert!(err.contains("`encoder.convs.0.bias`"), "{err}");

    // a file whose tensors disagree with its own embedded config
    let mut bad = ck.clone();
    bad.config = wider;
    let err = Checkpoint::from_bytes(&bad.to_bytes().unwrap()).unwrap_err().to_string();
    assert!(err.contains("`encoder.convs.0.bias`"), "{err}");
}

#[test]
fn optimizer_state_survives() {
    let ck = trained();
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back.optimizer, ck.optimizer);
    assert_ne!(back.optimizer, AdamState::new(&ck.params));
}

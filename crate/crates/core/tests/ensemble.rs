mod common;

use hern::ensemble::{epoch_ensemble, self_ensemble, FlipTransform};
use hern::train::{AdamState, Checkpoint};
use hern::{Hern, ModelConfig, RawPatch, Tensor};

fn raw(side_h: usize, side_w: usize, seed: u64) -> RawPatch {
    common::random_raw(side_h, side_w, seed)
}

fn checkpoint(m: Hern, epoch: u32) -> Checkpoint {
    let opt = AdamState::new(&m.params);
    Checkpoint::new(m.config, m.params, opt, 0, epoch)
}

#[test]
fn stub_network_is_flip_equivariant() {
    let m = common::pointwise_model(3);
    let x = raw(8, 12, 1);
    let y = m.forward(&x).unwrap();
    for t in FlipTransform::ALL {
        let yt = m.forward(&t.apply_raw(&x)).unwrap();
        assert_eq!(t.apply(y.tensor()), *yt.tensor(), "{t:?}");
    }
}

#[test]
fn self_ensemble_of_equivariant_network_is_identity() {
    let m = common::pointwise_model(3);
    for seed in 0..20 {
        let x = raw(8, 8, 100 + seed);
        let plain = m.forward(&x).unwrap();
        let ens = self_ensemble(|r| m.forward(r), &x).unwrap();
        let diff = plain.tensor().max_abs_diff(ens.tensor());
        assert!(diff <= 1e-5, "input {seed}: {diff}");
    }
}

#[test]
fn self_ensemble_output_is_equivariant_for_any_network() {
    let m = Hern::new(ModelConfig::tiny(), 9).unwrap();
    let x = raw(8, 8, 4);
    let base = self_ensemble(|r| m.forward(r), &x).unwrap();
    for t in FlipTransform::ALL {
        let moved = self_ensemble(|r| m.forward(r), &t.apply_raw(&x)).unwrap();
        let diff = t.apply(base.tensor()).max_abs_diff(moved.tensor());
        assert!(diff <= 1e-5, "{t:?}: {diff}");
    }
}

#[test]
fn identical_checkpoints_reproduce_single_output() {
    let m = Hern::new(ModelConfig::tiny(), 5).unwrap();
    let x = raw(8, 8, 2);
    let single = m.infer(&x).unwrap();
    for k in [1, 2, 3, 7] {
        let cks: Vec<_> = (0..k).map(|e| checkpoint(m.clone(), e)).collect();
        let ens = epoch_ensemble(&cks, &x, false).unwrap();
        assert_eq!(ens.tensor(), single.tensor(), "k = {k}");
    }
}

#[test]
fn permutations_give_bit_identical_output() {
    let cks: Vec<_> = (0..4u32)
        .map(|i| checkpoint(Hern::new(ModelConfig::tiny(), 20 + i as u64).unwrap(), i))
        .collect();
    let x = raw(8, 8, 6);
    let base = epoch_ensemble(&cks, &x, false).unwrap();
    for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
        let shuffled: Vec<_> = perm.iter().map(|&i| cks[i].clone()).collect();
        assert_eq!(epoch_ensemble(&shuffled, &x, false).unwrap(), base);
    }
}

#[test]
fn constant_tails_average() {
    let constant = |v: f32, epoch| {
        let mut m = Hern::new(ModelConfig::tiny(), 1).unwrap();
        m.params.get_mut("tail.conv.weight").unwrap().data_mut().fill(0.0);
        m.params.get_mut("tail.conv.bias").unwrap().data_mut().fill(v);
        checkpoint(m, epoch)
    };
    let x = raw(8, 8, 1);
    let y = epoch_ensemble(&[constant(0.2, 0), constant(0.4, 1)], &x, true).unwrap();
    for &v in y.tensor().data() {
        assert!((v - 0.3).abs() <= 1e-7, "{v}");
    }
}

#[test]
fn ensemble_matches_hand_composition() {
    let a = Hern::new(ModelConfig::tiny(), 30).unwrap();
    let b = Hern::new(ModelConfig::tiny(), 31).unwrap();
    let x = raw(8, 8, 3);
    let got = epoch_ensemble(&[checkpoint(a.clone(), 0), checkpoint(b.clone(), 1)], &x, true).unwrap();
    let mut want = Tensor::<f64>::zeros(got.tensor().shape());
    for m in [&a, &b] {
        for t in FlipTransform::ALL {
            let y = m.infer(&t.apply_raw(&x)).unwrap();
            want.add_assign(&t.apply(y.tensor()).cast::<f64>());
        }
    }
    want.scale(1.0 / 8.0);
    let diff = got.tensor().cast::<f64>().max_abs_diff(&want);
    assert!(diff <= 1e-6, "{diff}");
}

#[test]
fn empty_or_mixed_lists_are_rejected() {
    let x = raw(8, 8, 1);
    assert!(epoch_ensemble(&[], &x, false).is_err());
    let other = Hern::new(
        ModelConfig {
            msrbs: 1,
            ..ModelConfig::tiny()
        },
        0,
    )
    .unwrap();
    let cks = [checkpoint(Hern::new(ModelConfig::tiny(), 0).unwrap(), 0), checkpoint(other, 1)];
    assert!(epoch_ensemble(&cks, &x, false).is_err());
}

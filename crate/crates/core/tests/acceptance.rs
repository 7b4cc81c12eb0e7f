//! One line per acceptance criterion, each run at its stated tolerance.
//!
//! `cargo test --test acceptance -- --nocapture` shows the report.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use hern::cfa::{pack_bayer, unpack_bayer};
use hern::dataset::{generate, synthetic_scene, SyntheticSpec};
use hern::ensemble::{epoch_ensemble, self_ensemble};
use hern::memory::{estimate_memory, max_feasible_patch, ArchSpec};
use hern::metrics::{psnr, ssim};
use hern::model::{hern_forward, msrb, residual_group, rir_block, FeatureMap};
use hern::train::gradcheck::check_gradients;
use hern::train::{AdamState, Checkpoint, TrainSchedule, TrainStage, Trainer};
use hern::{FlipTransform, Hern, ModelConfig, ModelParams, RgbImage, Tensor};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn zero_prefix(p: &mut ModelParams<f32>, prefix: &str) {
    for (name, t) in p.iter_mut() {
        if name.starts_with(prefix) && !name.ends_with(".slope") {
            t.data_mut().fill(0.0);
        }
    }
}

fn checkpoint(m: &Hern, epoch: u32) -> Checkpoint {
    Checkpoint::new(m.config.clone(), m.params.clone(), AdamState::new(&m.params), 0, epoch)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::tiny();
    let (params, raw, target) = common::grad_case(&cfg, 8, 11);
    let report = check_gradients(&params, &cfg, &raw, &target, common::GRAD_STEP, common::GRAD_FLOOR)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = report.worst().ok_or("no tensors checked")?;
    check!(report.tensors.len() == params.len(), "checked {} of {} tensors", report.tensors.len(), params.len());
    check!(worst.max_rel_error < 1e-4, "{} rel error {:.2e}", worst.name, worst.max_rel_error);
    check!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{} tensors, worst {:.2e} ({}), {secs:.1} s", params.len(), worst.max_rel_error, worst.name))
}

fn residual_identities() -> Outcome {
    let m = Hern::new(ModelConfig::tiny(), 1).map_err(|e| e.to_string())?;
    let mut p = m.params.clone();
    zero_prefix(&mut p, "global.groups.0");
    zero_prefix(&mut p, "local.msrb.0");
    let raw = common::random_raw(12, 12, 2);
    let x = FeatureMap::full(Tensor::from_fn(&[8, 12, 12], |i| raw.tensor().data()[i % raw.tensor().len()] - 0.5));
    check!(rir_block(&x, &p, "global.groups.0.blocks.0").unwrap() == x, "rir_block is not the identity");
    check!(residual_group(&x, &p, "global.groups.0", 2).unwrap() == x, "residual_group is not the identity");
    check!(msrb(&x, &p, "local.msrb.0").unwrap() == x, "msrb is not the identity");
    let mut z = m.params.clone();
    zero_prefix(&mut z, "");
    let y = hern_forward(raw.tensor(), &z, &m.config).unwrap();
    check!(y.data().iter().all(|&v| v == 0.0), "zero network output is not zero");
    Ok("rir_block, residual_group, msrb identities; zero network gives zeros".into())
}

fn resolution_agnostic() -> Outcome {
    let m = Hern::new(ModelConfig::tiny(), 3).map_err(|e| e.to_string())?;
    let shapes = m.params.shapes();
    for side in [16, 32, 72, 144] {
        let y = m.forward(&common::random_raw(side, side, side as u64)).map_err(|e| e.to_string())?;
        check!((y.height(), y.width()) == (side, side), "side {side}: output {}x{}", y.height(), y.width());
    }
    check!(m.params.shapes() == shapes, "parameter shapes changed");

    let data = common::pairs(4, 32, 3);
    let mut t = Trainer::new(m, 3);
    t.train_stage(&data, &TrainStage::new(16, 3, 2e-3, 2), 0).map_err(|e| e.to_string())?;
    let before = t.model().params.clone();
    t.train_stage(&data, &TrainStage::new(32, 2, 0.0, 2), 1).map_err(|e| e.to_string())?;
    check!(t.model().params == before, "lr = 0 stage changed parameters");
    Ok("sides 16/32/72/144 on one parameter set; lr = 0 stage is bit-exact".into())
}

fn equivariance() -> Outcome {
    let m = Hern::new(ModelConfig::tiny(), 9).map_err(|e| e.to_string())?;
    let mut worst = 0.0f32;
    for seed in 0..20 {
        let x = common::random_raw(8, 8, 500 + seed);
        let g = self_ensemble(|r| m.forward(r), &x).unwrap();
        for t in FlipTransform::ALL {
            let moved = self_ensemble(|r| m.forward(r), &t.apply_raw(&x)).unwrap();
            worst = worst.max(t.apply(g.tensor()).max_abs_diff(moved.tensor()));
        }
    }
    check!(worst <= 1e-5, "g(flip x) vs flip g(x): {worst:.2e}");

    let f = common::pointwise_model(3);
    let mut fixed = 0.0f32;
    for seed in 0..20 {
        let x = common::random_raw(8, 8, 700 + seed);
        let ens = self_ensemble(|r| f.forward(r), &x).unwrap();
        fixed = fixed.max(ens.tensor().max_abs_diff(f.forward(&x).unwrap().tensor()));
    }
    check!(fixed <= 1e-6, "self_ensemble(f) vs f: {fixed:.2e}");
    Ok(format!("equivariance {worst:.1e} over 20 inputs; fixed point {fixed:.1e}"))
}

fn train_rows(t: &mut Trainer, data: &[hern::PairedSample], stages: &[TrainStage]) -> (f64, f64) {
    let start = Instant::now();
    let mut last = f64::NAN;
    for (i, st) in stages.iter().enumerate() {
        last = t.train_stage(data, st, i).unwrap().last().unwrap().mean_l1;
    }
    (last, start.elapsed().as_secs_f64())
}

fn convergence() -> Outcome {
    let data = generate(&SyntheticSpec::default(), 0).map_err(|e| e.to_string())?;
    check!(data.len() == 8 && data[0].rgb.height() == 32, "desk data is not 8 pairs of 32x32");
    let desk = TrainSchedule::desk();
    let mut progressive = Trainer::new(Hern::new(ModelConfig::tiny(), 0).unwrap(), 0);
    let start = Instant::now();
    let rows = progressive.progressive_train(&data, &desk).map_err(|e| e.to_string())?;
    let desk_secs = start.elapsed().as_secs_f64();
    let desk_l1 = rows.last().unwrap().mean_l1;

    // same lr sequence and step count, every stage at the largest patch
    let fixed: Vec<TrainStage> = desk
        .stages
        .iter()
        .map(|s| TrainStage { patch_size: desk.max_patch(), ..s.clone() })
        .collect();
    let mut baseline = Trainer::new(Hern::new(ModelConfig::tiny(), 0).unwrap(), 0);
    let (base_l1, base_secs) = train_rows(&mut baseline, &data, &fixed);

    println!("    run          schedule                      final L1   seconds");
    println!("    progressive  {:<28}  {desk_l1:.5}  {desk_secs:8.1}", desk.to_string());
    let fixed_label = format!("{}", TrainSchedule { stages: fixed.clone() });
    println!("    fixed-size   {fixed_label:<28}  {base_l1:.5}  {base_secs:8.1}");

    check!(base_l1.is_finite(), "fixed-size run diverged");
    check!(desk_l1 < 0.01, "final mean L1 {desk_l1:.5}");
    check!(desk_secs < 300.0, "desk run took {desk_secs:.1} s");
    Ok(format!("final L1 {desk_l1:.5} in {desk_secs:.1} s"))
}

fn trunk_sixteenth() -> Outcome {
    let cfg = ModelConfig::default();
    let (h, r) = (ArchSpec::hern(&cfg), ArchSpec::rcan_matched(&cfg));
    let mut n = 0;
    for side in [144, 312] {
        let (eh, er) = (estimate_memory(&h, side, 1, true).unwrap(), estimate_memory(&r, side, 1, true).unwrap());
        for l in eh.per_layer.iter().filter(|l| l.path.starts_with("global.groups.")) {
            let full = er.layer(&l.path).ok_or(format!("no baseline layer {}", l.path))?;
            check!(16 * l.elements == full.elements, "{} at {side}: {} vs {}", l.path, l.elements, full.elements);
            n += 1;
        }
    }
    Ok(format!("{n} trunk layers at exactly 1/16"))
}

fn feasible_ratio_any_budget() -> Outcome {
    let cfg = ModelConfig::default();
    let (h, r) = (ArchSpec::hern(&cfg), ArchSpec::rcan_matched(&cfg));
    let at_12 = |spec: &ArchSpec| max_feasible_patch(spec, 12 << 30, 1, true).unwrap();
    let (h12, r12) = (at_12(&h), at_12(&r));
    let min = estimate_memory(&h, h.side_multiple(), 1, true).unwrap().total_bytes;
    let (mut failing, mut worst) = (Vec::new(), f64::INFINITY);
    let steps = 48;
    for i in 0..=steps {
        // log-spaced from HERN's smallest feasible budget to 64 GiB
        let budget = (min as f64 * ((64u64 << 30) as f64 / min as f64).powf(i as f64 / steps as f64)) as u64;
        let ratio = max_feasible_patch(&h, budget, 1, true).unwrap() as f64
            / max_feasible_patch(&r, budget, 1, true).unwrap() as f64;
        worst = worst.min(ratio);
        if ratio < 2.0 {
            failing.push(budget);
        }
    }
    let summary = format!("12 GiB: {h12}/{r12} = {:.2}", h12 as f64 / r12 as f64);
    check!(
        failing.is_empty(),
        "{summary}; ratio < 2 for {} of {} budgets between {:.1} MB and {:.1} MB (min ratio {worst:.2})",
        failing.len(),
        steps + 1,
        *failing.first().unwrap() as f64 / 1e6,
        *failing.last().unwrap() as f64 / 1e6
    );
    Ok(summary)
}

fn metrics() -> Outcome {
    let a = RgbImage::new(Tensor::full(&[3, 16, 16], 0.25)).unwrap();
    let b = RgbImage::new(Tensor::full(&[3, 16, 16], 0.25 + 16.0 / 255.0)).unwrap();
    let p = psnr(&a, &b, 1.0).unwrap();
    check!((p - 24.0475).abs() < 1e-3, "constant offset PSNR {p:.5}");
    let x = synthetic_scene(32, 1);
    let s = ssim(&x, &x).unwrap();
    check!(s == 1.0, "SSIM(x, x) = {s}");
    check!(psnr(&x, &x, 1.0).unwrap() == f64::INFINITY, "PSNR(x, x) is not infinite");
    Ok(format!("offset PSNR {p:.4} dB; SSIM(x, x) = 1"))
}

fn ensemble_mechanics() -> Outcome {
    let m = Hern::new(ModelConfig::tiny(), 5).unwrap();
    let x = common::random_raw(8, 8, 2);
    let single = m.infer(&x).unwrap();
    for k in [2, 5] {
        let cks: Vec<_> = (0..k).map(|e| checkpoint(&m, e)).collect();
        check!(epoch_ensemble(&cks, &x, false).unwrap() == single, "{k} identical checkpoints differ from one");
    }
    let cks: Vec<_> = (0..4).map(|i| checkpoint(&Hern::new(ModelConfig::tiny(), 40 + i).unwrap(), i as u32)).collect();
    let base = epoch_ensemble(&cks, &x, true).unwrap();
    for perm in [[3, 1, 0, 2], [2, 3, 1, 0]] {
        let shuffled: Vec<_> = perm.iter().map(|&i| cks[i].clone()).collect();
        check!(epoch_ensemble(&shuffled, &x, true).unwrap() == base, "order {perm:?} changed the result");
    }
    Ok("identical checkpoints exact; permutations bit-identical".into())
}

fn round_trips() -> Outcome {
    let raw = common::random_raw(6, 10, 8);
    check!(pack_bayer(&unpack_bayer(&raw)).unwrap() == raw, "pack/unpack changed data");
    let mut t = Trainer::new(Hern::new(ModelConfig::tiny(), 6).unwrap(), 6);
    t.train_stage(&common::pairs(2, 16, 6), &TrainStage::new(8, 1, 1e-3, 2), 0).unwrap();
    let bytes = t.checkpoint().to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    check!(back.to_bytes().unwrap() == bytes, "checkpoint bytes changed");
    let spec = SyntheticSpec::default();
    check!(generate(&spec, 4).unwrap() == generate(&spec, 4).unwrap(), "dataset differs across runs");
    check!(generate(&spec, 4).unwrap() != generate(&spec, 5).unwrap(), "dataset ignores seed");
    Ok("Bayer, checkpoint and dataset round trips exact".into())
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("1", "gradient correctness", gradients),
        ("2", "residual identity suite", residual_identities),
        ("3", "resolution agnosticism", resolution_agnostic),
        ("4", "self-ensemble equivariance", equivariance),
        ("5", "overfit convergence", convergence),
        ("6a", "trunk activations at 1/16", trunk_sixteenth),
        ("6b", "feasible-side ratio >= 2 at any budget", feasible_ratio_any_budget),
        ("7", "metric closed forms", metrics),
        ("8", "ensemble mechanics", ensemble_mechanics),
        ("9", "round trips", round_trips),
    ];
    let mut failed = Vec::new();
    println!();
    for (id, name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {id:>2} {name}: {detail}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

mod common;

use std::time::Instant;

use common::{grad_case, GRAD_FLOOR, GRAD_STEP};
use hern::train::gradcheck::check_gradients;
use hern::ModelConfig;

#[test]
fn tiny_network_gradients_match_finite_differences() {
    let start = Instant::now();
    let cfg = ModelConfig::tiny();
    let (params, raw, target) = grad_case(&cfg, 8, 11);
    let report = check_gradients(&params, &cfg, &raw, &target, GRAD_STEP, GRAD_FLOOR).unwrap();
    let worst = report.worst().unwrap();
    println!(
        "worst {} [{}]: rel {:.2e}, analytic {:.6e}, numeric {:.6e}, {:.1}s",
        worst.name,
        worst.index,
        worst.max_rel_error,
        worst.analytic,
        worst.numeric,
        start.elapsed().as_secs_f64()
    );
    assert_eq!(report.tensors.len(), params.len());
    assert!(report.max_rel_error() < 1e-4, "{worst:?}");
}

#[test]
fn upsampling_tail_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        groups: 1,
        blocks: 1,
        msrbs: 1,
        global_width: 4,
        local_width: 4,
        encoder_dim: 4,
        output_scale: 2,
        ..ModelConfig::tiny()
    };
    let (params, raw, target) = grad_case(&cfg, 8, 4);
    let report = check_gradients(&params, &cfg, &raw, &target, GRAD_STEP, GRAD_FLOOR).unwrap();
    assert!(report.tensors.iter().any(|t| t.name == "tail.up.weight"));
    assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
}

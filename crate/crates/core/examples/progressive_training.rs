//! Progressive two-stage training next to a single-stage run with the same
//! number of optimizer steps.
//!
//! `cargo run --release --example progressive_training`

use std::time::Instant;

use hern::dataset::{generate, SyntheticSpec};
use hern::train::{TrainSchedule, TrainStage, Trainer};
use hern::{Hern, ModelConfig};

fn run(name: &str, schedule: &TrainSchedule, data: &[hern::PairedSample]) -> hern::Result<(f64, f64)> {
    let mut trainer = Trainer::new(Hern::new(ModelConfig::tiny(), 0)?, 0);
    let start = Instant::now();
    let rows = trainer.progressive_train(data, schedule)?;
    let secs = start.elapsed().as_secs_f64();
    for r in rows.iter().filter(|r| (r.epoch + 1) % 50 == 0) {
        println!("{name:>12} stage {} epoch {:>3} patch {:>2} L1 {:.5}", r.stage, r.epoch, r.patch_size, r.mean_l1);
    }
    Ok((rows.last().unwrap().mean_l1, secs))
}

fn main() -> hern::Result<()> {
    let data = generate(&SyntheticSpec::default(), 0)?;
    let progressive = TrainSchedule::desk();
    let steps = progressive.total_epochs();
    let single = TrainSchedule::new(vec![TrainStage::new(32, steps, 2e-4, 1)])?;

    let (l1_p, t_p) = run("progressive", &progressive, &data)?;
    let (l1_s, t_s) = run("single", &single, &data)?;
    println!();
    println!("{:<12} {:>10} {:>10}", "run", "final L1", "seconds");
    println!("{:<12} {:>10.5} {:>10.1}", "progressive", l1_p, t_p);
    println!("{:<12} {:>10.5} {:>10.1}", "single 32px", l1_s, t_s);
    Ok(())
}

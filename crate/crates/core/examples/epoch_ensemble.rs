//! Train briefly, keep per-epoch checkpoints and average the last ones.

use hern::dataset::{generate, SyntheticSpec};
use hern::ensemble::epoch_ensemble;
use hern::metrics::psnr;
use hern::train::{load_checkpoint, CheckpointPolicy, TrainStage, Trainer};
use hern::{Hern, ModelConfig};

fn main() -> hern::Result<()> {
    let dir = std::env::temp_dir().join("hern-epoch-ensemble");
    let _ = std::fs::remove_dir_all(&dir);
    let data = generate(&SyntheticSpec { count: 4, ..SyntheticSpec::default() }, 3)?;
    let mut trainer = Trainer::new(Hern::new(ModelConfig::tiny(), 3)?, 3)
        .with_checkpoints(CheckpointPolicy::retained(&dir));
    trainer.train_stage(&data, &TrainStage::new(32, 40, 2e-3, 1), 0)?;

    let kept: Vec<_> = trainer.saved_checkpoints().to_vec();
    println!("kept {} checkpoints:", kept.len());
    for p in &kept {
        println!("  {}", p.file_name().unwrap().to_string_lossy());
    }
    let cks = kept.iter().rev().take(2).map(|p| load_checkpoint(p)).collect::<hern::Result<Vec<_>>>()?;

    let sample = &data[0];
    let single = cks[0].model()?.infer(&sample.raw)?.clamped();
    let both = epoch_ensemble(&cks, &sample.raw, false)?.clamped();
    let both_flip = epoch_ensemble(&cks, &sample.raw, true)?.clamped();
    println!("last epoch          PSNR {:.3} dB", psnr(&single, &sample.rgb, 1.0)?);
    println!("last two averaged   PSNR {:.3} dB", psnr(&both, &sample.rgb, 1.0)?);
    println!("  + self-ensemble   PSNR {:.3} dB", psnr(&both_flip, &sample.rgb, 1.0)?);
    Ok(())
}

//! Generate synthetic RAW/RGB pairs and write them as PNGs.
//!
//! `cargo run --example synthesize_dataset -- [out_dir]`

use std::path::PathBuf;

use hern::dataset::{load_dataset, write_dataset, SyntheticSpec};

fn main() -> hern::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hern-synthetic"));
    let spec = SyntheticSpec {
        count: 4,
        size: 64,
        ..SyntheticSpec::default()
    };
    let manifest = write_dataset(&root, &spec, 42)?;
    println!("wrote {} pairs to {}", manifest.ids.len(), root.display());

    for (id, pair) in manifest.ids.iter().zip(load_dataset(&root)?) {
        let rgb = pair.rgb.tensor();
        let mean = rgb.sum() / rgb.len() as f32;
        println!(
            "{id}: raw {:?} rgb {:?} mean {mean:.3}",
            pair.raw.tensor().shape(),
            rgb.shape()
        );
    }
    Ok(())
}

//! Activation memory against patch side for the network and a
//! full-resolution channel-attention baseline of the same depth and width.

use hern::memory::{estimate_memory, max_feasible_patch, ArchSpec};
use hern::ModelConfig;

fn main() -> hern::Result<()> {
    let cfg = ModelConfig::default();
    let specs = [ArchSpec::hern(&cfg), ArchSpec::rcan_matched(&cfg)];

    println!("{:>6} {:>14} {:>14}", "side", "hern MiB", "rcan_like MiB");
    for side in (64..=512).step_by(64) {
        let mib: Vec<f64> = specs
            .iter()
            .map(|s| Ok(estimate_memory(s, side, 1, true)?.total_bytes as f64 / (1u64 << 20) as f64))
            .collect::<hern::Result<_>>()?;
        println!("{side:>6} {:>14.1} {:>14.1}", mib[0], mib[1]);
    }

    println!();
    for gib in [1u64, 4, 12, 24] {
        let budget = gib << 30;
        let h = max_feasible_patch(&specs[0], budget, 1, true)?;
        let r = max_feasible_patch(&specs[1], budget, 1, true)?;
        println!("{gib:>3} GiB: hern {h:>4}, rcan_like {r:>4}, ratio {:.2}", h as f64 / r as f64);
    }

    let e = estimate_memory(&specs[0], 256, 1, false)?;
    let block = e.layer("global.groups.0.blocks.0.conv1").unwrap();
    let local = e.layer("local.msrb.0.conv3_1").unwrap();
    println!();
    println!("at 256: trunk conv {} elements ({}), local conv {} elements ({})", block.elements, block.grid, local.elements, local.grid);
    Ok(())
}

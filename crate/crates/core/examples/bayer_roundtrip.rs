//! Pack an RGGB mosaic into four half-resolution planes and back.

use hern::cfa::{pack_bayer, unpack_bayer};
use hern::BayerMosaic;

fn main() -> hern::Result<()> {
    let (h, w) = (4, 6);
    let data: Vec<f32> = (0..h * w).map(|i| i as f32 / (h * w) as f32).collect();
    let mosaic = BayerMosaic::new(h, w, data)?;

    let packed = pack_bayer(&mosaic)?;
    println!("mosaic {h}x{w} -> packed {:?}", packed.tensor().shape());
    for (c, name) in ["R", "G1", "B", "G2"].iter().enumerate() {
        println!("{name:>2}: {:?}", packed.tensor().plane(c));
    }

    let back = unpack_bayer(&packed);
    assert_eq!(back, mosaic);
    println!("unpack(pack(m)) == m");

    // odd sides cannot hold whole 2x2 cells
    match BayerMosaic::new(3, 4, vec![0.0; 12]) {
        Err(e) => println!("3x4 mosaic rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

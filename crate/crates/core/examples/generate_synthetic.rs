//! Writes the default rotating-subspace dataset to disk and reads it back.
//!
//!     cargo run --example generate_synthetic -- [out_dir] [seed]

use std::path::PathBuf;

use node_escm::io::{load_dataset, save_dataset};
use node_escm::synth::{generate, SynthConfig};

fn main() -> node_escm::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("node-escm-synthetic"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = SynthConfig { seed, ..SynthConfig::default() };
    let synth = generate(&cfg)?;
    let data = &synth.dataset;
    println!(
        "{} snapshots of {} points in R^{}: {} subspaces of dim {}",
        data.len(),
        data.points(),
        data.features(),
        cfg.subspaces,
        cfg.subspace_dim
    );
    for (w, r) in data.timestamps().windows(2).zip(&synth.rotations) {
        println!("  {:.1} -> {:.1}: Givens rotation in plane ({}, {}) by {:+.4} rad", w[0], w[1], r.a, r.b, r.theta);
    }

    let manifest = save_dataset(&out, data)?;
    let back = load_dataset(&manifest)?;
    assert_eq!(&back, data);
    println!("wrote {} (reloads bit-exactly)", manifest.display());
    Ok(())
}

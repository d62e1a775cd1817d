//! Trains on an irregular subset of the snapshots, then clusters at the
//! times that were held out. The field is continuous in time, so nothing
//! special happens at unobserved points.
//!
//!     cargo run --release --example irregular_times -- [seed]

use node_escm::evaluation::clustering_accuracy;
use node_escm::io::RunConfig;
use node_escm::pipeline::{cluster_at, train_run};
use node_escm::synth::generate;

fn main() -> node_escm::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.set_seed(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0));
    let full = generate(&cfg.synth)?.dataset;

    // Observe t = 1, 3, 4, 6, 8, 10 (of 10).
    let observed = full.subset(&[0, 2, 3, 5, 7, 9])?;
    println!("training on t = {:?}", observed.timestamps());
    let run = train_run(&observed, &cfg)?;
    println!("final recon term {:.5}", run.report.final_record().recon);

    let held_out = [0.2, 0.5, 0.7, 0.9];
    let labels = cluster_at(&run.checkpoint, &observed, &held_out, 5, &cfg)?;
    let truth = full.labels().expect("synthetic data is labelled");
    for (t, l) in labels.times.iter().zip(&labels.labels) {
        println!("held-out t = {t:.1}: accuracy {:.4}", clustering_accuracy(l, truth)?);
    }
    Ok(())
}

//! Trains the field on the default synthetic data and clusters every
//! snapshot from the learned trajectory.
//!
//!     cargo run --release --example train_synthetic -- [seed] [epochs]

use node_escm::io::RunConfig;
use node_escm::pipeline::{cluster_at, evaluate, resolve_k, train_run_with};
use node_escm::synth::generate;

fn main() -> node_escm::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.set_seed(args.next().and_then(|s| s.parse().ok()).unwrap_or(0));
    if let Some(epochs) = args.next().and_then(|s| s.parse().ok()) {
        cfg.train.epochs = epochs;
    }
    let data = generate(&cfg.synth)?.dataset;

    let run = train_run_with(&data, &cfg, |r| {
        if r.epoch == 1 || r.epoch % 10 == 0 {
            println!(
                "epoch {:>3}  recon {:.5}  l1 {:.5}  lr {:.1e}  {:.2}s",
                r.epoch, r.recon, r.l1, r.learning_rate, r.seconds
            );
        }
    })?;
    println!(
        "converged (within 1%) at epoch {} by total loss, {} by reconstruction",
        run.report.convergence_epoch, run.report.recon_convergence_epoch
    );

    let k = resolve_k(&cfg, &data)?;
    let labels = cluster_at(&run.checkpoint, &data, data.timestamps(), k, &cfg)?;
    let report = evaluate("node-escm", &labels, &data)?;
    for s in &report.steps {
        println!("t = {:.1}  accuracy {:.4}", s.time, s.accuracy);
    }
    println!("mean accuracy {:.4}", report.mean_accuracy);
    Ok(())
}

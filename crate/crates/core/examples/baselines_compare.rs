//! Static SSC, AFFECT smoothing and CESM on the synthetic series.
//!
//!     cargo run --release --example baselines_compare -- [seed] [noise]

use std::time::Instant;

use node_escm::io::RunConfig;
use node_escm::pipeline::{baseline_labels, evaluate, Method};
use node_escm::synth::generate;

fn main() -> node_escm::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.set_seed(args.next().and_then(|s| s.parse().ok()).unwrap_or(0));
    if let Some(noise) = args.next().and_then(|s| s.parse().ok()) {
        cfg.synth.noise = noise;
    }
    let data = generate(&cfg.synth)?.dataset;

    for method in Method::ALL {
        let started = Instant::now();
        let labels = baseline_labels(method, &data, 5, &cfg)?;
        let report = evaluate(method.name(), &labels, &data)?;
        let curve: Vec<String> = report.steps.iter().map(|s| format!("{:.2}", s.accuracy)).collect();
        println!(
            "{:<7} mean {:.4}  [{}]  {:.1}s",
            method.name(),
            report.mean_accuracy,
            curve.join(" "),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

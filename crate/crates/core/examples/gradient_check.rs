//! Finite-difference check of every parameter group of a small tracker.

use vltrack::bench::{generate_dataset, GenConfig};
use vltrack::numerics::gradcheck::TOLERANCE;
use vltrack::pipeline::train::fixed_sample;
use vltrack::pipeline::{Tracker, TrackerConfig};
use vltrack::textenc::TextVocab;

fn main() -> vltrack::Result<()> {
    let cfg = TrackerConfig {
        channels: 16,
        model_dim: 16,
        visual_layers: 1,
        bins: 20,
        ..TrackerConfig::toy()
    };
    let seqs = generate_dataset(&GenConfig { count: 2, length: 2, ..GenConfig::default() })?;
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    let tracker = Tracker::new(cfg.clone(), TextVocab::build(&captions)?)?;
    let batch = seqs.iter().map(|s| fixed_sample(&cfg, s)).collect::<vltrack::Result<Vec<_>>>()?;
    let report = tracker.gradient_check(&batch, 2, 0)?;
    for g in report.groups.iter().take(8) {
        println!("{:<40} max|g|={:.2e} rel_err={:.2e}", g.name, g.max_abs_grad, g.max_rel_error);
    }
    println!("... {} groups, worst relative error {:.2e} (tolerance {TOLERANCE:e})", report.groups.len(), report.max_rel_error());
    Ok(())
}

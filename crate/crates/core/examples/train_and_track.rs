//! Trains a toy tracker on synthetic videos, then tracks held-out videos and
//! reports success AUC and 8px precision. Pass the step count as the first
//! argument (default 4000, a few minutes on one core).

use vltrack::bench::{evaluate_tracker, generate_dataset, GenConfig};
use vltrack::pipeline::train::train;
use vltrack::pipeline::{Tracker, TrackerConfig, TrainConfig};
use vltrack::textenc::TextVocab;

fn main() -> vltrack::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let mut seqs = generate_dataset(&GenConfig { count: 40, seed: 3, ..GenConfig::default() })?;
    let test = seqs.split_off(32);
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    let mut tracker = Tracker::new(TrackerConfig::toy(), TextVocab::build(&captions)?)?;
    let tc = TrainConfig { steps, ..TrainConfig::default() };
    let mut window = Vec::new();
    train(&mut tracker, &seqs, &tc, |step, s| {
        window.push(s.loss);
        if (step + 1) % 50 == 0 {
            println!("step {:5}  loss {:.3}", step + 1, window.iter().sum::<f64>() / window.len() as f64);
            window.clear();
        }
    })?;
    let (report, preds) = evaluate_tracker(&tracker, &test, 8.0)?;
    println!("first boxes of {}: {:.1?}", test[0].name, preds[0][..3].iter().map(|b| b.xywh()).collect::<Vec<_>>());
    println!("success auc {:.3}  precision@8px {:.3}  normalized precision {:.3}", report.success_auc, report.precision, report.normalized_precision);
    Ok(())
}

//! Cross-entropy-only overfitting of eight fixed training pairs.

use vltrack::bench::{generate_dataset, GenConfig};
use vltrack::numerics::OptimHyper;
use vltrack::pipeline::train::fixed_sample;
use vltrack::pipeline::{LrSchedule, Tracker, TrackerConfig};
use vltrack::textenc::TextVocab;

fn main() -> vltrack::Result<()> {
    let cfg = TrackerConfig::toy();
    let seqs = generate_dataset(&GenConfig::default())?;
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    let mut tracker = Tracker::new(cfg.clone(), TextVocab::build(&captions)?)?;
    let batch = seqs.iter().map(|s| fixed_sample(&cfg, s)).collect::<vltrack::Result<Vec<_>>>()?;
    let schedule = LrSchedule { base: 1e-3, warmup: 50, total: 2000 };
    for step in 0..2000 {
        let hyper = OptimHyper { learning_rate: schedule.at(step), ..OptimHyper::default() };
        tracker.train_step(&batch, &hyper)?;
        let s = tracker.evaluate_batch(&batch)?;
        if step % 25 == 0 || s.accuracy >= 0.99 && s.loss <= 0.05 {
            println!("step {step:4}  loss {:.4}  token accuracy {:.3}", s.loss, s.accuracy);
        }
        if s.accuracy >= 0.99 && s.loss <= 0.05 {
            break;
        }
    }
    let (b, d) = tracker.predict(&batch[0].template, &batch[0].search, &batch[0].caption)?;
    println!("target {:.1?}\npredicted {:.1?} (eos={})", batch[0].target.coords, b.to_corner().coords, d.eos);
    Ok(())
}

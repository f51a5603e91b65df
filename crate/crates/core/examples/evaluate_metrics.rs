//! Scores noisy predictions against ground truth and writes `report.json` and
//! `curves.csv`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vltrack::bench::metrics::{evaluate, SequenceResult};
use vltrack::bench::{generate_dataset, Difficulty, GenConfig};
use vltrack::seqtok::BBox;

fn main() -> vltrack::Result<()> {
    let seqs = generate_dataset(&GenConfig { count: 6, difficulty: Difficulty::Hard, ..GenConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let preds: Vec<Vec<BBox>> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let noise = 1.0 + 2.0 * i as f64;
            s.boxes
                .iter()
                .map(|b| b.translate(rng.random_range(-noise..noise), rng.random_range(-noise..noise)))
                .collect()
        })
        .collect();
    let results: Vec<SequenceResult> = seqs
        .iter()
        .zip(&preds)
        .map(|(s, p)| SequenceResult {
            name: &s.name,
            attributes: s.meta.attributes.iter().map(|a| a.name().to_string()).collect(),
            pred: p,
            gt: &s.boxes,
        })
        .collect();
    let report = evaluate(&results, 8.0)?;
    for s in &report.sequences {
        println!("{}  auc {:.3}  p@8 {:.3}  p_norm {:.3}  {:?}", s.name, s.success_auc, s.precision, s.normalized_precision, s.attributes);
    }
    for (name, a) in &report.attributes {
        println!("{name:<16} n={} auc {:.3}", a.sequences, a.success_auc);
    }
    let out = std::env::temp_dir().join("vltrack_report");
    report.write(&out)?;
    println!("overall auc {:.3}; report in {}", report.success_auc, out.display());
    Ok(())
}

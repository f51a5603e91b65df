//! Synthetic benchmark, evaluation metrics and the ablation harness.

pub mod ablation;
pub mod dataset;
pub mod metrics;

pub use dataset::{generate_dataset, generate_sequence, read_dataset, write_dataset, Difficulty, GenConfig, SyntheticSequence};
pub use metrics::{evaluate, MetricsReport, SequenceResult};

use crate::error::Result;
use crate::pipeline::Tracker;
use crate::seqtok::BBox;

/// Tracks every sequence from its first ground-truth box and scores the
/// predictions. Returns the report and the per-sequence predictions.
pub fn evaluate_tracker(
    tracker: &Tracker,
    seqs: &[SyntheticSequence],
    threshold_px: f64,
) -> Result<(MetricsReport, Vec<Vec<BBox>>)> {
    let preds = seqs
        .iter()
        .map(|s| tracker.track_video(&s.frames, &s.caption, &s.boxes[0]))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<SequenceResult<'_>> = seqs
        .iter()
        .zip(&preds)
        .map(|(s, p)| SequenceResult {
            name: &s.name,
            attributes: s.meta.attributes.iter().map(|a| a.name().to_string()).collect(),
            pred: p,
            gt: &s.boxes,
        })
        .collect();
    Ok((evaluate(&results, threshold_px)?, preds))
}

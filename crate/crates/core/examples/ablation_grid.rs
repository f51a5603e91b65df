//! A miniature query-mode x box-format x bins grid. Training is kept to a
//! handful of steps so the example finishes quickly; the numbers only show
//! the table layout.

use vltrack::bench::ablation::{factorial_grid, format_table, run_ablation};
use vltrack::bench::{generate_dataset, GenConfig};
use vltrack::pipeline::{TrackerConfig, TrainConfig};
use vltrack::seqtok::{BoxFormat, QueryMode};
use vltrack::textenc::TextVocab;

fn main() -> vltrack::Result<()> {
    let mut seqs = generate_dataset(&GenConfig { count: 6, length: 6, ..GenConfig::default() })?;
    let test = seqs.split_off(4);
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    let base = TrackerConfig { visual_layers: 1, text_layers: 1, ..TrackerConfig::toy() };
    let tc = TrainConfig { steps: 3, batch_size: 2, warmup_steps: 1, ..TrainConfig::default() };
    let grid = factorial_grid(&[50, 1000], &[BoxFormat::Corner, BoxFormat::Center], &[QueryMode::MultiCues, QueryMode::SingleCue]);
    let rows = run_ablation(&base, &grid, &tc, &TextVocab::build(&captions)?, &seqs, &test, 8.0, 2)?;
    print!("{}", format_table(&rows));
    Ok(())
}

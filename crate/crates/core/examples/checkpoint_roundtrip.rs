//! Saves a tracker, loads it back and checks both copies track identically.

use vltrack::bench::{generate_dataset, GenConfig};
use vltrack::cli::checkpoint::{load_checkpoint, save_checkpoint};
use vltrack::pipeline::{Tracker, TrackerConfig};
use vltrack::textenc::TextVocab;

fn main() -> vltrack::Result<()> {
    let seqs = generate_dataset(&GenConfig { count: 1, length: 6, ..GenConfig::default() })?;
    let seq = &seqs[0];
    let tracker = Tracker::new(TrackerConfig::toy(), TextVocab::build(&[seq.caption.as_str()])?)?;
    let dir = std::env::temp_dir();
    let (a, b) = (dir.join("vltrack_a.mmtk"), dir.join("vltrack_b.mmtk"));
    save_checkpoint(&tracker, &a)?;
    let loaded = load_checkpoint(&a, None)?;
    save_checkpoint(&loaded, &b)?;
    let same_bytes = std::fs::read(&a)? == std::fs::read(&b)?;
    let p1 = tracker.track_video(&seq.frames, &seq.caption, &seq.boxes[0])?;
    let p2 = loaded.track_video(&seq.frames, &seq.caption, &seq.boxes[0])?;
    println!("{} bytes, identical re-save: {same_bytes}, identical tracks: {}", std::fs::metadata(&a)?.len(), p1 == p2);
    let wrong = load_checkpoint(&a, Some(&TrackerConfig::full()));
    println!("loading under the full preset: {}", wrong.err().map(|e| e.to_string()).unwrap_or_default());
    Ok(())
}

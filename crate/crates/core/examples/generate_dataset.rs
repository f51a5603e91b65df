//! Generates a small synthetic benchmark and writes it in the on-disk layout
//! (`frame_%06d.ppm`, `groundtruth.txt`, `language.txt`, `meta.json`).

use vltrack::bench::dataset::{read_dataset, write_dataset};
use vltrack::bench::{generate_dataset, Difficulty, GenConfig};

fn main() -> vltrack::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("vltrack_dataset"));
    let seqs = generate_dataset(&GenConfig {
        count: 4,
        seed: 7,
        difficulty: Difficulty::Hard,
        ..GenConfig::default()
    })?;
    write_dataset(&out, &seqs)?;
    for s in &seqs {
        let tags: Vec<&str> = s.meta.attributes.iter().map(|a| a.name()).collect();
        println!("{}  {:<48} objects={} tags={tags:?}", s.name, s.caption, s.meta.objects.len());
    }
    let back = read_dataset(&out)?;
    assert_eq!(back, seqs);
    println!("wrote and re-read {} sequences under {}", back.len(), out.display());
    Ok(())
}

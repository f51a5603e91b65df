//! Grid runs over query construction, box format and bin count.

use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate_tracker, SyntheticSequence};
use crate::error::{Error, Result};
use crate::pipeline::train::{train, TrainConfig};
use crate::pipeline::{Tracker, TrackerConfig};
use crate::seqtok::{BoxFormat, QueryMode};
use crate::textenc::TextVocab;

/// One grid cell: `key=value` settings applied on top of the base config.
pub type Override = Vec<(String, String)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub overrides: String,
    pub query_mode: QueryMode,
    pub box_format: BoxFormat,
    pub bins: usize,
    pub success_auc: f64,
    pub normalized_precision: f64,
    pub precision: f64,
}

/// Parses `"bins=50,box_format=center"`.
pub fn parse_override(text: &str) -> Result<Override> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn format_override(o: &Override) -> String {
    o.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

pub fn apply_override(base: &TrackerConfig, o: &Override) -> Result<TrackerConfig> {
    let mut cfg = base.clone();
    for (k, v) in o {
        if !cfg.set(k, v)? {
            return Err(Error::Config(format!("`{k}` is not a tracker setting")));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Full factorial grid: query mode x box format x bins.
pub fn factorial_grid(bins: &[usize], formats: &[BoxFormat], modes: &[QueryMode]) -> Vec<Override> {
    let mut out = Vec::new();
    for &m in modes {
        for &f in formats {
            for &k in bins {
                out.push(vec![
                    ("query_mode".to_string(), m.to_string()),
                    ("box_format".to_string(), f.to_string()),
                    ("bins".to_string(), k.to_string()),
                ]);
            }
        }
    }
    out
}

fn run_cell(
    base: &TrackerConfig,
    cell: &Override,
    tc: &TrainConfig,
    vocab: &TextVocab,
    train_set: &[SyntheticSequence],
    test_set: &[SyntheticSequence],
    threshold_px: f64,
) -> Result<AblationRow> {
    let cfg = apply_override(base, cell)?;
    let mut tracker = Tracker::new(cfg.clone(), vocab.clone())?;
    train(&mut tracker, train_set, tc, |_, _| {})?;
    let (report, _) = evaluate_tracker(&tracker, test_set, threshold_px)?;
    Ok(AblationRow {
        overrides: format_override(cell),
        query_mode: cfg.query_mode,
        box_format: cfg.box_format,
        bins: cfg.bins,
        success_auc: report.success_auc,
        normalized_precision: report.normalized_precision,
        precision: report.precision,
    })
}

/// Trains and evaluates every cell from the same seeds. Cells are spread
/// over `workers` threads; results come back in grid order.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    base: &TrackerConfig,
    grid: &[Override],
    tc: &TrainConfig,
    vocab: &TextVocab,
    train_set: &[SyntheticSequence],
    test_set: &[SyntheticSequence],
    threshold_px: f64,
    workers: usize,
) -> Result<Vec<AblationRow>> {
    for cell in grid {
        apply_override(base, cell)?;
    }
    let slots: Vec<Mutex<Option<Result<AblationRow>>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, grid.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= grid.len() {
                    break;
                }
                let row = run_cell(base, &grid[i], tc, vocab, train_set, test_set, threshold_px);
                *slots[i].lock().expect("slot") = Some(row);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("every cell ran"))
        .collect()
}

/// Tab-separated table with one row per cell.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("query\tformat\tbins\tauc\tp_norm\tp\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            r.query_mode, r.box_format, r.bins, r.success_auc, r.normalized_precision, r.precision
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parsing() {
        let o = parse_override("bins=50, box_format=center").unwrap();
        assert_eq!(format_override(&o), "bins=50,box_format=center");
        assert!(parse_override("bins").is_err());
        let cfg = apply_override(&TrackerConfig::toy(), &o).unwrap();
        assert_eq!((cfg.bins, cfg.box_format), (50, BoxFormat::Center));
        assert!(apply_override(&TrackerConfig::toy(), &parse_override("steps=3").unwrap()).is_err());
        assert!(apply_override(&TrackerConfig::toy(), &parse_override("bins=1").unwrap()).is_err());
    }

    #[test]
    fn grid_size() {
        let g = factorial_grid(
            &[50, 100, 500, 1000],
            &[BoxFormat::Corner, BoxFormat::Center],
            &[QueryMode::MultiCues, QueryMode::SingleCue],
        );
        assert_eq!(g.len(), 16);
    }

    #[test]
    fn empty_grid_is_empty_table() {
        let vocab = TextVocab::build(&["x"]).unwrap();
        let rows = run_ablation(&TrackerConfig::toy(), &[], &TrainConfig::default(), &vocab, &[], &[], 8.0, 2).unwrap();
        assert!(rows.is_empty());
    }
}

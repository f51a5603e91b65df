//! Command-line front end. Every subcommand accepts `--config FILE`,
//! repeated `--set key=value`, `--preset toy|full` and `--seed`; later
//! sources override earlier ones (defaults, preset, file, flags).

pub mod checkpoint;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Preset, RunConfig};

use crate::bench::ablation::{factorial_grid, format_table, run_ablation};
use crate::bench::dataset::{self, read_boxes, read_caption, read_frames, write_boxes};
use crate::bench::{evaluate, evaluate_tracker, generate_dataset, Difficulty, GenConfig, SequenceResult};
use crate::error::{Error, Result};
use crate::numerics::gradcheck;
use crate::pipeline::train::{fixed_sample, train};
use crate::pipeline::Tracker;
use crate::seqtok::{BBox, BoxFormat, QueryMode};
use crate::textenc::TextVocab;

#[derive(Parser, Debug)]
#[command(name = "vltrack", version, about = "Vision-language tracking as coordinate-token generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key = value settings file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting, e.g. --set bins=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::preset(self.preset.unwrap_or(Preset::Toy));
        if let Some(path) = &self.config {
            c.apply_text(&fs::read_to_string(path)?)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            c.set(k, v)?;
        }
        if let Some(s) = self.seed {
            c.set("seed", &s.to_string())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Whether the user asked for a specific model layout.
    fn overrides_model(&self) -> bool {
        self.preset.is_some() || self.config.is_some() || !self.set.is_empty()
    }

    fn load(&self, path: &Path) -> Result<Tracker> {
        if self.overrides_model() {
            let cfg = self.resolve()?;
            load_checkpoint(path, Some(&cfg.tracker))
        } else {
            load_checkpoint(path, None)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic tracking dataset
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num: Option<usize>,
        #[arg(long)]
        difficulty: Option<String>,
        #[arg(long)]
        frame_size: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Train a tracker and write a checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (defaults to data_dir)
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Track one sequence directory and write one box per frame
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Initial box x,y,w,h (defaults to the first ground-truth line)
        #[arg(long)]
        init: Option<String>,
    },
    /// Score predictions against ground truth, or a checkpoint on a dataset
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "gt", conflicts_with_all = ["checkpoint", "data"])]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory for report.json and curves.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate a query-mode x box-format x bins grid
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Training sequences
        #[arg(long)]
        data: PathBuf,
        /// Evaluation sequences (defaults to the last fifth of --data)
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "50,100,500,1000")]
        bins: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "corner,center")]
        formats: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "multi-cues,single-cue")]
        modes: Vec<String>,
        /// Tab-separated output table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of the model
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        per_param: usize,
    },
    /// Measure tracking throughput in frames per second
    BenchSpeed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        frames: usize,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    main_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn vocab_of(seqs: &[dataset::SyntheticSequence]) -> Result<TextVocab> {
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    TextVocab::build(&captions)
}

fn parse_box(text: &str) -> Result<BBox> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad box `{text}`, expected x,y,w,h")))?;
    match v[..] {
        [x, y, w, h] => Ok(BBox::from_xywh(x, y, w, h)),
        _ => Err(Error::InvalidArgument(format!("bad box `{text}`, expected x,y,w,h"))),
    }
}

fn print_report(out: &mut dyn Write, r: &crate::bench::MetricsReport) -> Result<()> {
    writeln!(out, "success_auc={:.6}", r.success_auc)?;
    writeln!(out, "precision@{}px={:.6}", r.precision_threshold_px, r.precision)?;
    writeln!(out, "normalized_precision={:.6}", r.normalized_precision)?;
    Ok(())
}

fn run(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenData {
            common,
            out: dir,
            num,
            difficulty,
            frame_size,
            length,
        } => {
            let c = common.resolve()?;
            let gen = GenConfig {
                count: num.unwrap_or(c.num_sequences),
                seed: c.tracker.seed,
                difficulty: match difficulty {
                    Some(d) => d.parse()?,
                    None => c.difficulty,
                },
                frame_size: frame_size.unwrap_or(c.frame_size),
                length: length.unwrap_or(c.seq_length),
            };
            let seqs = generate_dataset(&gen)?;
            dataset::write_dataset(&dir, &seqs)?;
            writeln!(out, "wrote {} sequences to {}", seqs.len(), dir.display())?;
        }
        Command::Train {
            common,
            data,
            out: path,
            log_every,
        } => {
            let c = common.resolve()?;
            let seqs = dataset::read_dataset(&data.unwrap_or(c.data_dir.clone()))?;
            let mut tracker = Tracker::new(c.tracker.clone(), vocab_of(&seqs)?)?;
            writeln!(out, "parameters={}", tracker.params().num_scalars())?;
            let mut window = (0.0, 0.0, 0usize);
            let every = log_every.max(1);
            train(&mut tracker, &seqs, &c.train, |step, s| {
                window = (window.0 + s.loss, window.1 + s.accuracy, window.2 + 1);
                if (step + 1) % every == 0 {
                    let n = window.2 as f64;
                    let _ = writeln!(out, "step={} loss={:.4} accuracy={:.3}", step + 1, window.0 / n, window.1 / n);
                    window = (0.0, 0.0, 0);
                }
            })?;
            save_checkpoint(&tracker, &path)?;
            writeln!(out, "saved {}", path.display())?;
        }
        Command::Track {
            common,
            checkpoint,
            sequence,
            out: path,
            init,
        } => {
            let tracker = common.load(&checkpoint)?;
            let frames = read_frames(&sequence)?;
            let caption = read_caption(&sequence)?;
            let init = match init {
                Some(t) => parse_box(&t)?,
                None => *read_boxes(&sequence.join("groundtruth.txt"))?
                    .first()
                    .ok_or(Error::Empty("ground truth"))?,
            };
            let boxes = tracker.track_video(&frames, &caption, &init)?;
            write_boxes(&path, &boxes)?;
            writeln!(out, "tracked {} frames into {}", boxes.len(), path.display())?;
        }
        Command::Eval {
            common,
            pred,
            gt,
            checkpoint,
            data,
            out: report_dir,
        } => {
            let c = common.resolve()?;
            let report = match (pred, gt, checkpoint, data) {
                (Some(p), Some(g), _, _) => {
                    let (p, g) = (read_boxes(&p)?, read_boxes(&g)?);
                    let r = SequenceResult {
                        name: "sequence",
                        attributes: Vec::new(),
                        pred: &p,
                        gt: &g,
                    };
                    evaluate(&[r], c.precision_px)?
                }
                (_, _, Some(ck), Some(d)) => {
                    let tracker = common.load(&ck)?;
                    let seqs = dataset::read_dataset(&d)?;
                    evaluate_tracker(&tracker, &seqs, c.precision_px)?.0
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "eval needs --pred and --gt, or --checkpoint and --data".into(),
                    ))
                }
            };
            print_report(out, &report)?;
            if let Some(d) = report_dir {
                report.write(&d)?;
            }
        }
        Command::Ablate {
            common,
            data,
            test,
            bins,
            formats,
            modes,
            out: table_path,
        } => {
            let c = common.resolve()?;
            let mut train_set = dataset::read_dataset(&data)?;
            let test_set = match test {
                Some(t) => dataset::read_dataset(&t)?,
                None => {
                    let keep = train_set.len() - (train_set.len() / 5).max(1).min(train_set.len() - 1);
                    if keep == train_set.len() {
                        return Err(Error::InvalidArgument("need at least two sequences to hold one out".into()));
                    }
                    train_set.split_off(keep)
                }
            };
            let formats = formats.iter().map(|f| f.parse()).collect::<Result<Vec<BoxFormat>>>()?;
            let modes = modes.iter().map(|m| m.parse()).collect::<Result<Vec<QueryMode>>>()?;
            let grid = factorial_grid(&bins, &formats, &modes);
            let rows = run_ablation(
                &c.tracker,
                &grid,
                &c.train,
                &vocab_of(&train_set)?,
                &train_set,
                &test_set,
                c.precision_px,
                c.workers,
            )?;
            let table = format_table(&rows);
            write!(out, "{table}")?;
            if let Some(p) = table_path {
                fs::write(p, &table)?;
            }
        }
        Command::Gradcheck { common, per_param } => {
            let c = common.resolve()?;
            let seqs = generate_dataset(&GenConfig {
                count: 2,
                seed: c.tracker.seed,
                difficulty: Difficulty::Easy,
                frame_size: c.frame_size,
                length: 2,
            })?;
            let tracker = Tracker::new(c.tracker.clone(), vocab_of(&seqs)?)?;
            let batch = seqs
                .iter()
                .map(|s| fixed_sample(&c.tracker, s))
                .collect::<Result<Vec<_>>>()?;
            let report = tracker.gradient_check(&batch, per_param, c.tracker.seed)?;
            let worst = report.worst().ok_or(Error::Empty("parameter set"))?;
            writeln!(out, "groups={}", report.groups.len())?;
            writeln!(out, "worst_group={}", worst.name)?;
            writeln!(out, "max_relative_error={:.3e}", report.max_rel_error())?;
            let pass = report.max_rel_error() <= gradcheck::TOLERANCE;
            writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
            return Ok(if pass { 0 } else { 1 });
        }
        Command::BenchSpeed {
            common,
            checkpoint,
            frames,
        } => {
            let c = common.resolve()?;
            let seq = dataset::generate_sequence("bench", c.tracker.seed, Difficulty::Easy, c.frame_size, frames.max(2))?;
            let tracker = match checkpoint {
                Some(p) => common.load(&p)?,
                None => Tracker::new(c.tracker.clone(), vocab_of(std::slice::from_ref(&seq))?)?,
            };
            let start = Instant::now();
            let boxes = tracker.track_video(&seq.frames, &seq.caption, &seq.boxes[0])?;
            let secs = start.elapsed().as_secs_f64();
            let tracked = boxes.len() - 1;
            writeln!(out, "frames={tracked}")?;
            writeln!(out, "seconds={secs:.3}")?;
            writeln!(out, "frames_per_sec={:.2}", tracked as f64 / secs)?;
        }
    }
    Ok(0)
}

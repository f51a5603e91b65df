use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::Difficulty;
use crate::error::{Error, Result};
use crate::pipeline::{TrackerConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Toy,
    Full,
}

/// Everything a run needs: model, optimizer, data generation and evaluation
/// settings. Serialized as `key = value` lines with `#` comments.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub train: TrainConfig,
    pub data_dir: PathBuf,
    pub num_sequences: usize,
    pub seq_length: usize,
    pub frame_size: usize,
    pub difficulty: Difficulty,
    pub precision_px: f64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Toy)
    }
}

const RUN_KEYS: [(&str, &str); 18] = [
    ("steps", "optimizer steps"),
    ("batch_size", "samples per step"),
    ("learning_rate", "peak AdamW learning rate"),
    ("beta1", "AdamW first-moment decay"),
    ("beta2", "AdamW second-moment decay"),
    ("eps", "AdamW denominator epsilon"),
    ("weight_decay", "decoupled weight decay"),
    ("warmup_steps", "linear warmup length"),
    ("max_frame_gap", "largest template/search frame distance"),
    ("center_jitter", "search-center jitter, in box-size units"),
    ("scale_jitter", "log-scale jitter of the search region"),
    ("data_dir", "dataset directory"),
    ("num_sequences", "sequences written by gen-data"),
    ("seq_length", "frames per generated sequence"),
    ("frame_size", "generated frame side in pixels"),
    ("difficulty", "easy | hard"),
    ("precision_px", "center-error threshold of the precision score"),
    ("workers", "parallel ablation cells"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let tracker = match p {
            Preset::Toy => TrackerConfig::toy(),
            Preset::Full => TrackerConfig::full(),
        };
        RunConfig {
            tracker,
            train: TrainConfig::default(),
            data_dir: PathBuf::from("data"),
            num_sequences: 8,
            seq_length: 30,
            frame_size: 128,
            difficulty: Difficulty::Easy,
            precision_px: 20.0,
            workers: 1,
        }
    }

    /// Applies one setting. `seed` drives both initialization and sampling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "seed" => {
                self.tracker.seed = parse(&key, v)?;
                self.train.seed = self.tracker.seed;
            }
            "steps" => self.train.steps = parse(&key, v)?,
            "batch_size" => self.train.batch_size = parse(&key, v)?,
            "learning_rate" => self.train.hyper.learning_rate = parse(&key, v)?,
            "beta1" => self.train.hyper.beta1 = parse(&key, v)?,
            "beta2" => self.train.hyper.beta2 = parse(&key, v)?,
            "eps" => self.train.hyper.eps = parse(&key, v)?,
            "weight_decay" => self.train.hyper.weight_decay = parse(&key, v)?,
            "warmup_steps" => self.train.warmup_steps = parse(&key, v)?,
            "max_frame_gap" => self.train.max_frame_gap = parse(&key, v)?,
            "center_jitter" => self.train.center_jitter = parse(&key, v)?,
            "scale_jitter" => self.train.scale_jitter = parse(&key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "num_sequences" => self.num_sequences = parse(&key, v)?,
            "seq_length" => self.seq_length = parse(&key, v)?,
            "frame_size" => self.frame_size = parse(&key, v)?,
            "difficulty" => self.difficulty = v.parse()?,
            "precision_px" => self.precision_px = parse(&key, v)?,
            "workers" => self.workers = parse(&key, v)?,
            _ => {
                if !self.tracker.set(&key, v)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines onto `self`. A `preset` line resets every
    /// field and must come before any other key.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen_other = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                if seen_other {
                    return Err(Error::Config(format!("line {}: preset must come first", n + 1)));
                }
                let p = match v {
                    "toy" => Preset::Toy,
                    "full" => Preset::Full,
                    _ => return Err(Error::Config(format!("line {}: unknown preset `{v}`", n + 1))),
                };
                *self = RunConfig::preset(p);
                continue;
            }
            seen_other = true;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(&fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.train.validate()?;
        if self.precision_px < 0.0 || !self.precision_px.is_finite() {
            return Err(Error::Config("precision_px must be a non-negative number".into()));
        }
        Ok(())
    }

    /// Every setting with a one-line description; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let h = &self.train.hyper;
        let run_values = [
            self.train.steps.to_string(),
            self.train.batch_size.to_string(),
            h.learning_rate.to_string(),
            h.beta1.to_string(),
            h.beta2.to_string(),
            h.eps.to_string(),
            h.weight_decay.to_string(),
            self.train.warmup_steps.to_string(),
            self.train.max_frame_gap.to_string(),
            self.train.center_jitter.to_string(),
            self.train.scale_jitter.to_string(),
            self.data_dir.display().to_string(),
            self.num_sequences.to_string(),
            self.seq_length.to_string(),
            self.frame_size.to_string(),
            self.difficulty.to_string(),
            self.precision_px.to_string(),
            self.workers.to_string(),
        ];
        out.push_str("# model\n");
        for (k, v) in self.tracker.to_map_ordered() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("# training, data and evaluation\n");
        for ((k, doc), v) in RUN_KEYS.iter().zip(run_values) {
            let _ = writeln!(out, "{k} = {v}  # {doc}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::preset(Preset::Full);
        c.set("learning-rate", "0.0005").unwrap();
        c.set("seed", "11").unwrap();
        c.set("difficulty", "hard").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn precedence_and_errors() {
        let mut c = RunConfig::default();
        c.apply_text("preset = full\n# comment\nbins = 50  # trailing\n").unwrap();
        assert_eq!(c.tracker.bins, 50);
        assert_eq!(c.tracker.model_dim, 256);
        assert!(RunConfig::default().apply_text("colour = red").is_err());
        assert!(RunConfig::default().apply_text("bins = 50\npreset = toy").is_err());
        assert!(RunConfig::default().apply_text("bins 50").is_err());
        let mut s = RunConfig::default();
        s.set("seed", "4").unwrap();
        assert_eq!((s.tracker.seed, s.train.seed), (4, 4));
    }
}

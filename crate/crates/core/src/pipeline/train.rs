use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{box_frame_to_search, crop_region, StepStats, Tracker, TrackerConfig};
use crate::bench::SyntheticSequence;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::OptimHyper;
use crate::seqtok::BBox;

/// One training triplet; `target` is in search-region pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub template: Image,
    pub search: Image,
    pub caption: String,
    pub target: BBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub hyper: OptimHyper,
    pub warmup_steps: usize,
    /// Largest frame distance between template and search frames.
    pub max_frame_gap: usize,
    /// Search-center offset, uniform per axis, in units of `sqrt(w * h)`.
    pub center_jitter: f64,
    /// Log-scale jitter of the search-region size.
    pub scale_jitter: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 8,
            hyper: OptimHyper {
                learning_rate: 1e-3,
                ..OptimHyper::default()
            },
            warmup_steps: 200,
            max_frame_gap: 5,
            center_jitter: 0.5,
            scale_jitter: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.center_jitter >= 0.0) || !(self.scale_jitter >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        self.hyper.validate()
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.hyper.learning_rate,
            warmup: self.warmup_steps,
            total: self.steps,
        }
    }
}

/// Linear warmup, then the base rate, dropping tenfold for the last sixth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        let warm = if step < self.warmup {
            (step + 1) as f64 / self.warmup as f64
        } else {
            1.0
        };
        let drop = if 6 * step >= 5 * self.total { 0.1 } else { 1.0 };
        self.base * warm * drop
    }
}

fn make_sample(
    cfg: &TrackerConfig,
    seq: &SyntheticSequence,
    template_frame: usize,
    search_frame: usize,
    search_box: &BBox,
) -> Result<TrainSample> {
    let (template, _) = crop_region(
        &seq.frames[template_frame],
        &seq.boxes[template_frame],
        cfg.template_factor,
        cfg.template_size,
    )?;
    let (search, t) = crop_region(&seq.frames[search_frame], search_box, cfg.search_factor, cfg.search_size)?;
    let s = cfg.search_extent();
    let target = box_frame_to_search(&seq.boxes[search_frame], &t)?.clamp_to(s, s);
    Ok(TrainSample {
        template,
        search,
        caption: seq.caption.clone(),
        target,
    })
}

/// Unjittered pair: template from frame 0, search from frame 1 (or 0)
/// centered on the ground truth.
pub fn fixed_sample(cfg: &TrackerConfig, seq: &SyntheticSequence) -> Result<TrainSample> {
    if seq.frames.is_empty() {
        return Err(Error::Empty("sequence"));
    }
    let t = 1.min(seq.frames.len() - 1);
    make_sample(cfg, seq, 0, t, &seq.boxes[t])
}

/// Random pair from `seq`: frames at most `max_frame_gap` apart and a search
/// region around a jittered copy of the ground truth.
pub fn random_sample<R: Rng>(cfg: &TrackerConfig, tc: &TrainConfig, seq: &SyntheticSequence, rng: &mut R) -> Result<TrainSample> {
    let n = seq.frames.len();
    if n == 0 {
        return Err(Error::Empty("sequence"));
    }
    let tf = rng.random_range(0..n);
    let lo = tf.saturating_sub(tc.max_frame_gap);
    let hi = (tf + tc.max_frame_gap).min(n - 1);
    let sf = rng.random_range(lo..=hi);
    let gt = seq.boxes[sf].to_center();
    let [cx, cy, w, h] = gt.coords;
    let unit = (w * h).sqrt();
    let dx = rng.random_range(-1.0..=1.0) * tc.center_jitter * unit;
    let dy = rng.random_range(-1.0..=1.0) * tc.center_jitter * unit;
    let sc = (rng.random_range(-1.0..=1.0) * tc.scale_jitter).exp();
    let jittered = BBox::center(cx + dx, cy + dy, w * sc, h * sc);
    make_sample(cfg, seq, tf, sf, &jittered)
}

/// `batch_size` random samples; sequences are drawn uniformly.
pub fn random_batch<R: Rng>(cfg: &TrackerConfig, tc: &TrainConfig, seqs: &[SyntheticSequence], rng: &mut R) -> Result<Vec<TrainSample>> {
    if seqs.is_empty() {
        return Err(Error::Empty("training sequences"));
    }
    (0..tc.batch_size)
        .map(|_| {
            let i = rng.random_range(0..seqs.len());
            random_sample(cfg, tc, &seqs[i], rng)
        })
        .collect()
}

/// Runs `tc.steps` optimizer steps on random batches, calling `on_step`
/// after each. Reproducible from `tc.seed`.
pub fn train(
    tracker: &mut Tracker,
    seqs: &[SyntheticSequence],
    tc: &TrainConfig,
    mut on_step: impl FnMut(usize, &StepStats),
) -> Result<Vec<StepStats>> {
    tc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let schedule = tc.schedule();
    let cfg = tracker.config().clone();
    let mut trace = Vec::with_capacity(tc.steps);
    for step in 0..tc.steps {
        let batch = random_batch(&cfg, tc, seqs, &mut rng)?;
        let hyper = OptimHyper {
            learning_rate: schedule.at(step),
            ..tc.hyper
        };
        let stats = tracker.train_step(&batch, &hyper)?;
        on_step(step, &stats);
        trace.push(stats);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = LrSchedule {
            base: 1.0,
            warmup: 4,
            total: 12,
        };
        assert_eq!(s.at(0), 0.25);
        assert_eq!(s.at(3), 1.0);
        assert_eq!(s.at(9), 1.0);
        assert!((s.at(10) - 0.1).abs() < 1e-15);
        let none = LrSchedule {
            base: 2.0,
            warmup: 0,
            total: 6,
        };
        assert_eq!(none.at(0), 2.0);
    }
}

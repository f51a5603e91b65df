//! The tracker: parameter layout, teacher-forced training and video inference.

mod config;
pub mod crop;
pub mod train;

pub use config::TrackerConfig;
pub use crop::{box_frame_to_search, box_search_to_frame, crop_region, CropTransform};
pub use train::{LrSchedule, TrainConfig, TrainSample};

use crate::decoder::{self, decoder_specs, Decoded, Memory};
use crate::error::{Error, Result};
use crate::fusion::{self, fusion_specs, Gate, Modality};
use crate::image::Image;
use crate::numerics::gradcheck::{self, GradCheckReport};
use crate::numerics::nn::Specs;
use crate::numerics::{Graph, OptimHyper, ParamStore, Tensor, Var};
use crate::seqtok::{self, box_to_tokens, query_specs, tokens_to_box, BBox, QueryMode, BOX_TOKENS};
use crate::textenc::{self, text_specs, TextVocab};
use crate::visenc::{self, visual_specs};

/// Every parameter of the model, in initialization order.
pub fn param_specs(cfg: &TrackerConfig, text_vocab_size: usize) -> Specs {
    let mut s = Specs::new(cfg.init_std);
    text_specs(&mut s, cfg, text_vocab_size);
    visual_specs(&mut s, cfg);
    fusion_specs(&mut s, cfg);
    query_specs(&mut s, cfg.query_mode, cfg.channels, cfg.model_dim, cfg.bins);
    decoder_specs(&mut s, cfg);
    s
}

/// Teacher-forced loss and token accuracy of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracker {
    config: TrackerConfig,
    vocab: TextVocab,
    params: ParamStore,
}

struct Encoded {
    memory: Memory,
    pooled: Option<Var>,
}

impl Tracker {
    /// Freshly initialized tracker seeded by `config.seed`.
    pub fn new(config: TrackerConfig, vocab: TextVocab) -> Result<Self> {
        config.validate()?;
        let params = param_specs(&config, vocab.len()).build(config.seed)?;
        Ok(Tracker { config, vocab, params })
    }

    /// Reassembles a tracker from stored parts, checking that the parameter
    /// set matches the layout implied by `config`.
    pub fn from_parts(config: TrackerConfig, vocab: TextVocab, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config, vocab.len());
        if specs.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.params.len(),
                params.len()
            )));
        }
        for s in &specs.params {
            let t = params
                .get(&s.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
        }
        Ok(Tracker { config, vocab, params })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &TextVocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn caption_ids(&self, caption: &str) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode(caption)?;
        ids.truncate(self.config.max_text_len);
        Ok(ids)
    }

    fn pooled(&self, g: &mut Graph, text: Var, ranges: &[(usize, usize)]) -> Result<Option<Var>> {
        match self.config.query_mode {
            QueryMode::MultiCues => Ok(Some(g.segment_mean(text, ranges)?)),
            QueryMode::SingleCue => Ok(None),
        }
    }

    fn encode(&self, g: &mut Graph, pairs: &[(&Image, &Image)], text: Var, ranges: &[(usize, usize)]) -> Result<Encoded> {
        let (cfg, store) = (&self.config, &self.params);
        let pooled = self.pooled(g, text, ranges)?;
        let visual = visenc::encode_visual(g, store, cfg, pairs)?;
        let visual = fusion::reduce_channels(g, store, Modality::Visual, visual)?;
        let text = fusion::reduce_channels(g, store, Modality::Text, text)?;
        let fused = fusion::fuse_vl(g, store, cfg, visual, text, ranges, Gate::Learned)?;
        Ok(Encoded {
            memory: Memory::new(g, &fused)?,
            pooled,
        })
    }

    /// Target tokens of a box given in search-region pixels.
    pub fn target_tokens(&self, b: &BBox) -> Result<[usize; BOX_TOKENS]> {
        let s = self.config.search_extent();
        let b = b.clamp_to(s, s).to_format(self.config.box_format);
        box_to_tokens(&b, s, &self.config.vocab())
    }

    /// Builds the teacher-forced graph; returns the loss node, the logits and
    /// the target ids.
    fn forward(&self, g: &mut Graph, batch: &[TrainSample]) -> Result<(Var, Var, Vec<usize>)> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let cfg = &self.config;
        let vocab = cfg.vocab();
        let sentences = batch.iter().map(|s| self.caption_ids(&s.caption)).collect::<Result<Vec<_>>>()?;
        let (text, ranges) = textenc::encode_batch(g, &self.params, cfg, &sentences)?;
        let pairs: Vec<(&Image, &Image)> = batch.iter().map(|s| (&s.template, &s.search)).collect();
        let enc = self.encode(g, &pairs, text, &ranges)?;
        let mut prev = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len() * seqtok::QUERY_LEN);
        for s in batch {
            let t = self.target_tokens(&s.target)?;
            prev.push(t.to_vec());
            targets.extend_from_slice(&t);
            targets.push(vocab.eos());
        }
        let q = seqtok::build_conditional_queries(g, &self.params, cfg.query_mode, enc.pooled, &prev, &vocab)?;
        let hidden = decoder::decoder_forward(g, &self.params, cfg, &enc.memory, q, seqtok::QUERY_LEN)?;
        let logits = decoder::head_logits(g, &self.params, hidden)?;
        let loss = g.cross_entropy(logits, &targets)?;
        Ok((loss, logits, targets))
    }

    fn stats(g: &Graph, loss: Var, logits: Var, targets: &[usize]) -> StepStats {
        let l = g.value(logits);
        let hits = targets
            .iter()
            .enumerate()
            .filter(|&(r, &t)| decoder::argmax(l.row(r)) == t)
            .count();
        StepStats {
            loss: g.value(loss).item(),
            accuracy: hits as f64 / targets.len() as f64,
        }
    }

    /// Teacher-forced loss and accuracy without updating parameters.
    pub fn evaluate_batch(&self, batch: &[TrainSample]) -> Result<StepStats> {
        let mut g = Graph::new();
        let (loss, logits, targets) = self.forward(&mut g, batch)?;
        Ok(Tracker::stats(&g, loss, logits, &targets))
    }

    /// One AdamW update on the mean cross-entropy of `batch`. The returned
    /// statistics describe the parameters before the update.
    pub fn train_step(&mut self, batch: &[TrainSample], hyper: &OptimHyper) -> Result<StepStats> {
        let mut g = Graph::new();
        let (loss, logits, targets) = self.forward(&mut g, batch)?;
        let stats = Tracker::stats(&g, loss, logits, &targets);
        let grads = g.grad(loss, &self.params)?;
        self.params.adamw_step(&grads, hyper)?;
        Ok(stats)
    }

    /// Gradient of the batch loss with respect to every parameter.
    pub fn gradients(&self, batch: &[TrainSample]) -> Result<(f64, std::collections::BTreeMap<String, Tensor>)> {
        let mut g = Graph::new();
        let (loss, _, _) = self.forward(&mut g, batch)?;
        Ok((g.value(loss).item(), g.grad(loss, &self.params)?))
    }

    /// Loss graph for a batch, for external gradient checking.
    pub fn loss_graph(&self, g: &mut Graph, store: &ParamStore, batch: &[TrainSample]) -> Result<Var> {
        let view = Tracker {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: store.clone(),
        };
        Ok(view.forward(g, batch)?.0)
    }

    /// Central-difference check of every parameter group on the loss of
    /// `batch`.
    pub fn gradient_check(&self, batch: &[TrainSample], per_param: usize, seed: u64) -> Result<GradCheckReport> {
        gradcheck::check(&self.params, |g, store| self.loss_graph(g, store, batch), per_param, seed)
    }

    /// Greedy prediction for one template/search pair; the box is in search
    /// pixels.
    pub fn predict(&self, template: &Image, search: &Image, caption: &str) -> Result<(BBox, Decoded)> {
        let text = textenc::encode_text_ids(&self.caption_ids(caption)?, &self.params, &self.config)?;
        self.predict_with_text(template, search, &text)
    }

    /// Logits for every query slot given up to four previous coordinate
    /// tokens; one row per slot, `prev.len() + 1` rows.
    pub fn query_logits(&self, template: &Image, search: &Image, caption: &str, prev: &[usize]) -> Result<Tensor> {
        let text = textenc::encode_text_ids(&self.caption_ids(caption)?, &self.params, &self.config)?;
        let mut g = Graph::new();
        let t = g.constant(text.clone())?;
        let enc = self.encode(&mut g, &[(template, search)], t, &[(0, text.rows())])?;
        let vocab = self.config.vocab();
        let q = seqtok::build_conditional_queries(&mut g, &self.params, self.config.query_mode, enc.pooled, &[prev.to_vec()], &vocab)?;
        let hidden = decoder::decoder_forward(&mut g, &self.params, &self.config, &enc.memory, q, prev.len() + 1)?;
        let logits = decoder::head_logits(&mut g, &self.params, hidden)?;
        Ok(g.value(logits).clone())
    }

    fn predict_with_text(&self, template: &Image, search: &Image, text: &Tensor) -> Result<(BBox, Decoded)> {
        let mut g = Graph::new();
        let t = g.constant(text.clone())?;
        let ranges = [(0, text.rows())];
        let enc = self.encode(&mut g, &[(template, search)], t, &ranges)?;
        let dec = decoder::greedy_decode(&mut g, &self.params, &self.config, &enc.memory, enc.pooled)?[0];
        let s = self.config.search_extent();
        let b = tokens_to_box(&dec.tokens, s, &self.config.vocab(), self.config.box_format)?;
        Ok((b, dec))
    }

    /// One box per frame. The template is cropped once from the first frame
    /// and each search region is centered on the previous prediction.
    /// Degenerate predictions keep the previous box.
    pub fn track_video(&self, frames: &[Image], caption: &str, init_box: &BBox) -> Result<Vec<BBox>> {
        let first = frames.first().ok_or(Error::Empty("video"))?;
        init_box.validate()?;
        if init_box.area() <= 0.0 {
            return Err(Error::InvalidBox(format!("initial box {:?} has no area", init_box.xywh())));
        }
        let cfg = &self.config;
        let (template, _) = crop_region(first, init_box, cfg.template_factor, cfg.template_size)?;
        let text = textenc::encode_text_ids(&self.caption_ids(caption)?, &self.params, cfg)?;
        let mut out = vec![init_box.to_corner()];
        for frame in &frames[1..] {
            let prev = *out.last().expect("non-empty");
            let (search, t) = crop_region(frame, &prev, cfg.search_factor, cfg.search_size)?;
            let (b, _) = self.predict_with_text(&template, &search, &text)?;
            let b = box_search_to_frame(&b, &t)?.clamp_to(frame.width() as f64, frame.height() as f64);
            out.push(if b.area() > 0.0 { b } else { prev });
        }
        Ok(out)
    }
}

//! Word-level caption vocabulary and the trainable text encoder.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numerics::nn::{self, square_segments, Specs, INIT_STD};
use crate::numerics::{Graph, Init, ParamStore, Tensor, Var};
use crate::pipeline::TrackerConfig;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_WORD: &str = "<pad>";
const UNK_WORD: &str = "<unk>";

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Word to id map with `PAD = 0` and `UNK = 1` reserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TextVocab {
    /// Vocabulary of every word seen at least once.
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        TextVocab::build_with_min_freq(corpus, 1)
    }

    /// Words are kept when they occur at least `min_freq` times and are
    /// assigned ids in lexicographic order after the reserved entries.
    pub fn build_with_min_freq<S: AsRef<str>>(corpus: &[S], min_freq: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("caption corpus"));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in corpus {
            for w in normalize(s.as_ref()) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let words = [PAD_WORD.to_string(), UNK_WORD.to_string()]
            .into_iter()
            .chain(counts.into_iter().filter(|&(_, c)| c >= min_freq).map(|(w, _)| w))
            .collect();
        TextVocab::from_words(words)
    }

    /// Rebuilds a vocabulary from its id-ordered word list.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[PAD] != PAD_WORD || words[UNK] != UNK_WORD {
            return Err(Error::InvalidArgument("vocabulary must start with <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(TextVocab { words, index })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    /// Token ids of a sentence; unknown words map to `UNK`.
    pub fn encode(&self, sentence: &str) -> Result<Vec<usize>> {
        let ids: Vec<usize> = normalize(sentence).iter().map(|w| self.id(w)).collect();
        if ids.is_empty() {
            return Err(Error::Empty("sentence after normalization"));
        }
        Ok(ids)
    }
}

pub fn text_specs(specs: &mut Specs, cfg: &TrackerConfig, vocab_size: usize) {
    let c = cfg.channels;
    specs.add("textenc.embed", &[vocab_size, c], Init::Normal(INIT_STD));
    specs.add("textenc.pos", &[cfg.max_text_len, c], Init::Normal(INIT_STD));
    specs.encoder("textenc.enc", cfg.text_layers, c, c * cfg.ffn_ratio);
}

/// Encodes a batch of token id lists. Returns the stacked token features
/// (`sum N_l x C`) and each sentence's `(start, len)` row range.
pub fn encode_batch(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &TrackerConfig,
    sentences: &[Vec<usize>],
) -> Result<(Var, Vec<(usize, usize)>)> {
    if sentences.is_empty() {
        return Err(Error::Empty("sentence batch"));
    }
    let mut ranges = Vec::with_capacity(sentences.len());
    let mut ids = Vec::new();
    let mut pos = Vec::new();
    for s in sentences {
        if s.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        if s.len() > cfg.max_text_len {
            return Err(Error::InvalidArgument(format!(
                "sentence has {} tokens, limit is {}",
                s.len(),
                cfg.max_text_len
            )));
        }
        ranges.push((ids.len(), s.len()));
        ids.extend_from_slice(s);
        pos.extend(0..s.len());
    }
    let table = g.param(store, "textenc.embed")?;
    let vocab_rows = g.value(table).rows();
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_rows) {
        return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {vocab_rows}")));
    }
    let tok = g.select_rows(table, &ids)?;
    let pos_table = g.param(store, "textenc.pos")?;
    let p = g.select_rows(pos_table, &pos)?;
    let x = g.add(tok, p)?;
    let segs = square_segments(&ranges);
    let out = nn::encoder(g, store, "textenc.enc", x, cfg.text_layers, cfg.encoder_heads, &segs)?;
    Ok((out, ranges))
}

/// Token features `N_l x C` of one sentence.
pub fn encode_text(sentence: &str, vocab: &TextVocab, store: &ParamStore, cfg: &TrackerConfig) -> Result<Tensor> {
    encode_text_ids(&vocab.encode(sentence)?, store, cfg)
}

/// Token features of one already-tokenized sentence.
pub fn encode_text_ids(ids: &[usize], store: &ParamStore, cfg: &TrackerConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let (out, _) = encode_batch(&mut g, store, cfg, &[ids.to_vec()])?;
    Ok(g.value(out).clone().with_requires_grad(false))
}

/// Sentence feature: the mean of the token features.
pub fn pool_sentence(features: &Tensor) -> Result<Vec<f64>> {
    let (n, c) = (features.rows(), features.cols());
    if n == 0 {
        return Err(Error::Empty("text features"));
    }
    let mut out = vec![0.0; c];
    for r in 0..n {
        for (o, v) in out.iter_mut().zip(features.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_examples() {
        let v = TextVocab::build(&["a a", "a"]).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "a"]);
        let v = TextVocab::build(&["Red box", "red BOX."]).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "box", "red"]);
        let a = TextVocab::build(&["one two"]).unwrap();
        let b = TextVocab::build(&["three four five"]).unwrap();
        let both = TextVocab::build(&["one two", "three four five"]).unwrap();
        assert_eq!(both.len(), (a.len() - 2) + (b.len() - 2) + 2);
        assert!(TextVocab::build::<&str>(&[]).is_err());
    }

    #[test]
    fn min_freq_filters() {
        let v = TextVocab::build_with_min_freq(&["a b a", "c a b"], 2).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn encode_maps_unknown_to_unk() {
        let v = TextVocab::build(&["the red square"]).unwrap();
        assert_eq!(v.encode("The purple square!").unwrap(), vec![v.id("the"), UNK, v.id("square")]);
        assert!(v.encode("  ... ").is_err());
    }

    #[test]
    fn pool_examples() {
        let one = Tensor::from_rows(&[vec![1.5, -2.0]]).unwrap();
        assert_eq!(pool_sentence(&one).unwrap(), vec![1.5, -2.0]);
        let sym = Tensor::from_rows(&[vec![1.0, -3.0], vec![-1.0, 3.0]]).unwrap();
        assert_eq!(pool_sentence(&sym).unwrap(), vec![0.0, 0.0]);
        let m = Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(pool_sentence(&m).unwrap(), vec![2.0, 4.0]);
    }
}

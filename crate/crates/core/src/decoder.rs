//! Causal multi-modal decoder, the three-layer sequence head and greedy
//! auto-regressive decoding.

use crate::error::{Error, Result};
use crate::fusion::Fused;
use crate::numerics::nn::{self, square_segments, Specs};
use crate::numerics::{AttnSegment, Graph, ParamStore, Tensor, Var};
use crate::pipeline::TrackerConfig;
use crate::seqtok::{build_conditional_queries, BOX_TOKENS, QUERY_LEN};

pub fn decoder_specs(specs: &mut Specs, cfg: &TrackerConfig) {
    let d = cfg.model_dim;
    for l in 0..cfg.decoder_layers {
        let p = format!("decoder.layer{l}");
        specs.layer_norm(&format!("{p}.ln1"), d);
        specs.attention(&format!("{p}.self_attn"), d);
        specs.layer_norm(&format!("{p}.ln2"), d);
        specs.attention(&format!("{p}.cross_attn"), d);
        specs.layer_norm(&format!("{p}.ln3"), d);
        specs.feed_forward(&format!("{p}.ffn"), d, d * cfg.ffn_ratio);
    }
    specs.layer_norm("decoder.ln_out", d);
    specs.linear("head.fc1", d, d);
    specs.linear("head.fc2", d, d);
    specs.linear("head.fc3", d, cfg.bins + 1);
}

/// 1-D sinusoidal table: `sin(p / 10000^(2i/d))` in even columns and the
/// matching cosine in odd columns.
pub fn sine_table(len: usize, width: usize) -> Tensor {
    let mut data = vec![0.0; len * width];
    for p in 0..len {
        for i in 0..width {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / width as f64);
            let a = p as f64 / freq;
            data[p * width + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Tensor::from_parts(vec![len, width], data)
}

/// Cross-attention memory: fused rows plus per-sample sinusoidal positions.
pub struct Memory {
    keys: Var,
    ranges: Vec<(usize, usize)>,
}

impl Memory {
    pub fn new(g: &mut Graph, fused: &Fused) -> Result<Memory> {
        let width = g.value(fused.rep).cols();
        let longest = fused.ranges.iter().map(|r| r.1).max().unwrap_or(0);
        let table = sine_table(longest.max(1), width);
        let mut data = Vec::with_capacity(g.value(fused.rep).numel());
        for &(_, len) in &fused.ranges {
            data.extend_from_slice(&table.data()[..len * width]);
        }
        if data.len() != g.value(fused.rep).numel() {
            return Err(Error::shape("memory", "ranges do not cover the fused rows".to_string()));
        }
        let rows = data.len() / width;
        let sine = g.constant(Tensor::matrix(rows, width, data)?)?;
        let keys = g.add(fused.rep, sine)?;
        Ok(Memory {
            keys,
            ranges: fused.ranges.clone(),
        })
    }

    pub fn batch(&self) -> usize {
        self.ranges.len()
    }
}

/// Hidden states for a batch of query prefixes, `batch * prefix_len` rows in
/// sample-major order.
pub fn decoder_forward(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &TrackerConfig,
    memory: &Memory,
    queries: Var,
    prefix_len: usize,
) -> Result<Var> {
    if prefix_len == 0 || prefix_len > QUERY_LEN {
        return Err(Error::InvalidArgument(format!(
            "prefix length {prefix_len} outside 1..={QUERY_LEN}"
        )));
    }
    let batch = memory.batch();
    let (rows, width) = (g.value(queries).rows(), g.value(queries).cols());
    if rows != batch * prefix_len || width != cfg.model_dim {
        return Err(Error::shape(
            "decoder_forward",
            format!("queries {rows}x{width} for batch {batch}, prefix {prefix_len}, width {}", cfg.model_dim),
        ));
    }
    let self_segs = square_segments(&(0..batch).map(|b| (b * prefix_len, prefix_len)).collect::<Vec<_>>());
    let cross_segs: Vec<AttnSegment> = memory
        .ranges
        .iter()
        .enumerate()
        .map(|(b, &(ks, kl))| AttnSegment {
            q_start: b * prefix_len,
            q_len: prefix_len,
            k_start: ks,
            k_len: kl,
        })
        .collect();
    let heads = cfg.decoder_heads;
    let mut x = queries;
    for l in 0..cfg.decoder_layers {
        let p = format!("decoder.layer{l}");
        let h = nn::layer_norm(g, store, &format!("{p}.ln1"), x)?;
        let h = nn::attention(g, store, &format!("{p}.self_attn"), h, h, heads, &self_segs, true)?;
        x = g.add(x, h)?;
        let h = nn::layer_norm(g, store, &format!("{p}.ln2"), x)?;
        let h = nn::attention(g, store, &format!("{p}.cross_attn"), h, memory.keys, heads, &cross_segs, false)?;
        x = g.add(x, h)?;
        let h = nn::layer_norm(g, store, &format!("{p}.ln3"), x)?;
        let h = nn::feed_forward(g, store, &format!("{p}.ffn"), h)?;
        x = g.add(x, h)?;
    }
    nn::layer_norm(g, store, "decoder.ln_out", x)
}

/// Row-wise `d -> d -> d -> K+1` with ReLU between layers.
pub fn head_logits(g: &mut Graph, store: &ParamStore, hidden: Var) -> Result<Var> {
    let w = store
        .get("head.fc1.w")
        .ok_or_else(|| Error::UnknownParam("head.fc1.w".into()))?;
    if g.value(hidden).cols() != w.rows() {
        return Err(Error::shape(
            "head_logits",
            format!("hidden width {} but head expects {}", g.value(hidden).cols(), w.rows()),
        ));
    }
    let h = nn::linear(g, store, "head.fc1", hidden)?;
    let h = g.relu(h)?;
    let h = nn::linear(g, store, "head.fc2", h)?;
    let h = g.relu(h)?;
    nn::linear(g, store, "head.fc3", h)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub tokens: [usize; BOX_TOKENS],
    /// Whether EOS is the full-vocabulary argmax after the fourth token.
    pub eos: bool,
}

/// Emits four coordinate tokens per sample, one forward pass at a time, then
/// runs a fifth pass to check for EOS. `pooled_text` is required in
/// multi-cues mode and ignored otherwise.
pub fn greedy_decode(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &TrackerConfig,
    memory: &Memory,
    pooled_text: Option<Var>,
) -> Result<Vec<Decoded>> {
    let vocab = cfg.vocab();
    let (batch, k) = (memory.batch(), vocab.bins());
    let mut prev: Vec<Vec<usize>> = vec![Vec::with_capacity(BOX_TOKENS); batch];
    let mut eos = vec![false; batch];
    for step in 0..QUERY_LEN {
        let q = build_conditional_queries(g, store, cfg.query_mode, pooled_text, &prev, &vocab)?;
        let hidden = decoder_forward(g, store, cfg, memory, q, step + 1)?;
        // only the last position of each sample is needed
        let last: Vec<usize> = (0..batch).map(|b| b * (step + 1) + step).collect();
        let hidden = g.select_rows(hidden, &last)?;
        let logits = head_logits(g, store, hidden)?;
        let value = g.value(logits);
        for b in 0..batch {
            let row = value.row(b);
            if step < BOX_TOKENS {
                prev[b].push(argmax(&row[..k]));
            } else {
                eos[b] = argmax(row) == vocab.eos();
            }
        }
    }
    Ok(prev
        .into_iter()
        .zip(eos)
        .map(|(p, eos)| Decoded {
            tokens: [p[0], p[1], p[2], p[3]],
            eos,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Fused;
    use crate::seqtok::{query_specs, QueryMode};

    fn small() -> TrackerConfig {
        TrackerConfig {
            model_dim: 8,
            channels: 8,
            encoder_heads: 2,
            fusion_heads: 2,
            decoder_heads: 2,
            bins: 10,
            ..TrackerConfig::toy()
        }
    }

    fn store(cfg: &TrackerConfig, seed: u64) -> ParamStore {
        let mut s = Specs::default();
        query_specs(&mut s, QueryMode::SingleCue, cfg.channels, cfg.model_dim, cfg.bins);
        decoder_specs(&mut s, cfg);
        s.build(seed).unwrap()
    }

    fn memory(g: &mut Graph, rows: usize, scale: f64) -> Memory {
        let t = Tensor::matrix(rows, 8, (0..rows * 8).map(|i| ((i * 7) % 11) as f64 * scale).collect()).unwrap();
        let rep = g.constant(t).unwrap();
        Memory::new(g, &Fused { rep, ranges: vec![(0, rows)] }).unwrap()
    }

    #[test]
    fn sine_table_values() {
        let t = sine_table(3, 4);
        assert_eq!(t.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((t.row(1)[0] - 1f64.sin()).abs() < 1e-15);
        assert!((t.row(2)[3] - (2.0 / 100.0f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn prefix_lengths() {
        let cfg = TrackerConfig { query_mode: QueryMode::SingleCue, ..small() };
        let st = store(&cfg, 1);
        let vocab = cfg.vocab();
        let mut g = Graph::new();
        let mem = memory(&mut g, 6, 0.1);
        let q = build_conditional_queries(&mut g, &st, cfg.query_mode, None, &[vec![]], &vocab).unwrap();
        let h = decoder_forward(&mut g, &st, &cfg, &mem, q, 1).unwrap();
        assert_eq!(g.value(h).shape(), &[1, 8]);
        assert!(decoder_forward(&mut g, &st, &cfg, &mem, q, 6).is_err());
        let logits = head_logits(&mut g, &st, h).unwrap();
        assert_eq!(g.value(logits).cols(), 11);
    }

    #[test]
    fn causal_prefix_rows_do_not_see_later_slots() {
        let cfg = TrackerConfig { query_mode: QueryMode::SingleCue, ..small() };
        let st = store(&cfg, 3);
        let vocab = cfg.vocab();
        let mut g = Graph::new();
        let mem = memory(&mut g, 5, 0.2);
        let a = build_conditional_queries(&mut g, &st, cfg.query_mode, None, &[vec![1, 2, 3, 4]], &vocab).unwrap();
        let b = build_conditional_queries(&mut g, &st, cfg.query_mode, None, &[vec![1, 2, 9, 0]], &vocab).unwrap();
        let ha = decoder_forward(&mut g, &st, &cfg, &mem, a, 5).unwrap();
        let hb = decoder_forward(&mut g, &st, &cfg, &mem, b, 5).unwrap();
        let la = head_logits(&mut g, &st, ha).unwrap();
        let lb = head_logits(&mut g, &st, hb).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(la).row(r), g.value(lb).row(r));
        }
        assert_ne!(g.value(la).row(3), g.value(lb).row(3));
    }

    #[test]
    fn cross_attention_is_live() {
        let cfg = TrackerConfig { query_mode: QueryMode::SingleCue, ..small() };
        let st = store(&cfg, 5);
        let vocab = cfg.vocab();
        let mut g = Graph::new();
        let zero = memory(&mut g, 4, 0.0);
        let some = memory(&mut g, 4, 0.3);
        let q = build_conditional_queries(&mut g, &st, cfg.query_mode, None, &[vec![2]], &vocab).unwrap();
        let a = decoder_forward(&mut g, &st, &cfg, &zero, q, 2).unwrap();
        let b = decoder_forward(&mut g, &st, &cfg, &some, q, 2).unwrap();
        assert_ne!(g.value(a).data(), g.value(b).data());
    }

    #[test]
    fn head_with_zero_weights_returns_bias() {
        let cfg = small();
        let mut st = store(&cfg, 2);
        for n in ["head.fc1.w", "head.fc2.w", "head.fc3.w"] {
            let shape = st.get(n).unwrap().shape().to_vec();
            st.set(n, Tensor::zeros(&shape)).unwrap();
        }
        let bias: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        st.set("head.fc3.b", Tensor::vector(bias.clone()).unwrap()).unwrap();
        let mut g = Graph::new();
        let h = g.constant(Tensor::filled(&[3, 8], 0.7)).unwrap();
        let l = head_logits(&mut g, &st, h).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(l).row(r), bias.as_slice());
        }
        let bad = g.constant(Tensor::zeros(&[2, 5])).unwrap();
        assert!(head_logits(&mut g, &st, bad).is_err());
    }

    #[test]
    fn head_is_position_independent() {
        let cfg = small();
        let st = store(&cfg, 8);
        let mut g = Graph::new();
        let rows: Vec<Vec<f64>> = (0..3).map(|r| (0..8).map(|c| (r * 8 + c) as f64 * 0.1 - 1.0).collect()).collect();
        let h = g.constant(Tensor::from_rows(&rows).unwrap()).unwrap();
        let swapped = g.select_rows(h, &[2, 0, 1]).unwrap();
        let a = head_logits(&mut g, &st, h).unwrap();
        let b = head_logits(&mut g, &st, swapped).unwrap();
        assert_eq!(g.value(a).row(2), g.value(b).row(0));
        assert_eq!(g.value(a).row(0), g.value(b).row(1));
    }

    #[test]
    fn argmax_prefers_smallest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn greedy_is_deterministic_and_in_range() {
        let cfg = TrackerConfig { query_mode: QueryMode::SingleCue, ..small() };
        let st = store(&cfg, 9);
        let mut g = Graph::new();
        let mem = memory(&mut g, 7, 0.15);
        let a = greedy_decode(&mut g, &st, &cfg, &mem, None).unwrap();
        let b = greedy_decode(&mut g, &st, &cfg, &mem, None).unwrap();
        assert_eq!(a, b);
        assert!(a[0].tokens.iter().all(|&t| t < cfg.bins));
    }

    #[test]
    fn greedy_masks_eos_on_coordinate_steps() {
        let cfg = TrackerConfig { query_mode: QueryMode::SingleCue, ..small() };
        let mut st = store(&cfg, 4);
        let mut bias = vec![0.0; 11];
        bias[10] = 100.0;
        bias[3] = 1.0;
        st.set("head.fc3.b", Tensor::vector(bias).unwrap()).unwrap();
        st.set("head.fc3.w", Tensor::zeros(&[8, 11])).unwrap();
        let mut g = Graph::new();
        let mem = memory(&mut g, 3, 0.1);
        let d = greedy_decode(&mut g, &st, &cfg, &mem, None).unwrap();
        assert_eq!(d[0], Decoded { tokens: [3; 4], eos: true });
    }
}

//! Coordinate tokens: quantization of boxes into a `K + 1` vocabulary
//! (`K` coordinate bins plus EOS) and the conditional query sequence fed to
//! the decoder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::nn::{self, Specs, INIT_STD};
use crate::numerics::{Graph, Init, ParamStore, Var};

/// Number of coordinate tokens per box.
pub const BOX_TOKENS: usize = 4;
/// Query slots: one language (or start) slot plus four coordinates.
pub const QUERY_LEN: usize = BOX_TOKENS + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxFormat {
    /// `(x1, y1, x2, y2)`
    #[default]
    Corner,
    /// `(cx, cy, w, h)`
    Center,
}

impl fmt::Display for BoxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoxFormat::Corner => "corner",
            BoxFormat::Center => "center",
        })
    }
}

impl FromStr for BoxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corner" => Ok(BoxFormat::Corner),
            "center" => Ok(BoxFormat::Center),
            _ => Err(Error::Config(format!("unknown box format `{s}` (corner | center)"))),
        }
    }
}

/// Axis-aligned rectangle tagged with its coordinate layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub format: BoxFormat,
    pub coords: [f64; 4],
}

impl BBox {
    pub fn corner(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox {
            format: BoxFormat::Corner,
            coords: [x1, y1, x2, y2],
        }
    }

    pub fn center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            format: BoxFormat::Center,
            coords: [cx, cy, w, h],
        }
    }

    /// Top-left corner plus size, the tracking-benchmark file convention.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox::corner(x, y, x + w, y + h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinates {:?}", self.coords)));
        }
        let [a, b, c, d] = self.coords;
        let ok = match self.format {
            BoxFormat::Corner => a <= c && b <= d,
            BoxFormat::Center => c >= 0.0 && d >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBox(format!("{} box {:?}", self.format, self.coords)))
        }
    }

    pub fn to_corner(&self) -> BBox {
        match self.format {
            BoxFormat::Corner => *self,
            BoxFormat::Center => {
                let [cx, cy, w, h] = self.coords;
                BBox::corner(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
            }
        }
    }

    pub fn to_center(&self) -> BBox {
        match self.format {
            BoxFormat::Center => *self,
            BoxFormat::Corner => {
                let [x1, y1, x2, y2] = self.coords;
                BBox::center((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
            }
        }
    }

    pub fn to_format(&self, format: BoxFormat) -> BBox {
        match format {
            BoxFormat::Corner => self.to_corner(),
            BoxFormat::Center => self.to_center(),
        }
    }

    pub fn xywh(&self) -> [f64; 4] {
        let [x1, y1, x2, y2] = self.to_corner().coords;
        [x1, y1, x2 - x1, y2 - y1]
    }

    pub fn center_point(&self) -> (f64, f64) {
        let [cx, cy, _, _] = self.to_center().coords;
        (cx, cy)
    }

    pub fn width(&self) -> f64 {
        self.to_center().coords[2]
    }

    pub fn height(&self) -> f64 {
        self.to_center().coords[3]
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Intersects the box with `[0, width] x [0, height]`; returns a corner box.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let [x1, y1, x2, y2] = self.to_corner().coords;
        let cx = |v: f64| v.clamp(0.0, width);
        let cy = |v: f64| v.clamp(0.0, height);
        BBox::corner(cx(x1), cy(y1), cx(x2), cy(y2))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        let [x1, y1, x2, y2] = self.to_corner().coords;
        BBox::corner(x1 + dx, y1 + dy, x2 + dx, y2 + dy).to_format(self.format)
    }
}

/// Output vocabulary: ids `0..K` are coordinate bins, `K` is EOS.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    bins: usize,
}

impl TokenVocab {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
        }
        Ok(TokenVocab { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn eos(&self) -> usize {
        self.bins
    }

    pub fn size(&self) -> usize {
        self.bins + 1
    }

    pub fn is_coord(&self, id: usize) -> bool {
        id < self.bins
    }
}

/// `clamp(round(v / s * K), 0, K - 1)`.
pub fn quantize_coord(v: f64, s: f64, bins: usize) -> Result<usize> {
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "quantize_coord" });
    }
    if !(s > 0.0) || bins < 2 {
        return Err(Error::InvalidArgument(format!("search size {s}, bins {bins}")));
    }
    let q = (v / s * bins as f64).round();
    Ok(q.clamp(0.0, (bins - 1) as f64) as usize)
}

/// Left-edge inverse of [`quantize_coord`]: `id * s / K`.
pub fn dequantize_coord(id: usize, s: f64, bins: usize) -> Result<f64> {
    if id >= bins {
        return Err(Error::NotACoordinate { token: id, bins });
    }
    Ok(id as f64 * s / bins as f64)
}

/// Quantizes the four coordinates of `b` in its own layout.
pub fn box_to_tokens(b: &BBox, s: f64, vocab: &TokenVocab) -> Result<[usize; 4]> {
    b.validate()?;
    let mut out = [0; 4];
    for (o, &c) in out.iter_mut().zip(&b.coords) {
        *o = quantize_coord(c, s, vocab.bins())?;
    }
    Ok(out)
}

/// Dequantizes four coordinate tokens into a box of the given layout. Corner
/// boxes are reordered so that `x1 <= x2` and `y1 <= y2`.
pub fn tokens_to_box(tokens: &[usize; 4], s: f64, vocab: &TokenVocab, format: BoxFormat) -> Result<BBox> {
    let mut c = [0.0; 4];
    for (o, &t) in c.iter_mut().zip(tokens) {
        *o = dequantize_coord(t, s, vocab.bins())?;
    }
    Ok(match format {
        BoxFormat::Corner => BBox::corner(c[0].min(c[2]), c[1].min(c[3]), c[0].max(c[2]), c[1].max(c[3])),
        BoxFormat::Center => BBox::center(c[0], c[1], c[2].max(0.0), c[3].max(0.0)),
    })
}

/// Provenance of query slot 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    /// Slot 0 is the embedded pooled sentence feature.
    #[default]
    MultiCues,
    /// Slot 0 is a learnable start vector; language only reaches the model
    /// through the fused memory.
    SingleCue,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::MultiCues => "multi-cues",
            QueryMode::SingleCue => "single-cue",
        })
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-cues" => Ok(QueryMode::MultiCues),
            "single-cue" => Ok(QueryMode::SingleCue),
            _ => Err(Error::Config(format!("unknown query mode `{s}` (multi-cues | single-cue)"))),
        }
    }
}

pub fn query_specs(specs: &mut Specs, mode: QueryMode, text_width: usize, model_dim: usize, bins: usize) {
    match mode {
        QueryMode::MultiCues => specs.linear("query.text_embed", text_width, model_dim),
        QueryMode::SingleCue => specs.add("query.start", &[1, model_dim], Init::Normal(INIT_STD)),
    }
    specs.add("query.coord_embed", &[bins, model_dim], Init::Normal(INIT_STD));
    specs.add("query.pos", &[QUERY_LEN, model_dim], Init::Normal(INIT_STD));
}

/// Builds the query prefix for a batch: for each sample, slot 0 followed by
/// the embedded `prev` tokens, each with its learnable position added. All
/// samples must carry the same number of previous tokens. Rows are
/// sample-major: `batch * (prev_len + 1)` rows of width `d`.
pub fn build_conditional_queries(
    g: &mut Graph,
    store: &ParamStore,
    mode: QueryMode,
    pooled_text: Option<Var>,
    prev: &[Vec<usize>],
    vocab: &TokenVocab,
) -> Result<Var> {
    let batch = prev.len();
    if batch == 0 {
        return Err(Error::Empty("query batch"));
    }
    let k = prev[0].len();
    if k > BOX_TOKENS || prev.iter().any(|p| p.len() != k) {
        return Err(Error::InvalidArgument(format!(
            "previous token counts must agree and be at most {BOX_TOKENS}"
        )));
    }
    if let Some(&bad) = prev.iter().flatten().find(|&&t| !vocab.is_coord(t)) {
        return Err(Error::NotACoordinate {
            token: bad,
            bins: vocab.bins(),
        });
    }

    let slot0 = match mode {
        QueryMode::MultiCues => {
            let pooled = pooled_text.ok_or_else(|| {
                Error::InvalidArgument("multi-cues queries need a pooled sentence feature".into())
            })?;
            if g.value(pooled).rows() != batch {
                return Err(Error::shape(
                    "conditional_queries",
                    format!("{} pooled rows for batch {batch}", g.value(pooled).rows()),
                ));
            }
            nn::linear(g, store, "query.text_embed", pooled)?
        }
        QueryMode::SingleCue => {
            let start = g.param(store, "query.start")?;
            g.select_rows(start, &vec![0; batch])?
        }
    };

    let len = k + 1;
    let rows = if k == 0 {
        slot0
    } else {
        let table = g.param(store, "query.coord_embed")?;
        let flat: Vec<usize> = prev.iter().flatten().copied().collect();
        let coords = g.select_rows(table, &flat)?;
        let both = g.concat_rows(&[slot0, coords])?;
        // slot0 rows come first, then batch * k coordinate rows.
        let order: Vec<usize> = (0..batch)
            .flat_map(|b| std::iter::once(b).chain((0..k).map(move |j| batch + b * k + j)))
            .collect();
        g.select_rows(both, &order)?
    };
    let pos_table = g.param(store, "query.pos")?;
    let pos_idx: Vec<usize> = (0..batch).flat_map(|_| 0..len).collect();
    let pos = g.select_rows(pos_table, &pos_idx)?;
    g.add(rows, pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_coord(192.0, 384.0, 1000).unwrap(), 500);
        assert_eq!(quantize_coord(0.0, 384.0, 1000).unwrap(), 0);
        assert_eq!(quantize_coord(384.0, 384.0, 1000).unwrap(), 999);
        assert_eq!(quantize_coord(100.0, 384.0, 1000).unwrap(), 260);
        assert_eq!(quantize_coord(-5.0, 384.0, 1000).unwrap(), 0);
        assert_eq!(quantize_coord(1e6, 384.0, 1000).unwrap(), 999);
        assert!(quantize_coord(f64::NAN, 384.0, 1000).is_err());
        assert!(quantize_coord(1.0, 0.0, 1000).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize_coord(0, 384.0, 1000).unwrap(), 0.0);
        assert_eq!(dequantize_coord(500, 384.0, 1000).unwrap(), 192.0);
        let back = dequantize_coord(quantize_coord(100.0, 384.0, 1000).unwrap(), 384.0, 1000).unwrap();
        assert!((back - 99.84).abs() < 1e-9);
        assert!((100.0 - back) <= 0.192);
        assert!(matches!(
            dequantize_coord(1000, 384.0, 1000),
            Err(Error::NotACoordinate { token: 1000, .. })
        ));
    }

    #[test]
    fn box_tokens_examples() {
        let v = TokenVocab::new(1000).unwrap();
        let s = 384.0;
        assert_eq!(box_to_tokens(&BBox::corner(0.0, 0.0, s, s), s, &v).unwrap(), [0, 0, 999, 999]);
        let t = box_to_tokens(&BBox::corner(10.0, 20.0, 10.0, 30.0), s, &v).unwrap();
        assert_eq!(t[0], t[2]);
        assert_eq!(
            box_to_tokens(&BBox::corner(100.0, 50.0, 200.0, 150.0), s, &v).unwrap(),
            [260, 130, 521, 391]
        );
        assert!(box_to_tokens(&BBox::corner(5.0, 0.0, 1.0, 1.0), s, &v).is_err());
        assert!(box_to_tokens(&BBox::center(5.0, 5.0, -1.0, 1.0), s, &v).is_err());
    }

    #[test]
    fn tokens_to_box_examples() {
        let v = TokenVocab::new(1000).unwrap();
        let s = 384.0;
        let b = BBox::corner(100.0, 50.0, 200.0, 150.0);
        let back = tokens_to_box(&box_to_tokens(&b, s, &v).unwrap(), s, &v, BoxFormat::Corner).unwrap();
        for (a, c) in back.coords.iter().zip(&b.coords) {
            assert!((a - c).abs() <= s / 1000.0);
        }
        let zero = tokens_to_box(&[0, 0, 0, 0], s, &v, BoxFormat::Corner).unwrap();
        assert_eq!(zero, BBox::corner(0.0, 0.0, 0.0, 0.0));
        let swapped = tokens_to_box(&[521, 391, 260, 130], s, &v, BoxFormat::Corner).unwrap();
        let u = s / 1000.0;
        assert_eq!(swapped, BBox::corner(260.0 * u, 130.0 * u, 521.0 * u, 391.0 * u));
        assert!(tokens_to_box(&[1, 2, 1000, 3], s, &v, BoxFormat::Corner).is_err());
    }

    #[test]
    fn center_format_token_order() {
        let v = TokenVocab::new(100).unwrap();
        let b = BBox::corner(10.0, 20.0, 30.0, 60.0).to_center();
        assert_eq!(b.coords, [20.0, 40.0, 20.0, 40.0]);
        assert_eq!(box_to_tokens(&b, 100.0, &v).unwrap(), [20, 40, 20, 40]);
    }

    #[test]
    fn vocab_partition() {
        let v = TokenVocab::new(10).unwrap();
        assert_eq!(v.eos(), 10);
        assert_eq!(v.size(), 11);
        assert!((0..10).all(|i| v.is_coord(i)) && !v.is_coord(v.eos()));
        assert!(TokenVocab::new(1).is_err());
    }

    fn query_store(mode: QueryMode) -> ParamStore {
        let mut specs = Specs::default();
        query_specs(&mut specs, mode, 6, 4, 10);
        specs.build(1).unwrap()
    }

    #[test]
    fn query_prefix_lengths() {
        let vocab = TokenVocab::new(10).unwrap();
        let store = query_store(QueryMode::MultiCues);
        let mut g = Graph::new();
        let pooled = g.constant(Tensor::filled(&[1, 6], 0.5)).unwrap();
        let q0 = build_conditional_queries(&mut g, &store, QueryMode::MultiCues, Some(pooled), &[vec![]], &vocab).unwrap();
        assert_eq!(g.value(q0).shape(), &[1, 4]);
        let q4 = build_conditional_queries(&mut g, &store, QueryMode::MultiCues, Some(pooled), &[vec![1, 2, 3, 4]], &vocab)
            .unwrap();
        assert_eq!(g.value(q4).shape(), &[5, 4]);
        assert_eq!(g.value(q0).row(0), g.value(q4).row(0));
        let again = build_conditional_queries(&mut g, &store, QueryMode::MultiCues, Some(pooled), &[vec![1, 2, 3, 4]], &vocab)
            .unwrap();
        assert_eq!(g.value(q4), g.value(again));
    }

    #[test]
    fn query_errors() {
        let vocab = TokenVocab::new(10).unwrap();
        let store = query_store(QueryMode::MultiCues);
        let mut g = Graph::new();
        assert!(build_conditional_queries(&mut g, &store, QueryMode::MultiCues, None, &[vec![]], &vocab).is_err());
        let pooled = g.constant(Tensor::filled(&[1, 6], 0.5)).unwrap();
        assert!(matches!(
            build_conditional_queries(&mut g, &store, QueryMode::MultiCues, Some(pooled), &[vec![3, 10]], &vocab),
            Err(Error::NotACoordinate { token: 10, .. })
        ));
        let single = query_store(QueryMode::SingleCue);
        let q = build_conditional_queries(&mut g, &single, QueryMode::SingleCue, None, &[vec![2], vec![5]], &vocab).unwrap();
        assert_eq!(g.value(q).shape(), &[4, 4]);
    }

    #[test]
    fn batched_rows_are_sample_major() {
        let vocab = TokenVocab::new(10).unwrap();
        let store = query_store(QueryMode::SingleCue);
        let mut g = Graph::new();
        let batched =
            build_conditional_queries(&mut g, &store, QueryMode::SingleCue, None, &[vec![1, 2], vec![7, 8]], &vocab).unwrap();
        let second = build_conditional_queries(&mut g, &store, QueryMode::SingleCue, None, &[vec![7, 8]], &vocab).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(batched).row(3 + r), g.value(second).row(r));
        }
    }
}

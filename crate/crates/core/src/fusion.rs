//! Channel reduction and gated multi-modal fusion.
//!
//! `F_vl = sigmoid(E([f_v; f_l])) * [f_v; f_l]`, where `E` is one transformer
//! encoder shared by both modalities and `*` is elementwise.

use crate::error::{Error, Result};
use crate::numerics::nn::{self, square_segments, Specs};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::pipeline::TrackerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Text,
}

/// Gate source; `ForceOne` bypasses the encoder so the output is the plain
/// concatenation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Gate {
    #[default]
    Learned,
    ForceOne,
}

pub fn fusion_specs(specs: &mut Specs, cfg: &TrackerConfig) {
    let d = cfg.model_dim;
    specs.linear("fusion.reduce_visual", cfg.channels, d);
    specs.linear("fusion.reduce_text", cfg.channels, d);
    specs.encoder("fusion.enc", cfg.fusion_layers, d, d * cfg.ffn_ratio);
}

/// Per-row affine map `C -> d`, with separate weights per modality.
pub fn reduce_channels(g: &mut Graph, store: &ParamStore, modality: Modality, f: Var) -> Result<Var> {
    let prefix = match modality {
        Modality::Visual => "fusion.reduce_visual",
        Modality::Text => "fusion.reduce_text",
    };
    let w = store.get(&format!("{prefix}.w")).ok_or_else(|| crate::Error::UnknownParam(prefix.into()))?;
    if g.value(f).cols() != w.rows() {
        return Err(Error::shape(
            "reduce_channels",
            format!("input width {} but layer expects {}", g.value(f).cols(), w.rows()),
        ));
    }
    nn::linear(g, store, prefix, f)
}

/// Output of [`fuse_vl`]: the stacked representation plus each sample's
/// `(start, len)` row range (`N_v` visual rows followed by `N_l` text rows).
pub struct Fused {
    pub rep: Var,
    pub ranges: Vec<(usize, usize)>,
}

/// Fuses reduced visual features (`batch * N_v` rows) with reduced text
/// features laid out by `text_ranges`.
pub fn fuse_vl(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &TrackerConfig,
    visual: Var,
    text: Var,
    text_ranges: &[(usize, usize)],
    gate: Gate,
) -> Result<Fused> {
    let d = cfg.model_dim;
    let (vw, tw) = (g.value(visual).cols(), g.value(text).cols());
    if vw != d || tw != d {
        return Err(Error::shape("fuse_vl", format!("widths {vw} and {tw}, expected {d}")));
    }
    let batch = text_ranges.len();
    if batch == 0 || !g.value(visual).rows().is_multiple_of(batch) {
        return Err(Error::shape(
            "fuse_vl",
            format!("{} visual rows for {batch} samples", g.value(visual).rows()),
        ));
    }
    let nv = g.value(visual).rows() / batch;
    let v_rows = g.value(visual).rows();
    let both = g.concat_rows(&[visual, text])?;
    let mut order = Vec::new();
    let mut ranges = Vec::with_capacity(batch);
    for (b, &(ts, tl)) in text_ranges.iter().enumerate() {
        ranges.push((order.len(), nv + tl));
        order.extend(b * nv..(b + 1) * nv);
        order.extend(v_rows + ts..v_rows + ts + tl);
    }
    let concat = g.select_rows(both, &order)?;
    let gate_values = match gate {
        Gate::Learned => {
            let segs = square_segments(&ranges);
            let e = nn::encoder(g, store, "fusion.enc", concat, cfg.fusion_layers, cfg.fusion_heads, &segs)?;
            g.sigmoid(e)?
        }
        Gate::ForceOne => g.constant(Tensor::filled(&[order.len(), d], 1.0))?,
    };
    let rep = g.mul(gate_values, concat)?;
    Ok(Fused { rep, ranges })
}

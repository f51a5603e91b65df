//! Patch embedding of the template/search pair and the joint visual encoder.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::nn::{self, Specs, INIT_STD};
use crate::numerics::{AttnSegment, Graph, Init, ParamStore, Tensor, Var};
use crate::pipeline::TrackerConfig;

/// Which positional table a patch grid uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Template,
    Search,
}

impl Stream {
    fn pos_name(self) -> &'static str {
        match self {
            Stream::Template => "visenc.pos_template",
            Stream::Search => "visenc.pos_search",
        }
    }
}

pub fn visual_specs(specs: &mut Specs, cfg: &TrackerConfig) {
    let c = cfg.channels;
    specs.linear("visenc.patch", cfg.patch_dim(), c);
    specs.add("visenc.pos_template", &[cfg.template_tokens(), c], Init::Normal(INIT_STD));
    specs.add("visenc.pos_search", &[cfg.search_tokens(), c], Init::Normal(INIT_STD));
    specs.encoder("visenc.enc", cfg.visual_layers, c, c * cfg.ffn_ratio);
}

/// Raw patches of `img` in raster order, one `P * P * 3` row per patch
/// (pixel rows, then pixel columns, then channels).
pub fn extract_patches(img: &Image, patch: usize) -> Result<Tensor> {
    let (h, w) = (img.height(), img.width());
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} is not divisible into {patch}px patches"
        )));
    }
    let (ph, pw) = (h / patch, w / patch);
    let dim = patch * patch * 3;
    let mut out = Vec::with_capacity(ph * pw * dim);
    let data = img.data();
    for py in 0..ph {
        for px in 0..pw {
            for y in py * patch..(py + 1) * patch {
                let start = (y * w + px * patch) * 3;
                out.extend(data[start..start + patch * 3].iter().map(|&v| v as f64));
            }
        }
    }
    Tensor::matrix(ph * pw, dim, out)
}

/// Linear patch embedding plus learnable positions for a batch of images of
/// one stream. Returns `batch * (H/P)(W/P)` rows.
pub fn patchify(g: &mut Graph, store: &ParamStore, cfg: &TrackerConfig, images: &[&Image], stream: Stream) -> Result<Var> {
    let expected = match stream {
        Stream::Template => cfg.template_size,
        Stream::Search => cfg.search_size,
    };
    let mut rows = Vec::new();
    let mut per_image = 0;
    for img in images {
        if img.height() != expected || img.width() != expected {
            return Err(Error::InvalidArgument(format!(
                "{stream:?} image is {}x{}, expected {expected}x{expected}",
                img.height(),
                img.width()
            )));
        }
        let p = extract_patches(img, cfg.patch_size)?;
        per_image = p.rows();
        rows.extend_from_slice(p.data());
    }
    if images.is_empty() {
        return Err(Error::Empty("image batch"));
    }
    let patches = g.constant(Tensor::matrix(images.len() * per_image, cfg.patch_dim(), rows)?)?;
    let tokens = nn::linear(g, store, "visenc.patch", patches)?;
    let table = g.param(store, stream.pos_name())?;
    let idx: Vec<usize> = (0..images.len()).flat_map(|_| 0..per_image).collect();
    let pos = g.select_rows(table, &idx)?;
    g.add(tokens, pos)
}

/// Joint encoding of template/search pairs. Each sample contributes `N_v`
/// rows (template tokens, then search tokens) that attend to each other.
pub fn encode_visual(g: &mut Graph, store: &ParamStore, cfg: &TrackerConfig, pairs: &[(&Image, &Image)]) -> Result<Var> {
    let b = pairs.len();
    let templates: Vec<&Image> = pairs.iter().map(|p| p.0).collect();
    let searches: Vec<&Image> = pairs.iter().map(|p| p.1).collect();
    let z = patchify(g, store, cfg, &templates, Stream::Template)?;
    let x = patchify(g, store, cfg, &searches, Stream::Search)?;
    let (nz, nx) = (cfg.template_tokens(), cfg.search_tokens());
    let nv = nz + nx;
    let joint = g.concat_rows(&[z, x])?;
    let order: Vec<usize> = (0..b)
        .flat_map(|i| (i * nz..(i + 1) * nz).chain(b * nz + i * nx..b * nz + (i + 1) * nx))
        .collect();
    let joint = g.select_rows(joint, &order)?;
    let segs: Vec<AttnSegment> = (0..b).map(|i| AttnSegment::square(i * nv, nv)).collect();
    nn::encoder(g, store, "visenc.enc", joint, cfg.visual_layers, cfg.encoder_heads, &segs)
}

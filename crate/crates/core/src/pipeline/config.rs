use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::seqtok::{BoxFormat, QueryMode, TokenVocab};

/// Architecture and geometry of one tracker. The search size doubles as the
/// quantization range `s`, so cropping and tokenization can never disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub template_size: usize,
    pub search_size: usize,
    pub patch_size: usize,
    pub template_factor: f64,
    pub search_factor: f64,
    /// Encoder width `C`.
    pub channels: usize,
    /// Fusion and decoder width `d`.
    pub model_dim: usize,
    pub text_layers: usize,
    pub visual_layers: usize,
    pub fusion_layers: usize,
    pub decoder_layers: usize,
    /// Heads of the text and visual encoders (width `C`).
    pub encoder_heads: usize,
    /// Heads of the fusion encoder (width `d`).
    pub fusion_heads: usize,
    pub decoder_heads: usize,
    /// Feed-forward hidden width as a multiple of the layer width.
    pub ffn_ratio: usize,
    pub max_text_len: usize,
    pub bins: usize,
    /// Standard deviation of linear-layer weights at initialization.
    pub init_std: f64,
    pub box_format: BoxFormat,
    pub query_mode: QueryMode,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig::toy()
    }
}

impl TrackerConfig {
    /// Desk-scale defaults: 32px template, 64px search, 8px patches.
    pub fn toy() -> Self {
        TrackerConfig {
            template_size: 32,
            search_size: 64,
            patch_size: 8,
            template_factor: 2.0,
            search_factor: 4.0,
            channels: 32,
            model_dim: 32,
            text_layers: 1,
            visual_layers: 2,
            fusion_layers: 1,
            decoder_layers: 1,
            encoder_heads: 4,
            fusion_heads: 4,
            decoder_heads: 8,
            ffn_ratio: 2,
            max_text_len: 16,
            bins: 100,
            init_std: 0.07,
            box_format: BoxFormat::Corner,
            query_mode: QueryMode::MultiCues,
            seed: 0,
        }
    }

    /// Full-size geometry: 192px template, 384px search, C = 768, d = 256,
    /// K = 1000.
    pub fn full() -> Self {
        TrackerConfig {
            template_size: 192,
            search_size: 384,
            patch_size: 16,
            channels: 768,
            model_dim: 256,
            text_layers: 2,
            visual_layers: 12,
            fusion_layers: 2,
            decoder_layers: 6,
            encoder_heads: 12,
            fusion_heads: 8,
            decoder_heads: 8,
            ffn_ratio: 4,
            max_text_len: 40,
            bins: 1000,
            init_std: 0.02,
            ..TrackerConfig::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let p = self.patch_size;
        if p == 0 || self.template_size == 0 || self.search_size == 0 {
            return fail("sizes must be positive".into());
        }
        if !self.template_size.is_multiple_of(p) || !self.search_size.is_multiple_of(p) {
            return fail(format!(
                "template {} and search {} must be divisible by patch size {p}",
                self.template_size, self.search_size
            ));
        }
        if !(self.template_factor >= 1.0) || !(self.search_factor >= 1.0) {
            return fail("context factors must be at least 1".into());
        }
        if self.channels == 0 || self.model_dim == 0 || self.ffn_ratio == 0 || self.max_text_len == 0 {
            return fail("widths must be positive".into());
        }
        if self.encoder_heads == 0 || !self.channels.is_multiple_of(self.encoder_heads) {
            return fail(format!(
                "encoder heads {} must divide channels {}",
                self.encoder_heads, self.channels
            ));
        }
        if self.fusion_heads == 0 || !self.model_dim.is_multiple_of(self.fusion_heads) {
            return fail(format!(
                "fusion heads {} must divide model dim {}",
                self.fusion_heads, self.model_dim
            ));
        }
        if self.decoder_heads == 0 || !self.model_dim.is_multiple_of(self.decoder_heads) {
            return fail(format!(
                "decoder heads {} must divide model dim {}",
                self.decoder_heads, self.model_dim
            ));
        }
        if self.visual_layers == 0 || self.text_layers == 0 || self.fusion_layers == 0 || self.decoder_layers == 0 {
            return fail("every transformer needs at least one layer".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return fail(format!("init_std must be positive, got {}", self.init_std));
        }
        TokenVocab::new(self.bins).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn vocab(&self) -> TokenVocab {
        TokenVocab::new(self.bins).expect("validated bins")
    }

    /// Quantization range `s`.
    pub fn search_extent(&self) -> f64 {
        self.search_size as f64
    }

    pub fn template_tokens(&self) -> usize {
        (self.template_size / self.patch_size).pow(2)
    }

    pub fn search_tokens(&self) -> usize {
        (self.search_size / self.patch_size).pow(2)
    }

    /// `N_v = (Hz/P)(Wz/P) + (Hx/P)(Wx/P)`.
    pub fn visual_tokens(&self) -> usize {
        self.template_tokens() + self.search_tokens()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub const KEYS: [&'static str; 21] = [
        "template_size",
        "search_size",
        "patch_size",
        "template_factor",
        "search_factor",
        "channels",
        "model_dim",
        "text_layers",
        "visual_layers",
        "fusion_layers",
        "decoder_layers",
        "encoder_heads",
        "fusion_heads",
        "decoder_heads",
        "ffn_ratio",
        "max_text_len",
        "bins",
        "init_std",
        "box_format",
        "query_mode",
        "seed",
    ];

    /// Sets one field by name; `-` and `_` are interchangeable in `key`.
    /// Returns `Ok(false)` when the key is not a tracker field.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "template_size" => self.template_size = parse(&key, v)?,
            "search_size" => self.search_size = parse(&key, v)?,
            "patch_size" => self.patch_size = parse(&key, v)?,
            "template_factor" => self.template_factor = parse(&key, v)?,
            "search_factor" => self.search_factor = parse(&key, v)?,
            "channels" => self.channels = parse(&key, v)?,
            "model_dim" => self.model_dim = parse(&key, v)?,
            "text_layers" => self.text_layers = parse(&key, v)?,
            "visual_layers" => self.visual_layers = parse(&key, v)?,
            "fusion_layers" => self.fusion_layers = parse(&key, v)?,
            "decoder_layers" => self.decoder_layers = parse(&key, v)?,
            "encoder_heads" => self.encoder_heads = parse(&key, v)?,
            "fusion_heads" => self.fusion_heads = parse(&key, v)?,
            "decoder_heads" => self.decoder_heads = parse(&key, v)?,
            "ffn_ratio" => self.ffn_ratio = parse(&key, v)?,
            "max_text_len" => self.max_text_len = parse(&key, v)?,
            "bins" => self.bins = parse(&key, v)?,
            "init_std" => self.init_std = parse(&key, v)?,
            "box_format" => self.box_format = v.parse()?,
            "query_mode" => self.query_mode = v.parse()?,
            "seed" => self.seed = parse(&key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every field as text, keyed by name.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_map_ordered()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Every field as text, in declaration order.
    pub fn to_map_ordered(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.template_size.to_string(),
            self.search_size.to_string(),
            self.patch_size.to_string(),
            self.template_factor.to_string(),
            self.search_factor.to_string(),
            self.channels.to_string(),
            self.model_dim.to_string(),
            self.text_layers.to_string(),
            self.visual_layers.to_string(),
            self.fusion_layers.to_string(),
            self.decoder_layers.to_string(),
            self.encoder_heads.to_string(),
            self.fusion_heads.to_string(),
            self.decoder_heads.to_string(),
            self.ffn_ratio.to_string(),
            self.max_text_len.to_string(),
            self.bins.to_string(),
            self.init_std.to_string(),
            self.box_format.to_string(),
            self.query_mode.to_string(),
            self.seed.to_string(),
        ];
        TrackerConfig::KEYS.into_iter().zip(values).collect()
    }

    /// Inverse of [`TrackerConfig::to_map`]; every key must be present.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = TrackerConfig::toy();
        for k in TrackerConfig::KEYS {
            let v = map.get(k).ok_or_else(|| Error::Config(format!("missing key `{k}`")))?;
            cfg.set(k, v)?;
        }
        if let Some(extra) = map.keys().find(|k| !TrackerConfig::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{extra}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TrackerConfig::toy().validate().unwrap();
        TrackerConfig::full().validate().unwrap();
        assert_eq!(TrackerConfig::toy().visual_tokens(), 80);
        assert_eq!(TrackerConfig::full().visual_tokens(), 720);
    }

    #[test]
    fn map_round_trip_and_set() {
        let mut c = TrackerConfig::full();
        c.search_factor = 3.7;
        c.query_mode = QueryMode::SingleCue;
        assert_eq!(TrackerConfig::from_map(&c.to_map()).unwrap(), c);
        let mut t = TrackerConfig::toy();
        assert!(t.set("box-format", "center").unwrap());
        assert_eq!(t.box_format, BoxFormat::Center);
        assert!(!t.set("learning_rate", "1").unwrap());
        assert!(t.set("bins", "many").is_err());
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut c = TrackerConfig::toy();
        c.search_size = 60;
        assert!(c.validate().is_err());
        let mut c = TrackerConfig::toy();
        c.decoder_heads = 5;
        assert!(c.validate().is_err());
        let mut c = TrackerConfig::toy();
        c.bins = 1;
        assert!(c.validate().is_err());
    }
}

//! Model container: `MMTK1\n`, a one-line JSON header, zero padding to an
//! 8-byte boundary, then every tensor as little-endian `f64` in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::pipeline::{Tracker, TrackerConfig};
use crate::textenc::TextVocab;

pub const MAGIC: &[u8] = b"MMTK1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset from the start of the payload.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: BTreeMap<String, String>,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::Checkpoint(detail.into())
}

fn padded(len: usize) -> usize {
    len.div_ceil(8) * 8
}

pub fn to_bytes(tracker: &Tracker) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(tracker.params().len());
    let mut offset = 0;
    for (name, t) in tracker.params().iter() {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f64".into(),
            offset,
        });
        offset += t.numel() * 8;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: tracker.config().to_map(),
        vocab: tracker.vocab().words().to_vec(),
        tensors,
    };
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_string(&header)?.into_bytes());
    out.push(b'\n');
    out.resize(padded(out.len()), 0);
    out.reserve(offset);
    for (_, t) in tracker.params().iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(tracker: &Tracker, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(tracker)?)?;
    Ok(())
}

/// Parses a container. With `expected`, tensor shapes are checked against
/// that configuration instead of the stored one.
pub fn from_bytes(bytes: &[u8], expected: Option<&TrackerConfig>) -> Result<Tracker> {
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| corrupt("bad magic"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("header is not terminated"))?;
    let header: Header =
        serde_json::from_slice(&rest[..nl]).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let start = padded(MAGIC.len() + nl + 1);
    if bytes.len() < start || bytes[MAGIC.len() + nl + 1..start].iter().any(|&b| b != 0) {
        return Err(corrupt("truncated or malformed header padding"));
    }
    let payload = &bytes[start..];
    let mut expected_len = 0;
    for e in &header.tensors {
        if e.dtype != "f64" {
            return Err(corrupt(format!("tensor `{}` has dtype {}", e.name, e.dtype)));
        }
        if e.offset != expected_len {
            return Err(corrupt(format!("tensor `{}` at offset {}, expected {expected_len}", e.name, e.offset)));
        }
        expected_len += e.shape.iter().product::<usize>() * 8;
    }
    if payload.len() != expected_len {
        return Err(corrupt(format!(
            "payload has {} bytes, header describes {expected_len}",
            payload.len()
        )));
    }
    let stored = TrackerConfig::from_map(&header.config)?;
    let config = expected.cloned().unwrap_or(stored);
    let vocab = TextVocab::from_words(header.vocab)?;
    let mut params = ParamStore::new();
    for e in header.tensors {
        let n = e.shape.iter().product::<usize>();
        let data = payload[e.offset..e.offset + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(&e.name, Tensor::new(e.shape, data)?)?;
    }
    Tracker::from_parts(config, vocab, params)
}

pub fn load_checkpoint(path: &Path, expected: Option<&TrackerConfig>) -> Result<Tracker> {
    from_bytes(&fs::read(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker() -> Tracker {
        let cfg = TrackerConfig {
            channels: 8,
            model_dim: 8,
            encoder_heads: 2,
            fusion_heads: 2,
            decoder_heads: 2,
            visual_layers: 1,
            bins: 12,
            ..TrackerConfig::toy()
        };
        Tracker::new(cfg, TextVocab::build(&["a red box"]).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = tracker();
        let bytes = to_bytes(&t).unwrap();
        assert_eq!(&bytes[..6], MAGIC);
        let back = from_bytes(&bytes, None).unwrap();
        assert_eq!(back.params(), t.params());
        assert_eq!(back.config(), t.config());
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&tracker()).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3], None).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad, None).is_err());
        let key = b"\"format_version\":1";
        let at = bytes.windows(key.len()).position(|w| w == key).unwrap();
        let mut newer = bytes.clone();
        newer[at + key.len() - 1] = b'2';
        let err = from_bytes(&newer, None).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        assert!(from_bytes(&bytes[..4], None).is_err());
    }

    #[test]
    fn shape_disagreement_with_override() {
        let t = tracker();
        let bytes = to_bytes(&t).unwrap();
        let err = from_bytes(&bytes, Some(&TrackerConfig::full())).unwrap_err();
        assert!(err.to_string().contains("shape") || err.to_string().contains("tensor"), "{err}");
    }
}

//! Finite-difference checks of every differentiable operation, the building
//! blocks composed from them, and the complete toy tracker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vltrack::bench::{generate_dataset, GenConfig};
use vltrack::numerics::gradcheck::{check, TOLERANCE};
use vltrack::numerics::nn::{self, Specs};
use vltrack::numerics::{AttnSegment, Graph, Init, ParamStore, Tensor, Var};
use vltrack::pipeline::train::fixed_sample;
use vltrack::pipeline::{Tracker, TrackerConfig};
use vltrack::seqtok::{BoxFormat, QueryMode};
use vltrack::textenc::TextVocab;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for &(name, r, c) in shapes {
        s.insert(name, random(r, c, &mut rng)).unwrap();
    }
    s
}

/// Reduces `x` to a scalar through fixed random weights so every entry gets
/// a distinct gradient.
fn project(g: &mut Graph, x: Var, seed: u64) -> Var {
    let shape = g.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(random(shape[0], shape[1], &mut rng)).unwrap();
    let y = g.mul(x, w).unwrap();
    g.sum(y).unwrap()
}

fn assert_grads<F>(s: &ParamStore, loss: F)
where
    F: Fn(&mut Graph, &ParamStore) -> vltrack::Result<Var>,
{
    let report = check(s, loss, 12, 1).unwrap();
    for grp in &report.groups {
        assert!(grp.max_rel_error <= TOLERANCE, "{}: {:.3e}", grp.name, grp.max_rel_error);
        assert!(grp.max_abs_grad > 0.0, "{} has no gradient", grp.name);
    }
}

#[test]
fn matmul_add_and_mul() {
    let s = store(&[("a", 3, 4), ("b", 4, 5), ("r", 1, 5), ("m", 3, 5)], 1);
    assert_grads(&s, |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let r = g.param(s, "r")?;
        let m = g.param(s, "m")?;
        let ab = g.matmul(a, b)?;
        let x = g.add_row(ab, r)?;
        let x = g.mul(x, m)?;
        let x = g.add(x, m)?;
        let x = g.scale(x, 0.7)?;
        Ok(project(g, x, 1))
    });
}

#[test]
fn pointwise_nonlinearities() {
    let s = store(&[("x", 4, 6)], 2);
    for which in 0..3 {
        assert_grads(&s, |g, s| {
            let x = g.param(s, "x")?;
            let y = match which {
                0 => g.gelu(x)?,
                1 => g.sigmoid(x)?,
                _ => g.relu(x)?,
            };
            Ok(project(g, y, 2))
        });
    }
}

#[test]
fn layer_norm_all_inputs() {
    let s = store(&[("x", 3, 7), ("gamma", 1, 7), ("beta", 1, 7)], 3);
    assert_grads(&s, |g, s| {
        let x = g.param(s, "x")?;
        let gamma = g.param(s, "gamma")?;
        let beta = g.param(s, "beta")?;
        let y = g.layer_norm(x, gamma, beta, 1e-5)?;
        Ok(project(g, y, 3))
    });
}

#[test]
fn segmented_attention_plain_and_causal() {
    let s = store(&[("q", 7, 8), ("k", 9, 8), ("v", 9, 8)], 4);
    for causal in [false, true] {
        assert_grads(&s, |g, s| {
            let q = g.param(s, "q")?;
            let k = g.param(s, "k")?;
            let v = g.param(s, "v")?;
            let segments = [
                AttnSegment { q_start: 0, q_len: 3, k_start: 0, k_len: 4 },
                AttnSegment { q_start: 3, q_len: 4, k_start: 4, k_len: 5 },
            ];
            let y = g.attention(q, k, v, 2, &segments, causal)?;
            Ok(project(g, y, 4))
        });
    }
}

#[test]
fn row_plumbing() {
    let s = store(&[("a", 4, 3), ("b", 2, 3)], 5);
    assert_grads(&s, |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let c = g.concat_rows(&[a, b])?;
        let picked = g.select_rows(c, &[5, 0, 2, 2, 4])?;
        let mean = g.segment_mean(c, &[(0, 2), (2, 4)])?;
        let both = g.concat_rows(&[picked, mean])?;
        Ok(project(g, both, 5))
    });
}

#[test]
fn cross_entropy_loss() {
    let s = store(&[("logits", 5, 6)], 6);
    assert_grads(&s, |g, s| {
        let l = g.param(s, "logits")?;
        g.cross_entropy(l, &[0, 5, 2, 2, 3])
    });
}

#[test]
fn composed_encoder_layer() {
    let mut specs = Specs::default();
    specs.add("x", &[6, 8], Init::Normal(1.0));
    specs.encoder("enc", 2, 8, 16);
    let mut s = specs.build(7).unwrap();
    // widen the 0.02 init so every path carries signal
    for name in s.names().filter(|n| *n != "x").cloned().collect::<Vec<_>>() {
        let t = s.get(&name).unwrap();
        let scaled: Vec<f64> = t.data().iter().map(|v| v * 3.0 + 0.05).collect();
        let t = Tensor::new(t.shape().to_vec(), scaled).unwrap();
        s.set(&name, t).unwrap();
    }
    assert_grads(&s, |g, s| {
        let x = g.param(s, "x")?;
        let y = nn::encoder(g, s, "enc", x, 2, 2, &nn::square_segments(&[(0, 2), (2, 4)]))?;
        Ok(project(g, y, 7))
    });
}

fn tracker_report(cfg: TrackerConfig) -> f64 {
    let seqs = generate_dataset(&GenConfig { count: 2, length: 2, ..GenConfig::default() }).unwrap();
    let captions: Vec<&str> = seqs.iter().map(|s| s.caption.as_str()).collect();
    let tracker = Tracker::new(cfg.clone(), TextVocab::build(&captions).unwrap()).unwrap();
    let batch: Vec<_> = seqs.iter().map(|s| fixed_sample(&cfg, s).unwrap()).collect();
    let report = tracker.gradient_check(&batch, 2, 3).unwrap();
    assert_eq!(report.groups.len(), tracker.params().len());
    report.max_rel_error()
}

#[test]
fn small_tracker_both_query_modes() {
    for (mode, format) in [(QueryMode::MultiCues, BoxFormat::Corner), (QueryMode::SingleCue, BoxFormat::Center)] {
        let cfg = TrackerConfig {
            channels: 16,
            model_dim: 16,
            text_layers: 1,
            visual_layers: 1,
            fusion_layers: 1,
            decoder_layers: 1,
            bins: 20,
            query_mode: mode,
            box_format: format,
            ..TrackerConfig::toy()
        };
        let err = tracker_report(cfg);
        assert!(err <= TOLERANCE, "{mode}/{format}: {err:.3e}");
    }
}

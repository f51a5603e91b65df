//! Transformer building blocks over [`Graph`], with their parameter layouts.
//!
//! Every block comes in two halves: a `*_specs` function that declares the
//! parameters it needs, and a forward function that looks them up by the same
//! prefix. Layers use pre-normalization: `x + f(norm(x))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::kernels::AttnSegment;
use crate::numerics::{Graph, Init, ParamStore, Var};

pub const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered list of parameter declarations.
#[derive(Clone, Debug)]
pub struct Specs {
    pub params: Vec<ParamSpec>,
    /// Standard deviation of linear-layer weights.
    pub weight_std: f64,
}

impl Default for Specs {
    fn default() -> Self {
        Specs::new(INIT_STD)
    }
}

impl Specs {
    pub fn new(weight_std: f64) -> Self {
        Specs { params: Vec::new(), weight_std }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) {
        self.params.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
    }

    pub fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.add(format!("{prefix}.w"), &[fan_in, fan_out], Init::Normal(self.weight_std));
        self.add(format!("{prefix}.b"), &[fan_out], Init::Zeros);
    }

    pub fn layer_norm(&mut self, prefix: &str, width: usize) {
        self.add(format!("{prefix}.gamma"), &[width], Init::Ones);
        self.add(format!("{prefix}.beta"), &[width], Init::Zeros);
    }

    pub fn attention(&mut self, prefix: &str, width: usize) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{p}"), width, width);
        }
    }

    pub fn feed_forward(&mut self, prefix: &str, width: usize, hidden: usize) {
        self.linear(&format!("{prefix}.fc1"), width, hidden);
        self.linear(&format!("{prefix}.fc2"), hidden, width);
    }

    /// Stack of encoder layers plus a final norm.
    pub fn encoder(&mut self, prefix: &str, layers: usize, width: usize, hidden: usize) {
        for l in 0..layers {
            let p = format!("{prefix}.layer{l}");
            self.layer_norm(&format!("{p}.ln1"), width);
            self.attention(&format!("{p}.attn"), width);
            self.layer_norm(&format!("{p}.ln2"), width);
            self.feed_forward(&format!("{p}.ffn"), width, hidden);
        }
        self.layer_norm(&format!("{prefix}.ln_out"), width);
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Materializes every declared parameter, drawing from one seeded stream
    /// in declaration order.
    pub fn build(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for s in &self.params {
            store.register(&s.name, &s.shape, s.init, &mut rng)?;
        }
        Ok(store)
    }
}

/// One self-attention segment per `(start, len)` row range.
pub fn square_segments(ranges: &[(usize, usize)]) -> Vec<AttnSegment> {
    ranges.iter().map(|&(s, l)| AttnSegment::square(s, l)).collect()
}

pub fn linear(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

pub fn layer_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let gamma = g.param(store, &format!("{prefix}.gamma"))?;
    let beta = g.param(store, &format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, LN_EPS)
}

/// Multi-head attention with queries from `x` and keys/values from `mem`.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    x: Var,
    mem: Var,
    heads: usize,
    segments: &[AttnSegment],
    causal: bool,
) -> Result<Var> {
    let q = linear(g, store, &format!("{prefix}.q"), x)?;
    let k = linear(g, store, &format!("{prefix}.k"), mem)?;
    let v = linear(g, store, &format!("{prefix}.v"), mem)?;
    let a = g.attention(q, k, v, heads, segments, causal)?;
    linear(g, store, &format!("{prefix}.o"), a)
}

pub fn feed_forward(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let h = linear(g, store, &format!("{prefix}.fc1"), x)?;
    let h = g.gelu(h)?;
    linear(g, store, &format!("{prefix}.fc2"), h)
}

/// Bidirectional encoder stack; each segment attends only within itself.
pub fn encoder(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    mut x: Var,
    layers: usize,
    heads: usize,
    segments: &[AttnSegment],
) -> Result<Var> {
    for l in 0..layers {
        let p = format!("{prefix}.layer{l}");
        let h = layer_norm(g, store, &format!("{p}.ln1"), x)?;
        let h = attention(g, store, &format!("{p}.attn"), h, h, heads, segments, false)?;
        x = g.add(x, h)?;
        let h = layer_norm(g, store, &format!("{p}.ln2"), x)?;
        let h = feed_forward(g, store, &format!("{p}.ffn"), h)?;
        x = g.add(x, h)?;
    }
    layer_norm(g, store, &format!("{prefix}.ln_out"), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn specs_build_is_seeded() {
        let mut s = Specs::default();
        s.encoder("enc", 2, 8, 16);
        let a = s.build(5).unwrap();
        let b = s.build(5).unwrap();
        let c = s.build(6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_scalars(), s.num_scalars());
    }

    #[test]
    fn encoder_preserves_shape() {
        let mut s = Specs::default();
        s.encoder("enc", 1, 8, 16);
        let store = s.build(1).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[5, 8], 0.1)).unwrap();
        let y = encoder(&mut g, &store, "enc", x, 1, 2, &[AttnSegment::square(0, 5)]).unwrap();
        assert_eq!(g.value(y).shape(), &[5, 8]);
    }
}

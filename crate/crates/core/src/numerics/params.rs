use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given std, truncated to two standard deviations.
    Normal(f64),
}

impl Init {
    pub fn sample<R: Rng + ?Sized>(self, numel: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Init::Zeros => vec![0.0; numel],
            Init::Ones => vec![1.0; numel],
            Init::Normal(std) => (0..numel)
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        break z * std;
                    }
                })
                .collect(),
        }
    }
}

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl OptimHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("optimizer hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameters plus their AdamW moment accumulators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Adds a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.slots.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let n = value.numel();
        self.slots.insert(
            name.to_string(),
            Slot {
                value: value.with_requires_grad(true),
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        );
        Ok(())
    }

    pub fn register<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut R) -> Result<()> {
        let numel = shape.iter().product();
        let value = Tensor::new(shape.to_vec(), init.sample(numel, rng))?;
        self.insert(name, value)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    /// Overwrites a parameter's values. The shape is fixed at creation.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_param",
                format!("`{name}` is {:?}, got {:?}", slot.value.shape(), value.shape()),
            ));
        }
        slot.value = value.with_requires_grad(true);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k, &s.value))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.slots.keys()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.numel()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update with bias-corrected moments and decoupled weight
    /// decay: `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
    pub fn adamw_step(&mut self, grads: &BTreeMap<String, Tensor>, hyper: &OptimHyper) -> Result<()> {
        hyper.validate()?;
        for (name, slot) in &self.slots {
            let g = grads.get(name).ok_or_else(|| Error::UnknownParam(format!("missing gradient for `{name}`")))?;
            if g.shape() != slot.value.shape() {
                return Err(Error::shape(
                    "adamw_step",
                    format!("`{name}` is {:?}, gradient {:?}", slot.value.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        let lr = hyper.learning_rate;
        for (name, slot) in self.slots.iter_mut() {
            let g = grads[name].data();
            let Slot { value, m, v } = slot;
            let p = value.data_mut();
            for i in 0..p.len() {
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + hyper.eps) + hyper.weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![value]).unwrap()).unwrap();
        s
    }

    fn grads(value: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::vector(vec![value]).unwrap())])
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut s = single(0.7);
        let hyper = OptimHyper {
            weight_decay: 0.0,
            ..OptimHyper::default()
        };
        s.adamw_step(&grads(0.0), &hyper).unwrap();
        assert_eq!(s.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn zero_grad_applies_decoupled_decay() {
        let mut s = single(2.0);
        let hyper = OptimHyper {
            learning_rate: 0.01,
            weight_decay: 0.5,
            ..OptimHyper::default()
        };
        s.adamw_step(&grads(0.0), &hyper).unwrap();
        assert_eq!(s.get("w").unwrap().item(), 2.0 * (1.0 - 0.01 * 0.5));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for &g in &[3.0, -0.02] {
            let mut s = single(1.0);
            let hyper = OptimHyper {
                learning_rate: 1e-3,
                weight_decay: 0.0,
                ..OptimHyper::default()
            };
            s.adamw_step(&grads(g), &hyper).unwrap();
            let delta = s.get("w").unwrap().item() - 1.0;
            assert!((delta + 1e-3 * g.signum()).abs() < 1e-9, "delta {delta}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = single(1.0);
        let bad = BTreeMap::from([("w".to_string(), Tensor::vector(vec![1.0, 2.0]).unwrap())]);
        assert!(s.adamw_step(&bad, &OptimHyper::default()).is_err());
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn deterministic_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = ParamStore::new();
        a.register("x", &[4, 5], Init::Normal(0.02), &mut rng).unwrap();
        let mut b = a.clone();
        let g = BTreeMap::from([("x".to_string(), Tensor::filled(&[4, 5], 0.3))]);
        for _ in 0..3 {
            a.adamw_step(&g, &OptimHyper::default()).unwrap();
            b.adamw_step(&g, &OptimHyper::default()).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_normal_stays_within_two_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Init::Normal(0.02).sample(10_000, &mut rng);
        assert!(v.iter().all(|x| x.abs() <= 0.04));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = single(1.0);
        assert!(s.insert("w", Tensor::scalar(0.0)).is_err());
        assert!(s.set("w", Tensor::vector(vec![1.0, 2.0]).unwrap()).is_err());
    }
}

//! Central finite-difference check of analytic gradients.
//!
//! The check only ever evaluates the forward pass, so it stays independent of
//! the backward code it verifies.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Graph, ParamStore, Var};

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; below it, rounding noise of the finite difference dominates.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Largest relative error a passing check may report.
pub const TOLERANCE: f64 = 1e-4;

/// Relative step: `h = STEP * max(1, |theta|)`.
pub const STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_grad: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupReport> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares analytic gradients of `loss` against central differences on up
/// to `per_param` entries of every parameter. The entry with the largest
/// analytic gradient is always included; the rest are drawn at random.
pub fn check<F>(store: &ParamStore, loss: F, per_param: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    let analytic = g.grad(l, store)?;
    drop(g);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, s)?;
        Ok(g.value(l).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    let names: Vec<String> = store.names().cloned().collect();
    for name in names {
        let grad = &analytic[&name];
        let n = grad.numel();
        let argmax = (0..n)
            .max_by(|&a, &b| grad.data()[a].abs().total_cmp(&grad.data()[b].abs()))
            .unwrap_or(0);
        let mut idx = vec![argmax];
        let extra = per_param.saturating_sub(1).min(n);
        idx.extend(sample(&mut rng, n, extra).into_iter().filter(|&i| i != argmax));
        idx.truncate(per_param.max(1));

        let mut worst: f64 = 0.0;
        for &i in &idx {
            let original = store.get(&name).expect("name from store").clone();
            let theta = original.data()[i];
            let h = STEP * theta.abs().max(1.0);
            let mut plus = original.clone();
            plus.data_mut()[i] = theta + h;
            work.set(&name, plus)?;
            let f_plus = eval(&work)?;
            let mut minus = original.clone();
            minus.data_mut()[i] = theta - h;
            work.set(&name, minus)?;
            let f_minus = eval(&work)?;
            work.set(&name, original)?;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        report.groups.push(GroupReport {
            name,
            checked: idx.len(),
            max_rel_error: worst,
            max_abs_grad: grad.data()[argmax].abs(),
        });
    }
    Ok(report)
}

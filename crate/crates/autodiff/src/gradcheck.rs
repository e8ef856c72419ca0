//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences with step `eps`, for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let floor = 1e-6;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.input(t.clone().with_requires_grad(true)))
        .collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss, &mut [])?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, checked: 0 };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for j in 0..inputs[k].len() {
            let orig = work[k].values()[j];
            work[k].values_mut()[j] = orig + eps;
            let up = eval(&work)?;
            work[k].values_mut()[j] = orig - eps;
            let down = eval(&work)?;
            work[k].values_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(floor);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Seeded tensor with entries uniform in `[lo, hi)`.
pub fn seeded_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("consistent shape")
}

/// Seeded tensor whose entries keep at least `margin` away from zero, for
/// checking ops with a kink at the origin.
pub fn seeded_tensor_away_from_zero(shape: &[usize], seed: u64, scale: f64, margin: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let vals = (0..n)
        .map(|_| {
            let m = rng.gen_range(margin..scale);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, vals).expect("consistent shape")
}

/// Reduces `v` to a scalar through a fixed seeded weighting, so every output
/// element contributes a distinct gradient.
pub fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let r = seeded_tensor(g.shape(v), seed, -1.0, 1.0);
    let r = g.constant(r);
    let p = g.mul(v, r)?;
    Ok(g.sum(p))
}

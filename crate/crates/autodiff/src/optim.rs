use crate::error::{AutodiffError, Result};
use crate::params::{round_to_storage, ParamSet};

/// Adam optimiser state for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.5, 0.999)
    }

    pub fn with_betas(params: &ParamSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = |p: &ParamSet| (0..p.len()).map(|i| vec![0.0; p.tensor(i).len()]).collect();
        Self {
            step: 0,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: zeros(params),
            v: zeros(params),
        }
    }
}

/// Bias-corrected Adam update. Gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    if state.m.len() != params.len()
        || (0..params.len()).any(|i| state.m[i].len() != params.tensor(i).len())
    {
        return Err(AutodiffError::Contract("optimiser state does not match parameters".into()));
    }
    if let Some(i) = (0..params.len()).find(|&i| params.tensor(i).grad().is_none()) {
        return Err(AutodiffError::Contract(format!(
            "parameter {} has no gradient",
            params.name(i)
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let tensor = params.tensor_mut(i);
        let grad = tensor.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, value) in tensor.values_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *value = round_to_storage(*value - state.lr * mhat / (vhat.sqrt() + state.eps));
        }
        tensor.zero_grad();
    }
    Ok(())
}

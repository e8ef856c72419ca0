use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConditioningTrack, VocoderModel};
use crate::dsp::{MuLaw, Waveform};
use crate::error::{Error, Result};

/// How a class is chosen from the predicted distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Most likely class; ties go to the lowest class.
    #[default]
    Mode,
    /// Seeded draw from the softmax distribution.
    Sample,
}

/// `((f − 1)·x + y) / f`: reference sample `x` weighted against the
/// network's prediction `y`.
pub fn teacher_blend(x: f64, y: f64, f: f64) -> f64 {
    ((f - 1.0) * x + y) / f
}

fn select(logits: &[f64], selection: Selection, rng: &mut ChaCha8Rng) -> usize {
    match selection {
        Selection::Mode => {
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            best
        }
        Selection::Sample => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
            let mut r = rng.gen::<f64>() * weights.iter().sum::<f64>();
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    return i;
                }
                r -= w;
            }
            weights.len() - 1
        }
    }
}

/// Shared autoregressive loop: `prime` samples are teacher-forced, the rest
/// are predicted and optionally blended with `reference`; every emitted
/// value is re-encoded as the next input.
fn run(
    model: &VocoderModel,
    cond: &ConditioningTrack,
    n: usize,
    prime: &[f64],
    reference: Option<(&[f64], f64)>,
    selection: Selection,
    seed: u64,
) -> Result<Waveform> {
    if cond.channels() != model.config.cond_channels {
        return Err(Error::Contract(format!(
            "conditioning has {} channels, model expects {}",
            cond.channels(),
            model.config.cond_channels
        )));
    }
    if n > cond.len() {
        return Err(Error::Contract(format!("asked for {n} samples, conditioning covers {}", cond.len())));
    }
    let mu = MuLaw::new(model.config.classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = model.stream();
    let mut out = Vec::with_capacity(n);
    let mut prev = mu.encode(0.0);
    for t in 0..n {
        let logits = stream.step(prev, cond.column(t));
        let value = if let Some(&p) = prime.get(t) {
            p.clamp(-1.0, 1.0)
        } else {
            let y = mu.decode(select(&logits, selection, &mut rng));
            match reference {
                Some((x, f)) => teacher_blend(x[t].clamp(-1.0, 1.0), y, f),
                None => y,
            }
        };
        out.push(value);
        prev = mu.encode(value);
    }
    Waveform::new(out, cond.sample_rate_hz())
}

/// Free-running generation of `n` samples.
pub fn generate(
    model: &VocoderModel,
    cond: &ConditioningTrack,
    n: usize,
    selection: Selection,
    seed: u64,
) -> Result<Waveform> {
    run(model, cond, n, &[], None, selection, seed)
}

/// Generation whose first `prime.len()` samples are copied from `prime`
/// (teacher-forced), continuing freely up to `n` samples in total.
pub fn generate_primed(
    model: &VocoderModel,
    cond: &ConditioningTrack,
    prime: &[f64],
    n: usize,
    selection: Selection,
    seed: u64,
) -> Result<Waveform> {
    run(model, cond, n, &prime[..prime.len().min(n)], None, selection, seed)
}

/// Generation in which each prediction `y` is blended with the reference
/// sample `x` as `((f − 1)·x + y) / f` before being emitted and fed back.
pub fn generate_teacher_weighted(
    model: &VocoderModel,
    cond: &ConditioningTrack,
    reference: &Waveform,
    n: usize,
    f: f64,
    selection: Selection,
    seed: u64,
) -> Result<Waveform> {
    if !(f >= 1.0) || !f.is_finite() {
        return Err(Error::Config(format!("teacher weight f must be a finite value >= 1, got {f}")));
    }
    if reference.len() < n {
        return Err(Error::Contract(format!("reference has {} samples, {n} needed", reference.len())));
    }
    run(model, cond, n, &[], Some((reference.samples(), f)), selection, seed)
}

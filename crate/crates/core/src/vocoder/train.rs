use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spectrans_autodiff::{adam_step, AdamState, Graph, Var};

use super::{ConditioningTrack, VocoderModel};
use crate::dsp::{MuLaw, Waveform};
use crate::error::{Error, Result};

/// Vocoder optimisation settings (Adam, β = 0.9/0.999).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocoderTrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// Random crop length per step; `None` trains on whole clips.
    pub segment_samples: Option<usize>,
    pub checkpoint_every: usize,
}

impl Default for VocoderTrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, steps: 200, seed: 1, segment_samples: None, checkpoint_every: 0 }
    }
}

impl VocoderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.steps == 0 {
            return Err(Error::Config("vocoder lr must be > 0 and steps >= 1".into()));
        }
        Ok(())
    }
}

/// Input and target classes for samples `start..start + len` of `audio`;
/// the input before the first sample is silence.
fn classes(mu: &MuLaw, audio: &[f64], start: usize, len: usize) -> (Vec<usize>, Vec<usize>) {
    let inputs = (start..start + len)
        .map(|t| mu.encode(if t == 0 { 0.0 } else { audio[t - 1] }))
        .collect();
    let targets = audio[start..start + len].iter().map(|&x| mu.encode(x)).collect();
    (inputs, targets)
}

fn check(model: &VocoderModel, audio: &Waveform, cond: &ConditioningTrack) -> Result<()> {
    if audio.len() != cond.len() {
        return Err(Error::Contract(format!(
            "audio has {} samples, conditioning {}",
            audio.len(),
            cond.len()
        )));
    }
    if audio.len() < model.receptive_field() {
        return Err(Error::Contract(format!(
            "clip of {} samples is shorter than the receptive field {}",
            audio.len(),
            model.receptive_field()
        )));
    }
    Ok(())
}

fn nll_graph(
    model: &VocoderModel,
    g: &mut Graph,
    audio: &[f64],
    cond: &ConditioningTrack,
    start: usize,
    len: usize,
    frozen: bool,
) -> Result<Var> {
    let mu = MuLaw::new(model.config.classes)?;
    let (inputs, targets) = classes(&mu, audio, start, len);
    let logits = model.logits(g, &inputs, cond, start, frozen)?;
    Ok(g.softmax_cross_entropy(logits, &targets)?)
}

/// Mean cross-entropy of every sample's μ-law class given the true past
/// and its conditioning, evaluated in parallel over time.
pub fn nll_teacher_forced(model: &VocoderModel, audio: &Waveform, cond: &ConditioningTrack) -> Result<f64> {
    check(model, audio, cond)?;
    let mut g = Graph::new();
    let loss = nll_graph(model, &mut g, audio.samples(), cond, 0, audio.len(), true)?;
    Ok(g.value(loss).item())
}

/// The same loss evaluated one sample at a time with the incremental stream.
pub fn nll_incremental(model: &VocoderModel, audio: &Waveform, cond: &ConditioningTrack) -> Result<f64> {
    check(model, audio, cond)?;
    let mu = MuLaw::new(model.config.classes)?;
    let (inputs, targets) = classes(&mu, audio.samples(), 0, audio.len());
    let mut stream = model.stream();
    let mut total = 0.0;
    for (t, (&i, &y)) in inputs.iter().zip(&targets).enumerate() {
        let logits = stream.step(i, cond.column(t));
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    Ok(total / audio.len() as f64)
}

/// Teacher-forced training on (audio, conditioning) clips. Each step picks a
/// seeded clip (and crop, when `segment_samples` is set), takes one Adam
/// step and records the loss. `hook(step, model, history)` runs every
/// `checkpoint_every` steps and after the last one.
pub fn train_vocoder(
    model: &mut VocoderModel,
    clips: &[(Waveform, ConditioningTrack)],
    cfg: &VocoderTrainConfig,
    hook: &mut dyn FnMut(usize, &VocoderModel, &[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::Config("vocoder training set is empty".into()));
    }
    let rf = model.receptive_field();
    for (audio, cond) in clips {
        check(model, audio, cond)?;
        if cond.channels() != model.config.cond_channels {
            return Err(Error::Config(format!(
                "conditioning has {} channels, vocoder is configured for {}",
                cond.channels(),
                model.config.cond_channels
            )));
        }
    }
    if let Some(seg) = cfg.segment_samples {
        if seg < rf {
            return Err(Error::Config(format!("segment of {seg} samples is shorter than the receptive field {rf}")));
        }
    }
    let mut opt = AdamState::with_betas(&model.params, cfg.lr, 0.9, 0.999);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let (audio, cond) = &clips[rng.gen_range(0..clips.len())];
        let (start, len) = match cfg.segment_samples {
            Some(seg) if seg < audio.len() => (rng.gen_range(0..=audio.len() - seg), seg),
            _ => (0, audio.len()),
        };
        let mut g = Graph::new();
        let loss = nll_graph(model, &mut g, audio.samples(), cond, start, len, false)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("vocoder loss became non-finite at step {step}")));
        }
        g.backward(loss, &mut [&mut model.params])?;
        adam_step(&mut model.params, &mut opt)?;
        history.push(value);
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) || step == cfg.steps {
            hook(step, model, &history)?;
        }
    }
    Ok(history)
}

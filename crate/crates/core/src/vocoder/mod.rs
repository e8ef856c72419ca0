//! Conditioned autoregressive waveform model: μ-law categorical output,
//! dilated causal convolutions with gated activations, frame-hold
//! conditioning, teacher-forced training and free-running or
//! teacher-weighted generation.

mod generate;
mod model;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::SpectroImage;
use crate::error::{Error, Result};

pub use generate::{generate, generate_primed, generate_teacher_weighted, teacher_blend, Selection};
pub use model::{Stream, VocoderModel};
pub use train::{nll_incremental, nll_teacher_forced, train_vocoder, VocoderTrainConfig};

/// Network shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocoderConfig {
    pub layers_per_cycle: usize,
    pub cycles: usize,
    pub kernel: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub cond_channels: usize,
    pub classes: usize,
    /// Samples per conditioning frame.
    pub hop: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            layers_per_cycle: 8,
            cycles: 2,
            kernel: 2,
            residual_channels: 32,
            skip_channels: 64,
            cond_channels: 64,
            classes: 256,
            hop: 388,
        }
    }
}

impl VocoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers_per_cycle == 0 || self.cycles == 0 || self.layers_per_cycle > 16 {
            return Err(Error::Config("need 1..=16 layers per cycle and at least one cycle".into()));
        }
        if self.kernel < 2 || self.classes < 2 || self.hop == 0 {
            return Err(Error::Config("kernel and classes must be at least 2, hop at least 1".into()));
        }
        if self.residual_channels == 0 || self.skip_channels == 0 || self.cond_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Number of past input positions (including the current one) that can
    /// influence an output: `cycles·(2^L − 1)·(K − 1) + 1`.
    pub fn receptive_field(&self) -> usize {
        self.cycles * ((1 << self.layers_per_cycle) - 1) * (self.kernel - 1) + 1
    }
}

/// Per-sample conditioning: frame vectors held for `hop` samples each.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningTrack {
    channels: usize,
    frames: usize,
    hop: usize,
    sample_rate_hz: u32,
    /// Frame-major: `frames × channels`.
    values: Vec<f64>,
}

/// Hold each column of a single-channel spectrogram image for `hop`
/// samples; column `t` of the track is frame `⌊t / hop⌋`.
pub fn upsample_conditioning(frames: &SpectroImage, hop: usize, sample_rate_hz: u32) -> Result<ConditioningTrack> {
    if hop == 0 {
        return Err(Error::Config("conditioning hop must be at least 1".into()));
    }
    if frames.channels() != 1 {
        return Err(Error::Contract(format!("conditioning image has {} channels, expected 1", frames.channels())));
    }
    let (h, w) = (frames.height(), frames.width());
    let mut values = Vec::with_capacity(h * w);
    for t in 0..w {
        values.extend((0..h).map(|r| frames.at(0, r, t)));
    }
    Ok(ConditioningTrack { channels: h, frames: w, hop, sample_rate_hz, values })
}

impl ConditioningTrack {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Track length in samples (`frames · hop`).
    pub fn len(&self) -> usize {
        self.frames * self.hop
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn column(&self, t: usize) -> &[f64] {
        let f = t / self.hop;
        &self.values[f * self.channels..(f + 1) * self.channels]
    }

    /// Channel-major `[channels × len]` values of columns `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.channels * len];
        for i in 0..len {
            for (c, v) in self.column(start + i).iter().enumerate() {
                out[c * len + i] = *v;
            }
        }
        out
    }
}

/// Sidecar describing a saved vocoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocoderMeta {
    pub vocoder: VocoderConfig,
    pub train: VocoderTrainConfig,
    pub history: Vec<f64>,
    pub fingerprint: String,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_vocoder(model: &VocoderModel, train: &VocoderTrainConfig, history: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    model.params.save(path)?;
    let meta = VocoderMeta {
        vocoder: model.config.clone(),
        train: train.clone(),
        history: history.to_vec(),
        fingerprint: format!("{:016x}", model.params.fingerprint()),
    };
    std::fs::write(sidecar(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_vocoder(path: impl AsRef<Path>) -> Result<(VocoderModel, VocoderMeta)> {
    let path = path.as_ref();
    let meta: VocoderMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
    let mut model = VocoderModel::new(&meta.vocoder, 0)?;
    model.params.load_matching(path)?;
    let found = format!("{:016x}", model.params.fingerprint());
    if found != meta.fingerprint {
        return Err(Error::Format(format!(
            "{}: parameter fingerprint {found} does not match sidecar {}",
            path.display(),
            meta.fingerprint
        )));
    }
    Ok((model, meta))
}

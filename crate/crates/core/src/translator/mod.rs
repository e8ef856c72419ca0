//! Conditional image translator: U-Net generator, patch discriminator,
//! least-squares adversarial training with an L1 term, tiled inference.

mod nets;
mod tile;
mod toy;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nets::{Discriminator, Generator, PatchDiscConfig, UNetConfig};
pub use tile::{translate, translate_grid, Blend};
pub use toy::{shift_rows, toy_band_image, toy_shift_pairs};
pub use train::{
    discriminator_phase, generator_phase, ls_discriminator_loss, ls_generator_loss, no_checkpoints, train, train_autoencoder_baseline, train_step, CheckpointHook, History, StepLosses, TrainConfig,
    Trainer,
};

/// Sidecar describing a saved generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub generator: UNetConfig,
    pub discriminator: Option<PatchDiscConfig>,
    pub train: TrainConfig,
    pub step: usize,
    pub history: History,
    /// Hex fingerprint of the saved parameters.
    pub fingerprint: String,
}

/// Path of the JSON sidecar next to a parameter file.
pub fn sidecar_path(params: &Path) -> PathBuf {
    params.with_extension("json")
}

/// Write the generator parameters to `path` and the configs and loss
/// history to the sidecar.
pub fn save_generator(
    gen: &Generator,
    disc: Option<&Discriminator>,
    train: &TrainConfig,
    history: &History,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    gen.params.save(path)?;
    let meta = CheckpointMeta {
        generator: gen.config.clone(),
        discriminator: disc.map(|d| d.config.clone()),
        train: train.clone(),
        step: history.len(),
        history: history.clone(),
        fingerprint: format!("{:016x}", gen.params.fingerprint()),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Rebuild a generator from a parameter file and its sidecar.
pub fn load_generator(path: impl AsRef<Path>) -> Result<(Generator, CheckpointMeta)> {
    let path = path.as_ref();
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut gen = Generator::new(&meta.generator, 0)?;
    gen.params.load_matching(path)?;
    let found = format!("{:016x}", gen.params.fingerprint());
    if found != meta.fingerprint {
        return Err(Error::Format(format!(
            "{}: parameter fingerprint {found} does not match sidecar {}",
            path.display(),
            meta.fingerprint
        )));
    }
    Ok((gen, meta))
}

//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectrans_core::datagen::{DatasetConfig, Task};
use spectrans_core::dsp::{Analysis, AnalysisConfig, StftChoice};
use spectrans_core::translator::{PatchDiscConfig, TrainConfig, UNetConfig};
use spectrans_core::vocoder::{Selection, VocoderConfig, VocoderTrainConfig};
use spectrans_core::Error;

use crate::CliError;

/// File name of the resolved configuration written next to every output.
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioSection {
    pub sample_rate_hz: u32,
    pub chunk_ms: f64,
}

impl Default for AudioSection {
    fn default() -> Self {
        Self { sample_rate_hz: 16000, chunk_ms: 1550.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSection {
    pub size: usize,
    pub db_floor: f64,
    pub db_ceiling: f64,
    pub fmin_hz: f64,
    pub fmax_hz: Option<f64>,
}

impl Default for ImageSection {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Self { size: a.image_size, db_floor: a.db_floor, db_ceiling: a.db_ceiling, fmin_hz: a.fmin_hz, fmax_hz: a.fmax_hz }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Fraction of scores used for translator training; the rest is held out
    /// (evaluation and cascade vocoder training). 1 disables the split.
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: 0.75 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub gl_iterations: usize,
    /// Teacher weight f for vocoder generation (1 = free-running).
    pub teacher_weight: f64,
    pub selection: Selection,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { gl_iterations: 32, teacher_weight: 1.0, selection: Selection::Mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchSection {
    /// Shortest run of frames reported as a note.
    pub min_frames: usize,
}

impl Default for PitchSection {
    fn default() -> Self {
        Self { min_frames: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub vocoder: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { data: 1, train: 1, vocoder: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub translator: Option<PathBuf>,
    pub refiner: Option<PathBuf>,
    pub vocoder: Option<PathBuf>,
}

/// Every knob of the pipeline. Sections may be omitted; unknown keys are
/// rejected. Derived fields (network channel counts, image sizes, hop, and
/// the per-stage seeds) are overwritten by [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub audio: AudioSection,
    pub stft: StftChoice,
    pub image: ImageSection,
    /// Overrides `dataset.task` when given.
    pub task: Option<Task>,
    pub dataset: DatasetConfig,
    pub split: SplitSection,
    pub generator: UNetConfig,
    pub discriminator: PatchDiscConfig,
    pub train: TrainConfig,
    pub vocoder: VocoderConfig,
    pub vocoder_train: VocoderTrainConfig,
    pub reconstruct: ReconstructSection,
    pub pitch: PitchSection,
    pub seeds: Seeds,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            audio: AudioSection::default(),
            stft: StftChoice::default(),
            image: ImageSection::default(),
            task: None,
            dataset: DatasetConfig::default(),
            split: SplitSection::default(),
            generator: UNetConfig::default(),
            discriminator: PatchDiscConfig::default(),
            train: TrainConfig::default(),
            vocoder: VocoderConfig::default(),
            vocoder_train: VocoderTrainConfig { segment_samples: Some(4096), ..VocoderTrainConfig::default() },
            reconstruct: ReconstructSection::default(),
            pitch: PitchSection::default(),
            seeds: Seeds::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parse a configuration document; unknown keys are configuration errors.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("configuration: {e}")))
    }

    /// Read `path`, or fall back to defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::from_json(&text)
            }
            None => Ok(Self::default()),
        }
    }

    pub fn analysis_config(&self) -> AnalysisConfig {
        AnalysisConfig {
            sample_rate_hz: self.audio.sample_rate_hz,
            chunk_ms: self.audio.chunk_ms,
            image_size: self.image.size,
            stft: self.stft,
            fmin_hz: self.image.fmin_hz,
            fmax_hz: self.image.fmax_hz,
            db_floor: self.image.db_floor,
            db_ceiling: self.image.db_ceiling,
        }
    }

    pub fn analysis(&self) -> Result<Analysis, CliError> {
        Ok(Analysis::new(&self.analysis_config())?)
    }

    /// Apply the seed override and fill in every derived field; validates
    /// the result.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seeds = Seeds { data: s, train: s, vocoder: s };
        }
        if let Some(t) = self.task {
            self.dataset.task = t;
        }
        self.task = Some(self.dataset.task);
        self.dataset.seed = self.seeds.data;
        self.train.seed = self.seeds.train;
        self.vocoder_train.seed = self.seeds.vocoder;

        let analysis = self.analysis()?;
        let task = self.dataset.task;
        self.generator.image_size = self.image.size;
        self.generator.in_channels = task.input_channels();
        self.generator.out_channels = 1;
        self.discriminator.in_channels = self.generator.in_channels + self.generator.out_channels;
        self.vocoder.cond_channels = self.image.size;
        self.vocoder.hop = analysis.hop();

        self.dataset.validate()?;
        self.generator.validate()?;
        self.discriminator.validate(self.generator.image_size)?;
        self.train.validate()?;
        self.vocoder.validate()?;
        self.vocoder_train.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            return Err(Error::Config(format!("split.train_fraction {} must lie in (0, 1]", self.split.train_fraction)).into());
        }
        if !(self.reconstruct.teacher_weight >= 1.0) {
            return Err(Error::Config("reconstruct.teacher_weight must be >= 1".into()).into());
        }
        if self.reconstruct.gl_iterations == 0 {
            return Err(Error::Config("reconstruct.gl_iterations must be at least 1".into()).into());
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises") + "\n"
    }

    /// Write the resolved configuration into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        crate::write_text(&dir.join(CONFIG_FILE), &self.to_json())
    }
}

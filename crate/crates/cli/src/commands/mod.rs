//! One module per subcommand, plus the helpers they share.

mod datagen;
mod evaluate;
mod train;
mod translate;

use std::path::{Path, PathBuf};

use spectrans_core::datagen::Task;
use spectrans_core::dsp::{read_wav, resample_cubic, Analysis, SpectroImage, Waveform};
use spectrans_core::translator::{load_generator, CheckpointMeta, Generator};

use crate::config::{RunConfig, CONFIG_FILE};
use crate::{config_err, CliError};

pub use datagen::datagen;
pub use evaluate::{evaluate, EvalInputs, EvalOutcome, PairResult};
pub use train::{train_translator, train_vocoder, CascadeRecord, HeldOut, SplitRecord, TrainSummary};
pub use translate::{pitch_track, translate, Method, PitchOutcome, TranslateOptions, TranslateReport};

/// File names shared between commands.
pub const GENERATOR_FILE: &str = "generator.params";
pub const VOCODER_FILE: &str = "vocoder.params";
pub const SPLIT_FILE: &str = "split.json";
pub const HISTORY_FILE: &str = "history.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CASCADE_FILE: &str = "cascade.json";
pub const REPORT_FILE: &str = "report.json";

/// Options every command accepts.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Common {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { config: None, seed: None, out: out.into(), jobs: 1 }
    }

    pub fn jobs(&self) -> usize {
        self.jobs.max(1)
    }

    /// The explicit `--config`, else `config.json` in `fallback_dir` (the
    /// directory of the input the command consumes), else the defaults;
    /// resolved with the seed override.
    pub fn resolve_config(&self, fallback_dir: Option<&Path>) -> Result<RunConfig, CliError> {
        let fallback = fallback_dir.map(|d| d.join(CONFIG_FILE)).filter(|p| p.is_file());
        let path = self.config.as_deref().or(fallback.as_deref());
        RunConfig::load(path)?.resolve(self.seed)
    }
}

/// Directory holding a checkpoint file (or the path itself when it is one).
pub fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Accept either a parameter file or the directory a training run wrote.
pub fn checkpoint_file(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

/// Load a generator checkpoint and check it against the configured shape.
pub fn load_translator(path: &Path, cfg: &RunConfig) -> Result<(Generator, CheckpointMeta), CliError> {
    let file = checkpoint_file(path, GENERATOR_FILE);
    let (gen, meta) = load_generator(&file)?;
    if gen.config != cfg.generator {
        return Err(config_err(format!(
            "{}: checkpoint architecture {:?} does not match the configured generator {:?}",
            file.display(),
            gen.config,
            cfg.generator
        )));
    }
    Ok((gen, meta))
}

/// Read a WAV file and bring it to the configured rate; returns the audio and
/// the band limit (Hz) its original rate or the task implies.
pub fn load_input_audio(path: &Path, cfg: &RunConfig) -> Result<(Waveform, Option<f64>), CliError> {
    let w = read_wav(path)?;
    let sr = cfg.audio.sample_rate_hz;
    let native = w.sample_rate_hz();
    let mut cutoff = (native < sr).then_some(native as f64 / 2.0);
    if cfg.dataset.task == Task::SuperResolve {
        let task_limit = cfg.dataset.low_rate_hz as f64 / 2.0;
        cutoff = Some(cutoff.map_or(task_limit, |c| c.min(task_limit)));
    }
    let w = if native == sr { w } else { resample_cubic(&w, sr)? };
    if w.is_empty() {
        return Err(config_err(format!("{}: no samples", path.display())));
    }
    Ok((w, cutoff))
}

/// Generator input for an audio clip: its mel image, padded with constant
/// −1 channels for the three-channel joint model.
pub fn input_image(w: &Waveform, cutoff: Option<f64>, analysis: &Analysis, cfg: &RunConfig) -> Result<SpectroImage, CliError> {
    let mel = analysis.mel_image(w, cutoff)?;
    let channels = cfg.generator.in_channels;
    if channels == 1 {
        return Ok(mel);
    }
    let mut parts = vec![mel.clone()];
    for _ in 1..channels {
        parts.push(SpectroImage::filled(1, mel.height(), mel.width(), -1.0, mel.scale));
    }
    Ok(SpectroImage::stack(&parts)?)
}

/// Tasks whose generator output is a mel image of audio.
pub fn produces_mel(task: Task) -> bool {
    task != Task::Restore
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectrans_cli::commands::{self, Common, EvalInputs, Method, TranslateOptions};
use spectrans_cli::{config_err, CliError};
use spectrans_core::datagen::Task;
use spectrans_core::vocoder::Selection;

#[derive(Parser)]
#[command(name = "spectrans", version, about = "Spectrogram translation for instrumental audio")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (defaults, or the input's config.json, when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for data, training and generation streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for independent per-pair work.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common { config: a.config, seed: a.seed, out: a.out, jobs: a.jobs }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic paired dataset.
    Datagen {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a translator on a dataset.
    TrainTranslator {
        /// Dataset directory or manifest.
        #[arg(long)]
        dataset: PathBuf,
        /// Train the generator with the L1 loss alone (no discriminator).
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the vocoder, optionally on a translator's held-out predictions.
    TrainVocoder {
        #[arg(long)]
        dataset: PathBuf,
        /// Translator checkpoint for cascade training.
        #[arg(long)]
        translator: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Translate a WAV file and reconstruct audio.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// gl, gl2 or vocoder.
        #[arg(long, default_value = "gl")]
        method: String,
        #[arg(long)]
        refiner: Option<PathBuf>,
        #[arg(long)]
        vocoder: Option<PathBuf>,
        /// Teacher weight for vocoder generation.
        #[arg(long = "f")]
        teacher_weight: Option<f64>,
        /// mode or sample.
        #[arg(long)]
        selection: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Transcribe a WAV file with a pitch-tracking translator.
    PitchTrack {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare predicted and ground-truth images (and audio).
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        truth: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        pred_audio: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        truth_audio: Vec<PathBuf>,
        /// Comma-separated interfering stems, one group per pair.
        #[arg(long, num_args = 1..)]
        interference: Vec<String>,
        #[arg(long)]
        task: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn selection(name: &str) -> Result<Selection, CliError> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| config_err(format!("unknown selection {name:?} (expected mode or sample)")))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Datagen { common } => commands::datagen(&common.into()).map(drop),
        Command::TrainTranslator { dataset, baseline, common } => {
            commands::train_translator(&common.into(), &dataset, baseline).map(drop)
        }
        Command::TrainVocoder { dataset, translator, common } => {
            commands::train_vocoder(&common.into(), &dataset, translator.as_deref()).map(drop)
        }
        Command::Translate { checkpoint, input, method, refiner, vocoder, teacher_weight, selection: sel, common } => {
            let opts = TranslateOptions {
                checkpoint,
                input,
                method: method.parse::<Method>()?,
                refiner,
                vocoder,
                teacher_weight,
                selection: sel.as_deref().map(selection).transpose()?,
            };
            commands::translate(&common.into(), &opts).map(drop)
        }
        Command::PitchTrack { checkpoint, input, common } => {
            commands::pitch_track(&common.into(), &checkpoint, &input).map(drop)
        }
        Command::Evaluate { pred, truth, pred_audio, truth_audio, interference, task, common } => {
            let inputs = EvalInputs {
                pred,
                truth,
                pred_audio,
                truth_audio,
                interference: interference
                    .iter()
                    .map(|g| g.split(',').filter(|s| !s.is_empty()).map(PathBuf::from).collect())
                    .collect(),
                task: task.as_deref().map(Task::parse).transpose()?,
            };
            commands::evaluate(&common.into(), &inputs).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

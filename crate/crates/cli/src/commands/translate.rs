use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spectrans_core::datagen::{format_score, NoteEvent, Task, MAX_PITCH, MIN_PITCH};
use spectrans_core::dsp::{hz_to_midi, write_png, write_wav, Analysis, SpectroImage, Waveform};
use spectrans_core::metrics::{decode_pitch, extract_notes, BinNote};
use spectrans_core::translator::{load_generator, translate as tile_translate, translate_grid, Blend, Generator};
use spectrans_core::vocoder::{
    generate, generate_teacher_weighted, load_vocoder, upsample_conditioning, Selection,
};

use super::{
    checkpoint_dir, checkpoint_file, input_image, load_input_audio, load_translator, produces_mel, Common, GENERATOR_FILE,
    REPORT_FILE, VOCODER_FILE,
};
use crate::config::{RunConfig, CONFIG_FILE};
use crate::{config_err, create_dir, write_json, write_text, CliError};

/// Spectrogram-to-waveform reconstruction method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Undo the mel warp, then Griffin-Lim.
    Gl,
    /// Undo the mel warp, refine the linear image with a second translator,
    /// then Griffin-Lim.
    Gl2,
    /// Conditioned autoregressive generation.
    Vocoder,
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "gl" => Ok(Method::Gl),
            "gl2" => Ok(Method::Gl2),
            "vocoder" => Ok(Method::Vocoder),
            other => Err(config_err(format!("unknown method {other:?} (expected gl, gl2 or vocoder)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TranslateOptions {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub method: Method,
    pub refiner: Option<PathBuf>,
    pub vocoder: Option<PathBuf>,
    /// Teacher weight; the configured value when absent.
    pub teacher_weight: Option<f64>,
    pub selection: Option<Selection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateReport {
    pub method: Method,
    pub input: String,
    pub output_wav: String,
    pub sample_rate_hz: u32,
    pub samples: usize,
    pub duration_s: f64,
    pub elapsed_s: f64,
    /// Audio seconds produced per second of processing.
    pub realtime_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_weight: Option<f64>,
}

fn resolve_for_checkpoint(common: &Common, checkpoint: &Path) -> Result<RunConfig, CliError> {
    common.resolve_config(Some(&checkpoint_dir(&checkpoint_file(checkpoint, GENERATOR_FILE))))
}

fn predict_mel(gen: &Generator, w: &Waveform, cutoff: Option<f64>, analysis: &Analysis, cfg: &RunConfig, jobs: usize) -> Result<SpectroImage, CliError> {
    let input = input_image(w, cutoff, analysis, cfg)?;
    Ok(tile_translate(gen, &input, Blend::Crossfade, jobs)?)
}

fn png(img: &SpectroImage, path: &Path) -> Result<(), CliError> {
    Ok(write_png(img, path)?)
}

/// Refinement generator for `gl2`: a single-channel translator trained on
/// restore pairs of the same image size.
fn load_refiner(path: &Path, cfg: &RunConfig) -> Result<Generator, CliError> {
    let file = checkpoint_file(path, GENERATOR_FILE);
    let (gen, _) = load_generator(&file)?;
    let own_config = checkpoint_dir(&file).join(CONFIG_FILE);
    if own_config.is_file() {
        let rc = RunConfig::load(Some(&own_config))?.resolve(None)?;
        if rc.dataset.task != Task::Restore {
            return Err(config_err(format!("{}: refiner was trained for {}, expected restore", file.display(), rc.dataset.task.name())));
        }
    }
    let g = &gen.config;
    if g.in_channels != 1 || g.out_channels != 1 || g.image_size != cfg.image.size {
        return Err(config_err(format!("{}: refiner must map 1→1 channels at size {}", file.display(), cfg.image.size)));
    }
    Ok(gen)
}

/// Translate a WAV file with a trained translator and reconstruct audio
/// from the predicted mel image.
pub fn translate(common: &Common, opts: &TranslateOptions) -> Result<TranslateReport, CliError> {
    let cfg = resolve_for_checkpoint(common, &opts.checkpoint)?;
    if !produces_mel(cfg.dataset.task) {
        return Err(config_err("restore checkpoints refine linear images; pass them as --refiner with method gl2"));
    }
    let refiner_path = opts.refiner.clone().or_else(|| cfg.paths.refiner.clone());
    let vocoder_path = opts.vocoder.clone().or_else(|| cfg.paths.vocoder.clone());
    match opts.method {
        Method::Gl2 if refiner_path.is_none() => return Err(config_err("method gl2 needs a --refiner checkpoint")),
        Method::Vocoder if vocoder_path.is_none() => return Err(config_err("method vocoder needs a --vocoder checkpoint")),
        _ => {}
    }
    if opts.refiner.is_some() && opts.method != Method::Gl2 {
        return Err(config_err("--refiner is only used by method gl2"));
    }
    if opts.vocoder.is_some() && opts.method != Method::Vocoder {
        return Err(config_err("--vocoder is only used by method vocoder"));
    }
    let teacher_weight = opts.teacher_weight.unwrap_or(cfg.reconstruct.teacher_weight);
    if opts.method == Method::Vocoder && !(teacher_weight >= 1.0 && teacher_weight.is_finite()) {
        return Err(config_err(format!("teacher weight {teacher_weight} must be a finite value >= 1")));
    }

    let analysis = cfg.analysis()?;
    let (gen, _) = load_translator(&opts.checkpoint, &cfg)?;
    let refiner = match (opts.method, &refiner_path) {
        (Method::Gl2, Some(p)) => Some(load_refiner(p, &cfg)?),
        _ => None,
    };
    let vocoder = match (opts.method, &vocoder_path) {
        (Method::Vocoder, Some(p)) => {
            let (model, _) = load_vocoder(checkpoint_file(p, VOCODER_FILE))?;
            if model.config.cond_channels != cfg.image.size || model.config.hop != analysis.hop() {
                return Err(config_err(format!(
                    "vocoder conditions on {} channels at hop {}, translator emits {} rows at hop {}",
                    model.config.cond_channels,
                    model.config.hop,
                    cfg.image.size,
                    analysis.hop()
                )));
            }
            Some(model)
        }
        _ => None,
    };
    let (w, cutoff) = load_input_audio(&opts.input, &cfg)?;
    create_dir(&common.out)?;
    let jobs = common.jobs();
    let n = w.len();

    let start = Instant::now();
    let mel = predict_mel(&gen, &w, cutoff, &analysis, &cfg, jobs)?;
    let iterations = cfg.reconstruct.gl_iterations;
    let (audio, linear_images) = match opts.method {
        Method::Gl => {
            let linear = analysis.rescale_to_linear(&mel)?;
            let img = analysis.linear_image(&linear)?;
            (analysis.reconstruct(&linear, n, iterations)?, vec![("linear.png", img)])
        }
        Method::Gl2 => {
            let rescaled = analysis.linear_image(&analysis.rescale_to_linear(&mel)?)?;
            let refiner = refiner.as_ref().expect("refiner loaded for gl2");
            let refined = translate_grid(refiner, &rescaled, Blend::Crossfade, jobs)?;
            let linear = analysis.linear_from_image(&refined)?;
            (analysis.reconstruct(&linear, n, iterations)?, vec![("linear_rescaled.png", rescaled), ("linear.png", refined)])
        }
        Method::Vocoder => {
            let model = vocoder.as_ref().expect("vocoder loaded");
            let cond = upsample_conditioning(&mel, analysis.hop(), analysis.sample_rate_hz())?;
            let selection = opts.selection.unwrap_or(cfg.reconstruct.selection);
            let seed = cfg.seeds.vocoder;
            let audio = if teacher_weight == 1.0 {
                generate(model, &cond, n, selection, seed)?
            } else {
                generate_teacher_weighted(model, &cond, &w, n, teacher_weight, selection, seed)?
            };
            let img = analysis.linear_image(&analysis.linear(&audio, &analysis.layout_for(n)?, None)?)?;
            (audio, vec![("linear.png", img)])
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    png(&mel, &common.out.join("mel.png"))?;
    for (name, img) in &linear_images {
        png(img, &common.out.join(name))?;
    }
    let wav_path = common.out.join("output.wav");
    write_wav(&audio, &wav_path)?;
    let duration_s = audio.duration_s();
    let report = TranslateReport {
        method: opts.method,
        input: opts.input.display().to_string(),
        output_wav: wav_path.display().to_string(),
        sample_rate_hz: audio.sample_rate_hz(),
        samples: audio.len(),
        duration_s,
        elapsed_s: elapsed,
        realtime_factor: duration_s / elapsed.max(1e-9),
        teacher_weight: (opts.method == Method::Vocoder).then_some(teacher_weight),
    };
    write_json(&common.out.join(REPORT_FILE), &report)?;
    cfg.write_to(&common.out)?;
    println!("{:.2} s of audio in {:.2} s: realtime factor {:.2}x", duration_s, elapsed, report.realtime_factor);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchOutcome {
    /// Brightest row per frame, `None` when unvoiced.
    pub bins: Vec<Option<usize>>,
    pub notes: Vec<BinNote>,
    pub score: Vec<NoteEvent>,
}

/// Score events for image-coordinate notes: frame `j` spans samples
/// `[j·hop, (j+1)·hop)`; the pitch is the MIDI note nearest the row's centre.
pub fn notes_to_score(notes: &[BinNote], analysis: &Analysis) -> Result<Vec<NoteEvent>, CliError> {
    let ms_per_frame = analysis.hop() as f64 * 1000.0 / analysis.sample_rate_hz() as f64;
    notes
        .iter()
        .map(|n| {
            let midi = hz_to_midi(analysis.filterbank().centre_hz(n.bin)).round() as i32;
            let midi = midi.clamp(MIN_PITCH, MAX_PITCH);
            Ok(NoteEvent::new(n.start as f64 * ms_per_frame, n.frames as f64 * ms_per_frame, midi, 1.0)?)
        })
        .collect()
}

/// Run a pitch-tracking translator over a WAV file and transcribe the result.
pub fn pitch_track(common: &Common, checkpoint: &Path, input: &Path) -> Result<PitchOutcome, CliError> {
    let cfg = resolve_for_checkpoint(common, checkpoint)?;
    if !matches!(cfg.dataset.task, Task::PitchTrack | Task::Joint) {
        return Err(config_err(format!("checkpoint was trained for {}, not pitch tracking", cfg.dataset.task.name())));
    }
    let analysis = cfg.analysis()?;
    let (gen, _) = load_translator(checkpoint, &cfg)?;
    let (w, cutoff) = load_input_audio(input, &cfg)?;
    create_dir(&common.out)?;
    let pred = predict_mel(&gen, &w, cutoff, &analysis, &cfg, common.jobs())?;
    let bins = decode_pitch(&pred)?;
    let notes = extract_notes(&bins, cfg.pitch.min_frames);
    let score = notes_to_score(&notes, &analysis)?;

    let mut csv = String::from("frame_index,bin,voiced\n");
    for (i, b) in bins.iter().enumerate() {
        match b {
            Some(b) => csv.push_str(&format!("{i},{b},1\n")),
            None => csv.push_str(&format!("{i},-1,0\n")),
        }
    }
    png(&pred, &common.out.join("mel.png"))?;
    write_text(&common.out.join("pitch.csv"), &csv)?;
    write_text(&common.out.join("notes.txt"), &format_score(&score))?;
    let outcome = PitchOutcome { bins, notes, score };
    write_json(&common.out.join("notes.json"), &outcome)?;
    cfg.write_to(&common.out)?;
    eprintln!("{} frames, {} notes", outcome.bins.len(), outcome.notes.len());
    for (n, e) in outcome.notes.iter().zip(&outcome.score) {
        println!("frames {:>4}..{:<4} bin {:>3}  MIDI {}", n.start, n.end(), n.bin, e.midi_pitch);
    }
    Ok(outcome)
}

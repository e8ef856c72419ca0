use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spectrans_core::datagen::Task;
use spectrans_core::dsp::{read_png, read_wav, SpectroImage, Waveform};
use spectrans_core::metrics::{bss_ratios, decode_pitch, extract_notes, pitch_stats, EvalReport};
use spectrans_core::par_map;

use super::{Common, REPORT_FILE};
use crate::{config_err, create_dir, write_json, CliError};

/// Aligned file lists: entry `i` of every list belongs to pair `i`.
#[derive(Clone, Debug, Default)]
pub struct EvalInputs {
    pub pred: Vec<PathBuf>,
    pub truth: Vec<PathBuf>,
    /// Optional audio for source-to-distortion/interference ratios.
    pub pred_audio: Vec<PathBuf>,
    pub truth_audio: Vec<PathBuf>,
    /// Interfering stems per pair.
    pub interference: Vec<Vec<PathBuf>>,
    /// Overrides the configured task.
    pub task: Option<Task>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairResult {
    pub pred: String,
    pub truth: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutcome {
    pub task: Task,
    pub pairs: Vec<PairResult>,
    pub mean: EvalReport,
}

fn check_len(name: &str, len: usize, expected: usize) -> Result<(), CliError> {
    if len != expected {
        return Err(config_err(format!("{len} {name} files for {expected} predictions; lists must be aligned")));
    }
    Ok(())
}

fn read_audio(paths: &[PathBuf]) -> Result<Vec<Waveform>, CliError> {
    paths.iter().map(|p| Ok(read_wav(p)?)).collect()
}

/// Score predicted images (and optionally audio) against the truth.
pub fn evaluate(common: &Common, inputs: &EvalInputs) -> Result<EvalOutcome, CliError> {
    let mut cfg = common.resolve_config(None)?;
    if let Some(t) = inputs.task {
        cfg.task = Some(t);
        cfg.dataset.task = t;
    }
    let task = cfg.dataset.task;
    let n = inputs.pred.len();
    if n == 0 {
        return Err(config_err("no prediction files given"));
    }
    check_len("truth", inputs.truth.len(), n)?;
    let with_audio = !inputs.pred_audio.is_empty() || !inputs.truth_audio.is_empty();
    if with_audio {
        check_len("predicted audio", inputs.pred_audio.len(), n)?;
        check_len("truth audio", inputs.truth_audio.len(), n)?;
        if !inputs.interference.is_empty() {
            check_len("interference group", inputs.interference.len(), n)?;
        }
    } else if !inputs.interference.is_empty() {
        return Err(config_err("interference stems need --pred-audio and --truth-audio"));
    }
    let scale = cfg.analysis()?.scale();
    let min_frames = cfg.pitch.min_frames;

    let indices: Vec<usize> = (0..n).collect();
    let results = par_map(&indices, common.jobs(), |&i| -> Result<PairResult, CliError> {
        let pred: SpectroImage = read_png(&inputs.pred[i], 1, scale)?;
        let truth: SpectroImage = read_png(&inputs.truth[i], 1, scale)?;
        if pred.shape() != truth.shape() {
            return Err(config_err(format!(
                "{} is {:?}, {} is {:?}",
                inputs.pred[i].display(),
                pred.shape(),
                inputs.truth[i].display(),
                truth.shape()
            )));
        }
        let mut report = EvalReport::for_images(&pred, &truth)?;
        if task == Task::PitchTrack {
            let (pb, tb) = (decode_pitch(&pred)?, decode_pitch(&truth)?);
            let (pn, tn) = (extract_notes(&pb, min_frames), extract_notes(&tb, min_frames));
            report.pitch = Some(pitch_stats(&pb, &pn, &tb, &tn)?);
        }
        if with_audio {
            let est = read_wav(&inputs.pred_audio[i])?;
            let target = read_wav(&inputs.truth_audio[i])?;
            let interference = match inputs.interference.get(i) {
                Some(group) => read_audio(group)?,
                None => Vec::new(),
            };
            report.bss = Some(bss_ratios(&est, &target, &interference)?);
        }
        Ok(PairResult {
            pred: inputs.pred[i].display().to_string(),
            truth: inputs.truth[i].display().to_string(),
            report,
        })
    });
    let pairs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<EvalReport> = pairs.iter().map(|p| p.report.clone()).collect();
    let outcome = EvalOutcome { task, mean: EvalReport::aggregate(&reports)?, pairs };

    create_dir(&common.out)?;
    write_json(&common.out.join(REPORT_FILE), &outcome)?;
    cfg.write_to(&common.out)?;
    print!("{}", summary_table(&outcome));
    Ok(outcome)
}

fn row(name: &str, r: &EvalReport) -> String {
    let mut line = format!("{name:<32} {:>8.3} {:>7.4}", r.l1_percent, r.ssim);
    if let Some(p) = &r.pitch {
        line.push_str(&format!(" {:>4}/{:<4} {:>7.2} {:>7.2}", p.correct_notes, p.total_truth_notes, p.precision, p.mean_frame_error));
    }
    if let Some(b) = &r.bss {
        line.push_str(&format!(" {:>8.2} {:>8.2}", b.sdr_db, b.sir_db));
    }
    line + "\n"
}

/// Plain-text table: one row per pair and a final mean row.
pub fn summary_table(o: &EvalOutcome) -> String {
    let mut header = format!("{:<32} {:>8} {:>7}", "pair", "L1 %", "SSIM");
    if o.mean.pitch.is_some() {
        header.push_str(&format!(" {:>9} {:>7} {:>7}", "notes", "prec %", "err"));
    }
    if o.mean.bss.is_some() {
        header.push_str(&format!(" {:>8} {:>8}", "SDR dB", "SIR dB"));
    }
    let mut out = header + "\n";
    for p in &o.pairs {
        let name = std::path::Path::new(&p.pred).file_name().map_or(p.pred.clone(), |f| f.to_string_lossy().into_owned());
        out.push_str(&row(&name, &p.report));
    }
    out.push_str(&row("mean", &o.mean));
    out
}

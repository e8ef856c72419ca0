use serde::{Deserialize, Serialize};

use crate::dsp::SpectroImage;
use crate::error::{Error, Result};

/// Frames whose brightest pixel is at or below this value are unvoiced.
pub const VOICING_THRESHOLD: f64 = -0.9;

/// Brightest row per column (lowest row on ties), `None` when unvoiced.
pub fn decode_pitch(img: &SpectroImage) -> Result<Vec<Option<usize>>> {
    if img.channels() != 1 {
        return Err(Error::Contract(format!(
            "pitch decoding needs one channel, got {}",
            img.channels()
        )));
    }
    Ok((0..img.width())
        .map(|t| {
            let mut best = 0;
            for r in 1..img.height() {
                if img.at(0, r, t) > img.at(0, best, t) {
                    best = r;
                }
            }
            (img.at(0, best, t) > VOICING_THRESHOLD).then_some(best)
        })
        .collect())
}

/// A note in image coordinates: `frames` columns starting at `start`, at row `bin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinNote {
    pub start: usize,
    pub frames: usize,
    pub bin: usize,
}

impl BinNote {
    pub fn end(&self) -> usize {
        self.start + self.frames
    }

    pub fn overlap(&self, other: &BinNote) -> usize {
        self.end().min(other.end()).saturating_sub(self.start.max(other.start))
    }
}

fn lower_median(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Group voiced frames into notes: a run grows while each new frame's bin is
/// within ±1 of the (lower) median of the run including it. Runs shorter than
/// `min_frames` are dropped.
pub fn extract_notes(bins: &[Option<usize>], min_frames: usize) -> Vec<BinNote> {
    let min_frames = min_frames.max(1);
    let mut notes = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let mut start = 0;
    let flush = |run: &mut Vec<usize>, start: usize, notes: &mut Vec<BinNote>| {
        if run.len() >= min_frames {
            notes.push(BinNote { start, frames: run.len(), bin: lower_median(run) });
        }
        run.clear();
    };
    for (t, b) in bins.iter().enumerate() {
        match *b {
            None => flush(&mut run, start, &mut notes),
            Some(b) => {
                if !run.is_empty() {
                    run.push(b);
                    let m = lower_median(&run);
                    run.pop();
                    if b.abs_diff(m) > 1 {
                        flush(&mut run, start, &mut notes);
                    }
                }
                if run.is_empty() {
                    start = t;
                }
                run.push(b);
            }
        }
    }
    flush(&mut run, start, &mut notes);
    notes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchReport {
    pub correct_notes: usize,
    pub total_truth_notes: usize,
    pub total_pred_notes: usize,
    pub precision: f64,
    pub mean_frame_error: f64,
}

impl PitchReport {
    fn precision_of(correct: usize, predicted: usize, truth: usize) -> f64 {
        match (predicted, truth) {
            (0, 0) => 100.0,
            (0, _) => 0.0,
            _ => correct as f64 / predicted as f64 * 100.0,
        }
    }

    /// Summed tallies over spectrograms, frame errors averaged per spectrogram.
    pub fn combine(reports: &[&PitchReport]) -> PitchReport {
        let correct = reports.iter().map(|r| r.correct_notes).sum();
        let truth = reports.iter().map(|r| r.total_truth_notes).sum();
        let pred = reports.iter().map(|r| r.total_pred_notes).sum();
        PitchReport {
            correct_notes: correct,
            total_truth_notes: truth,
            total_pred_notes: pred,
            precision: Self::precision_of(correct, pred, truth),
            mean_frame_error: reports.iter().map(|r| r.mean_frame_error).sum::<f64>() / reports.len().max(1) as f64,
        }
    }
}

/// Note and frame tallies for one spectrogram. A truth note is correct when an
/// unused predicted note covers at least half of its frames at a bin within
/// ±1; a frame is wrong when voicing differs or bins differ by 2 or more.
pub fn pitch_stats(
    pred_bins: &[Option<usize>],
    pred_notes: &[BinNote],
    truth_bins: &[Option<usize>],
    truth_notes: &[BinNote],
) -> Result<PitchReport> {
    if pred_bins.len() != truth_bins.len() {
        return Err(Error::Contract(format!(
            "{} predicted frames vs {} truth frames",
            pred_bins.len(),
            truth_bins.len()
        )));
    }
    let mut used = vec![false; pred_notes.len()];
    let mut correct = 0;
    for t in truth_notes {
        let hit = pred_notes.iter().enumerate().find(|(i, p)| {
            !used[*i] && p.bin.abs_diff(t.bin) <= 1 && 2 * p.overlap(t) >= t.frames
        });
        if let Some((i, _)) = hit {
            used[i] = true;
            correct += 1;
        }
    }
    let frame_errors = pred_bins
        .iter()
        .zip(truth_bins)
        .filter(|(p, t)| match (p, t) {
            (None, None) => false,
            (Some(p), Some(t)) => p.abs_diff(*t) >= 2,
            _ => true,
        })
        .count();
    Ok(PitchReport {
        correct_notes: correct,
        total_truth_notes: truth_notes.len(),
        total_pred_notes: pred_notes.len(),
        precision: PitchReport::precision_of(correct, pred_notes.len(), truth_notes.len()),
        mean_frame_error: frame_errors as f64,
    })
}

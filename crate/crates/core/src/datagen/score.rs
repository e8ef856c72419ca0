use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PITCH: i32 = 24;
pub const MAX_PITCH: i32 = 108;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub midi_pitch: i32,
    pub velocity: f64,
}

impl NoteEvent {
    pub fn new(onset_ms: f64, duration_ms: f64, midi_pitch: i32, velocity: f64) -> Result<Self> {
        if !(onset_ms.is_finite() && onset_ms >= 0.0) {
            return Err(Error::Range(format!("onset {onset_ms} ms must be finite and non-negative")));
        }
        if !(duration_ms.is_finite() && duration_ms > 0.0) {
            return Err(Error::Range(format!("duration {duration_ms} ms must be positive")));
        }
        if !(MIN_PITCH..=MAX_PITCH).contains(&midi_pitch) {
            return Err(Error::Range(format!("MIDI pitch {midi_pitch} outside [{MIN_PITCH}, {MAX_PITCH}]")));
        }
        if !(velocity > 0.0 && velocity <= 1.0) {
            return Err(Error::Range(format!("velocity {velocity} outside (0, 1]")));
        }
        Ok(Self { onset_ms, duration_ms, midi_pitch, velocity })
    }

    pub fn end_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }

    pub fn frequency_hz(&self) -> f64 {
        crate::dsp::midi_to_hz(self.midi_pitch as f64)
    }
}

/// Sort by onset (stable) and cut each note off at the next onset; notes left
/// with no duration are dropped.
pub fn make_monophonic(mut events: Vec<NoteEvent>) -> Vec<NoteEvent> {
    events.sort_by(|a, b| a.onset_ms.total_cmp(&b.onset_ms));
    let mut out: Vec<NoteEvent> = Vec::with_capacity(events.len());
    for i in 0..events.len() {
        let mut e = events[i];
        if let Some(next) = events.get(i + 1) {
            if next.onset_ms < e.end_ms() {
                e.duration_ms = next.onset_ms - e.onset_ms;
            }
        }
        if e.duration_ms > 0.0 {
            out.push(e);
        }
    }
    out
}

/// Parse score text: one `onset_ms duration_ms midi_pitch [velocity]` per
/// line, `#` starts a comment.
pub fn parse_score(text: &str) -> Result<Vec<NoteEvent>> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let real = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("{what} {s:?} is not a number") })
        };
        let onset = real(fields[0], "onset")?;
        let duration = real(fields[1], "duration")?;
        let pitch: i32 = fields[2]
            .parse()
            .map_err(|_| Error::Parse { line: line_no, msg: format!("pitch {:?} is not an integer", fields[2]) })?;
        let velocity = match fields.get(3) {
            Some(v) => real(v, "velocity")?,
            None => 1.0,
        };
        let event = NoteEvent::new(onset, duration, pitch, velocity).map_err(|e| match e {
            Error::Range(msg) => Error::Range(format!("line {line_no}: {msg}")),
            other => other,
        })?;
        events.push(event);
    }
    Ok(make_monophonic(events))
}

/// Inverse of [`parse_score`]; numbers are written in shortest round-trip form.
pub fn format_score(events: &[NoteEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&format!("{} {} {} {}\n", e.onset_ms, e.duration_ms, e.midi_pitch, e.velocity));
    }
    out
}

/// Rhythm of generated scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rhythm {
    pub min_note_ms: f64,
    pub max_note_ms: f64,
    /// Probability that a note is followed by a rest.
    pub rest_probability: f64,
    pub max_rest_ms: f64,
}

impl Default for Rhythm {
    fn default() -> Self {
        Self { min_note_ms: 200.0, max_note_ms: 500.0, rest_probability: 0.25, max_rest_ms: 150.0 }
    }
}

/// Seeded monophonic score with pitches uniform in `[pitch_lo, pitch_hi]`.
/// Times are whole milliseconds.
pub fn random_score(seed: u64, n_notes: usize, pitch_lo: i32, pitch_hi: i32, rhythm: &Rhythm) -> Result<Vec<NoteEvent>> {
    if pitch_lo > pitch_hi || pitch_lo < MIN_PITCH || pitch_hi > MAX_PITCH {
        return Err(Error::Config(format!(
            "pitch range [{pitch_lo}, {pitch_hi}] must be ordered and inside [{MIN_PITCH}, {MAX_PITCH}]"
        )));
    }
    if !(rhythm.min_note_ms >= 1.0 && rhythm.max_note_ms >= rhythm.min_note_ms && rhythm.max_rest_ms >= 0.0)
        || !(0.0..=1.0).contains(&rhythm.rest_probability)
    {
        return Err(Error::Config("invalid rhythm settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n_notes);
    for _ in 0..n_notes {
        let dur = rng.gen_range(rhythm.min_note_ms..=rhythm.max_note_ms).round();
        let pitch = rng.gen_range(pitch_lo..=pitch_hi);
        let velocity = (rng.gen_range(0.6..=1.0f64) * 100.0).round() / 100.0;
        out.push(NoteEvent::new(t, dur, pitch, velocity)?);
        t += dur;
        if rng.gen_bool(rhythm.rest_probability) {
            t += rng.gen_range(0.0..=rhythm.max_rest_ms).round();
        }
    }
    Ok(out)
}

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NoteEvent;
use crate::dsp::{normalize_peak, Waveform};
use crate::error::{Error, Result};

/// Output peak of every rendering.
pub const RENDER_PEAK: f64 = 0.9;
/// Onset/offset ramp of blueprint notes.
pub const BLUEPRINT_RAMP_MS: f64 = 10.0;

/// Additive instrument model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimbreConfig {
    /// Relative partial amplitudes, first entry = fundamental.
    pub harmonic_amps: Vec<f64>,
    pub vibrato_rate_hz: f64,
    pub vibrato_depth_cents: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for TimbreConfig {
    /// A bowed-string-like timbre: bright, slowly decaying partials with vibrato.
    fn default() -> Self {
        Self {
            harmonic_amps: vec![1.0, 0.6, 0.5, 0.35, 0.3, 0.2, 0.15, 0.1],
            vibrato_rate_hz: 5.5,
            vibrato_depth_cents: 15.0,
            attack_ms: 40.0,
            release_ms: 60.0,
            noise_level: 0.01,
            seed: 1,
        }
    }
}

impl TimbreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.harmonic_amps.is_empty() {
            return Err(Error::Config("timbre needs at least one partial".into()));
        }
        if self.harmonic_amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("partial amplitudes must be finite and non-negative".into()));
        }
        let finite = [self.vibrato_rate_hz, self.vibrato_depth_cents, self.attack_ms, self.release_ms, self.noise_level];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("vibrato, envelope and noise settings must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Seeded timbre distinct from the default, used for interfering voices.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15);
        let partials = rng.gen_range(3..=10);
        let tilt = rng.gen_range(0.5..1.5);
        let harmonic_amps = (1..=partials)
            .map(|k| rng.gen_range(0.3..1.0) / (k as f64).powf(tilt))
            .collect();
        Self {
            harmonic_amps,
            vibrato_rate_hz: rng.gen_range(4.0..7.0),
            vibrato_depth_cents: rng.gen_range(0.0..25.0),
            attack_ms: rng.gen_range(5.0..60.0),
            release_ms: rng.gen_range(20.0..120.0),
            noise_level: rng.gen_range(0.0..0.02),
            seed,
        }
    }
}

fn total_samples(notes: &[NoteEvent], sr: u32) -> Result<usize> {
    let end = notes.iter().map(NoteEvent::end_ms).fold(0.0, f64::max);
    if notes.is_empty() || end <= 0.0 {
        return Err(Error::DegenerateInput("score has no notes".into()));
    }
    Ok((end * sr as f64 / 1000.0).ceil() as usize)
}

/// Linear attack/release envelope over a note of `len` samples.
fn envelope(n: usize, len: usize, attack: usize, release: usize) -> f64 {
    let attack = attack.min(len / 2);
    let release = release.min(len / 2);
    let mut g = 1.0;
    if attack > 0 && n < attack {
        g = n as f64 / attack as f64;
    }
    let from_end = len - n;
    if release > 0 && from_end <= release {
        g = g.min(from_end as f64 / release as f64);
    }
    g
}

fn note_span(e: &NoteEvent, sr: u32, total: usize) -> (usize, usize) {
    let start = (e.onset_ms * sr as f64 / 1000.0).round() as usize;
    let len = ((e.duration_ms * sr as f64 / 1000.0).round() as usize).min(total.saturating_sub(start));
    (start, len)
}

fn ms_to_samples(ms: f64, sr: u32) -> usize {
    (ms * sr as f64 / 1000.0).round() as usize
}

/// Equal-amplitude partials k·F0 (k = 1..n_partials) with 10 ms ramps,
/// peak-normalised to 0.9. Partials at or above Nyquist are omitted.
pub fn render_blueprint(notes: &[NoteEvent], sr: u32, n_partials: usize) -> Result<Waveform> {
    if n_partials == 0 {
        return Err(Error::Config("blueprint needs at least one partial".into()));
    }
    let timbre = TimbreConfig {
        harmonic_amps: vec![1.0; n_partials],
        vibrato_rate_hz: 0.0,
        vibrato_depth_cents: 0.0,
        attack_ms: BLUEPRINT_RAMP_MS,
        release_ms: BLUEPRINT_RAMP_MS,
        noise_level: 0.0,
        seed: 0,
    };
    render_instrument(notes, &timbre, sr)
}

/// Additive synthesis with vibrato, attack/release envelopes and seeded
/// low-passed noise; deterministic in `(notes, timbre, sr)`.
pub fn render_instrument(notes: &[NoteEvent], timbre: &TimbreConfig, sr: u32) -> Result<Waveform> {
    timbre.validate()?;
    let total = total_samples(notes, sr)?;
    let mut out = vec![0.0; total];
    let nyquist = sr as f64 / 2.0;
    let attack = ms_to_samples(timbre.attack_ms, sr);
    let release = ms_to_samples(timbre.release_ms, sr);
    let depth = timbre.vibrato_depth_cents / 1200.0;
    let dt = 1.0 / sr as f64;
    for (idx, e) in notes.iter().enumerate() {
        let (start, len) = note_span(e, sr, total);
        let f0 = e.frequency_hz();
        let mut rng = (timbre.noise_level > 0.0).then(|| ChaCha8Rng::seed_from_u64(timbre.seed.wrapping_mul(1_000_003).wrapping_add(idx as u64)));
        let mut noise_state = 0.0;
        let mut phase = 0.0;
        for n in 0..len {
            let t = n as f64 * dt;
            let base = if depth == 0.0 {
                2.0 * PI * f0 * t
            } else {
                let p = phase;
                phase += 2.0 * PI * f0 * 2f64.powf(depth * (2.0 * PI * timbre.vibrato_rate_hz * t).sin()) * dt;
                p
            };
            let mut v = 0.0;
            for (k, amp) in timbre.harmonic_amps.iter().enumerate() {
                let harmonic = (k + 1) as f64;
                if harmonic * f0 >= nyquist {
                    break;
                }
                v += amp * (harmonic * base).sin();
            }
            if let Some(rng) = rng.as_mut() {
                noise_state = 0.8 * noise_state + 0.2 * rng.gen_range(-1.0..1.0);
                v += timbre.noise_level * noise_state * 5.0;
            }
            out[start + n] += e.velocity * envelope(n, len, attack, release) * v;
        }
    }
    let w = Waveform::new(out, sr)?;
    if w.peak() == 0.0 {
        return Ok(w);
    }
    normalize_peak(&w, RENDER_PEAK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::parse_score;
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;

    fn spectrum(w: &Waveform) -> Vec<f64> {
        let mut buf: Vec<Complex64> = w.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::<f64>::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf[..buf.len() / 2].iter().map(|c| c.norm()).collect()
    }

    #[test]
    fn blueprint_partials() {
        let notes = parse_score("0 1000 69").unwrap();
        let one = render_blueprint(&notes, 16000, 1).unwrap();
        assert!((one.peak() - 0.9).abs() < 1e-9);
        let s = spectrum(&one);
        let peak = (1..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(peak, 440); // 1 Hz bins
        let six = spectrum(&render_blueprint(&notes, 16000, 6).unwrap());
        let mut top: Vec<usize> = (1..six.len()).collect();
        top.sort_by(|&a, &b| six[b].total_cmp(&six[a]));
        let mut top6: Vec<usize> = top[..6].to_vec();
        top6.sort();
        assert_eq!(top6, vec![440, 880, 1320, 1760, 2200, 2640]);
    }

    #[test]
    fn silent_gap() {
        let w = render_blueprint(&parse_score("0 300 60\n600 300 64").unwrap(), 16000, 6).unwrap();
        let gap = w.slice(16000 * 310 / 1000, 16000 * 280 / 1000);
        assert!(gap.rms() < 1e-3);
    }

    #[test]
    fn degenerate_timbre_is_the_blueprint() {
        let notes = parse_score("0 400 57\n450 300 64 0.7").unwrap();
        let timbre = TimbreConfig {
            harmonic_amps: vec![1.0],
            vibrato_rate_hz: 5.0,
            vibrato_depth_cents: 0.0,
            attack_ms: BLUEPRINT_RAMP_MS,
            release_ms: BLUEPRINT_RAMP_MS,
            noise_level: 0.0,
            seed: 3,
        };
        let a = render_instrument(&notes, &timbre, 16000).unwrap();
        let b = render_blueprint(&notes, 16000, 1).unwrap();
        let diff = a.mix(&b.scaled(-1.0)).unwrap();
        assert!(diff.rms() < 1e-6);
    }

    #[test]
    fn deterministic_and_validated() {
        let notes = parse_score("0 300 60\n300 300 67").unwrap();
        let t = TimbreConfig::default();
        assert_eq!(render_instrument(&notes, &t, 8000).unwrap(), render_instrument(&notes, &t, 8000).unwrap());
        assert!(render_instrument(&[], &t, 8000).is_err());
        assert!(render_instrument(&notes, &TimbreConfig { harmonic_amps: vec![], ..t.clone() }, 8000).is_err());
        assert_ne!(TimbreConfig::random(1), TimbreConfig::random(2));
    }

    #[test]
    fn vibrato_rate_is_visible_in_instantaneous_frequency() {
        let sr = 16000;
        let notes = parse_score("0 2000 69").unwrap();
        let timbre = TimbreConfig {
            harmonic_amps: vec![1.0],
            vibrato_rate_hz: 5.0,
            vibrato_depth_cents: 50.0,
            attack_ms: 0.0,
            release_ms: 0.0,
            noise_level: 0.0,
            seed: 0,
        };
        let w = render_instrument(&notes, &timbre, sr).unwrap();
        // upward zero crossings with linear interpolation -> period-wise frequency
        let x = w.samples();
        let mut crossings = Vec::new();
        for i in 1..x.len() {
            if x[i - 1] < 0.0 && x[i] >= 0.0 {
                crossings.push(i as f64 - 1.0 + x[i - 1] / (x[i - 1] - x[i]));
            }
        }
        let freqs: Vec<(f64, f64)> = crossings
            .windows(2)
            .map(|c| ((c[0] + c[1]) / 2.0 / sr as f64, sr as f64 / (c[1] - c[0])))
            .collect();
        // fit the dominant oscillation rate by scanning candidate rates
        let mean = freqs.iter().map(|f| f.1).sum::<f64>() / freqs.len() as f64;
        let power = |rate: f64| {
            let (mut s, mut c) = (0.0, 0.0);
            for (t, f) in &freqs {
                s += (f - mean) * (2.0 * PI * rate * t).sin();
                c += (f - mean) * (2.0 * PI * rate * t).cos();
            }
            s * s + c * c
        };
        let best = (20..=200).map(|k| k as f64 * 0.05).max_by(|a, b| power(*a).total_cmp(&power(*b))).unwrap();
        assert!((best - 5.0).abs() <= 0.5, "{best}");
    }
}

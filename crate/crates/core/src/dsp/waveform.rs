use crate::error::{Error, Result};

/// Mono audio signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be at least 1 Hz".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate_hz: sample_rate_hz.max(1) }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Copy truncated or zero-padded to `len` samples.
    pub fn with_len(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self { samples, sample_rate_hz: self.sample_rate_hz }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let mut samples: Vec<f64> = self.samples.iter().skip(start).take(len).copied().collect();
        samples.resize(len, 0.0);
        Self { samples, sample_rate_hz: self.sample_rate_hz }
    }

    /// Sample-wise sum; the result takes the longer length.
    pub fn mix(&self, other: &Waveform) -> Result<Self> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::Contract(format!(
                "cannot mix {} Hz with {} Hz",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        let n = self.len().max(other.len());
        let samples = (0..n)
            .map(|i| self.samples.get(i).unwrap_or(&0.0) + other.samples.get(i).unwrap_or(&0.0))
            .collect();
        Ok(Self { samples, sample_rate_hz: self.sample_rate_hz })
    }
}

/// Scales `w` so its largest absolute sample equals `peak`.
pub fn normalize_peak(w: &Waveform, peak: f64) -> Result<Waveform> {
    if !(peak > 0.0 && peak <= 1.0) {
        return Err(Error::Config(format!("peak must be in (0, 1], got {peak}")));
    }
    let current = w.peak();
    if current == 0.0 {
        return Err(Error::DegenerateInput("cannot normalise an all-zero waveform".into()));
    }
    let gain = peak / current;
    let mut out = w.scaled(gain);
    // exact peak despite rounding in the gain
    if let Some(i) = out
        .samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
    {
        out.samples[i] = peak.copysign(out.samples[i]);
    }
    Ok(out)
}

/// Splits `w` into fixed-length chunks; the last one is zero-padded.
pub fn chunk(w: &Waveform, chunk_ms: f64, hop_ms: f64) -> Result<Vec<Waveform>> {
    if w.is_empty() {
        return Err(Error::DegenerateInput("cannot chunk an empty waveform".into()));
    }
    if !(chunk_ms > 0.0 && hop_ms > 0.0) || hop_ms > chunk_ms {
        return Err(Error::Config(format!(
            "need 0 < hop_ms <= chunk_ms, got chunk {chunk_ms} hop {hop_ms}"
        )));
    }
    let sr = w.sample_rate_hz as f64;
    let chunk_len = ((chunk_ms * sr / 1000.0).round() as usize).max(1);
    let hop_len = ((hop_ms * sr / 1000.0).round() as usize).max(1);
    let count = w.len().saturating_sub(chunk_len).div_ceil(hop_len) + 1;
    Ok((0..count).map(|i| w.slice(i * hop_len, chunk_len)).collect())
}

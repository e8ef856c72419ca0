use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub fft_size: usize,
    pub window_length: usize,
    pub hop: usize,
    #[serde(default)]
    pub window_kind: WindowKind,
}

impl StftParams {
    pub fn new(fft_size: usize, window_length: usize, hop: usize) -> Result<Self> {
        let p = Self { fft_size, window_length, hop, window_kind: WindowKind::Hann };
        p.validate()?;
        Ok(p)
    }

    /// Hop 49, window 640, FFT 1024: the reference analysis settings. Not
    /// overlap-add invertible.
    pub fn reference() -> Self {
        Self { fft_size: 1024, window_length: 640, hop: 49, window_kind: WindowKind::Hann }
    }

    /// Settings whose frames exactly tile `chunk_samples` into `width` columns:
    /// hop = ceil(chunk / width), window = 2 * hop, FFT = next power of two.
    pub fn for_image(chunk_samples: usize, width: usize) -> Result<Self> {
        if chunk_samples == 0 || width == 0 {
            return Err(Error::Config("chunk length and image width must be positive".into()));
        }
        let hop = chunk_samples.div_ceil(width).max(1);
        let window_length = 2 * hop;
        Self::new(window_length.next_power_of_two(), window_length, hop)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.window_length == 0 || self.hop == 0 {
            return Err(Error::Config("STFT sizes must be positive".into()));
        }
        if self.window_length > self.fft_size {
            return Err(Error::Config(format!(
                "window length {} exceeds FFT size {}",
                self.window_length, self.fft_size
            )));
        }
        if self.hop > self.window_length {
            return Err(Error::Config(format!(
                "hop {} exceeds window length {}",
                self.hop, self.window_length
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window_kind {
            // periodic Hann
            WindowKind::Hann => (0..self.window_length)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / self.window_length as f64).cos())
                .collect(),
        }
    }

    /// Relative spread `(max - min) / mean` of the overlapped window sum in steady state.
    pub fn cola_deviation(&self) -> f64 {
        let w = self.window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / mean
    }

    pub fn check_cola(&self) -> Result<()> {
        self.validate()?;
        let dev = self.cola_deviation();
        if dev > 1e-6 {
            return Err(Error::Config(format!(
                "window {} / hop {} violates constant overlap-add (deviation {dev:.3e})",
                self.window_length, self.hop
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Mel,
}

/// Time-frequency magnitudes stored frame-major (`frames x bins`).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    phases: Option<Vec<f64>>,
    frames: usize,
    bins: usize,
    pub scale: Scale,
    pub params: StftParams,
    pub sample_rate_hz: u32,
    pub mel_bins: Option<usize>,
}

impl Spectrogram {
    pub fn new(
        magnitudes: Vec<f64>,
        frames: usize,
        bins: usize,
        scale: Scale,
        params: StftParams,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if magnitudes.len() != frames * bins {
            return Err(Error::Contract(format!(
                "{} magnitudes for {frames} frames x {bins} bins",
                magnitudes.len()
            )));
        }
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Contract("magnitudes must be finite and non-negative".into()));
        }
        match scale {
            Scale::Linear if bins != params.bins() => {
                return Err(Error::Contract(format!(
                    "linear spectrogram needs {} bins, got {bins}",
                    params.bins()
                )))
            }
            _ => {}
        }
        Ok(Self {
            magnitudes,
            phases: None,
            frames,
            bins,
            scale,
            params,
            sample_rate_hz,
            mel_bins: (scale == Scale::Mel).then_some(bins),
        })
    }

    pub fn with_phases(mut self, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != self.magnitudes.len() {
            return Err(Error::Contract("phase grid shape differs from magnitudes".into()));
        }
        self.phases = Some(phases);
        Ok(self)
    }

    pub fn without_phases(mut self) -> Self {
        self.phases = None;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn phases(&self) -> Option<&[f64]> {
        self.phases.as_deref()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.bins..(t + 1) * self.bins]
    }

    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.magnitudes[frame * self.bins + bin]
    }

    /// Same metadata, new magnitudes (phases dropped).
    pub fn with_magnitudes(&self, magnitudes: Vec<f64>, frames: usize, bins: usize, scale: Scale) -> Result<Self> {
        Self::new(magnitudes, frames, bins, scale, self.params, self.sample_rate_hz)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        let mut s = self.clone();
        s.magnitudes.iter_mut().for_each(|m| *m *= gain);
        s
    }
}

fn real_fft_frame(buf: &mut [Complex64], fft: &dyn rustfft::Fft<f64>) {
    fft.process(buf);
}

/// Short-time Fourier transform without centring: frame `t` covers samples
/// `[t * hop, t * hop + window_length)`.
pub fn stft(w: &Waveform, p: &StftParams) -> Result<Spectrogram> {
    p.validate()?;
    if w.len() < p.window_length {
        return Err(Error::DegenerateInput(format!(
            "{} samples is shorter than one {}-sample window",
            w.len(),
            p.window_length
        )));
    }
    let frames = 1 + (w.len() - p.window_length) / p.hop;
    let bins = p.bins();
    let window = p.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
    let mut mags = Vec::with_capacity(frames * bins);
    let mut phases = Vec::with_capacity(frames * bins);
    let x = w.samples();
    for t in 0..frames {
        let start = t * p.hop;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (n, (b, wv)) in buf.iter_mut().zip(&window).enumerate() {
            b.re = x[start + n] * wv;
        }
        real_fft_frame(&mut buf, fft.as_ref());
        for c in &buf[..bins] {
            mags.push(c.norm());
            phases.push(c.arg());
        }
    }
    Spectrogram::new(mags, frames, bins, Scale::Linear, *p, w.sample_rate_hz())?.with_phases(phases)
}

/// Overlap-add inverse with window-squared normalisation. Output length is
/// `(frames - 1) * hop + window_length`.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    if s.scale != Scale::Linear {
        return Err(Error::Contract("istft needs a linear-scale spectrogram".into()));
    }
    let phases = s
        .phases()
        .ok_or_else(|| Error::Contract("istft needs phases".into()))?;
    let p = s.params;
    p.check_cola()?;
    let window = p.window();
    let len = (s.frames() - 1) * p.hop + p.window_length;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(p.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
    let bins = s.bins();
    let scale = 1.0 / p.fft_size as f64;
    for t in 0..s.frames() {
        let m = s.frame(t);
        let ph = &phases[t * bins..(t + 1) * bins];
        for k in 0..bins {
            buf[k] = Complex64::from_polar(m[k], ph[k]);
        }
        for k in bins..p.fft_size {
            buf[k] = buf[p.fft_size - k].conj();
        }
        // DC and Nyquist are real for a real signal
        buf[0].im = 0.0;
        if p.fft_size % 2 == 0 {
            buf[p.fft_size / 2].im = 0.0;
        }
        ifft.process(&mut buf);
        let start = t * p.hop;
        for (n, wv) in window.iter().enumerate() {
            out[start + n] += buf[n].re * scale * wv;
            norm[start + n] += wv * wv;
        }
    }
    let floor = 1e-10;
    for (o, nrm) in out.iter_mut().zip(&norm) {
        *o = if *nrm > floor { *o / nrm } else { 0.0 };
    }
    Waveform::new(out, s.sample_rate_hz)
}

use super::{istft, stft, Spectrogram, StftParams, Waveform};
use crate::error::{Error, Result};

/// Zero-padding that makes an `n`-sample signal yield exactly `frames` STFT
/// frames, with each frame centred on its share of the signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub samples: usize,
    pub frames: usize,
    pub pad_left: usize,
    pub padded_len: usize,
}

impl FrameLayout {
    /// Layout with `ceil(samples / hop)` frames.
    pub fn covering(samples: usize, p: &StftParams) -> Result<Self> {
        Self::with_frames(samples, samples.div_ceil(p.hop).max(1), p)
    }

    pub fn with_frames(samples: usize, frames: usize, p: &StftParams) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Config("frame count must be positive".into()));
        }
        if frames * p.hop < samples {
            return Err(Error::Config(format!(
                "{frames} frames of hop {} cannot cover {samples} samples",
                p.hop
            )));
        }
        let padded_len = (frames - 1) * p.hop + p.window_length;
        let pad_left = (p.window_length - p.hop) / 2;
        Ok(Self { samples, frames, pad_left, padded_len })
    }

    pub fn pad(&self, w: &Waveform) -> Waveform {
        let mut s = vec![0.0; self.padded_len];
        let n = w.len().min(self.samples);
        s[self.pad_left..self.pad_left + n].copy_from_slice(&w.samples()[..n]);
        Waveform::new(s, w.sample_rate_hz()).expect("finite input stays finite")
    }

    pub fn unpad(&self, w: &Waveform) -> Waveform {
        w.slice(self.pad_left, self.samples)
    }

    pub fn analyse(&self, w: &Waveform, p: &StftParams) -> Result<Spectrogram> {
        let s = stft(&self.pad(w), p)?;
        debug_assert_eq!(s.frames(), self.frames);
        Ok(s)
    }

    pub fn synthesise(&self, s: &Spectrogram) -> Result<Waveform> {
        Ok(self.unpad(&istft(s)?))
    }
}

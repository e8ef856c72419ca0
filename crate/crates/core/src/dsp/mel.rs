use nalgebra::DMatrix;

use super::{Scale, Spectrogram};
use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank on the mel scale (rows normalised to unit sum), with a precomputed pseudo-inverse
/// for mapping mel frames back to linear bins.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    mel_bins: usize,
    linear_bins: usize,
    /// `mel_bins x linear_bins`, row-major.
    weights: Vec<f64>,
    /// `linear_bins x mel_bins`, row-major.
    pinv: Vec<f64>,
    /// `mel_bins + 2` band edges in Hz; band `m` spans `edges[m]..edges[m + 2]`.
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(mel_bins: usize, fft_size: usize, sample_rate_hz: u32, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if mel_bins == 0 || fft_size < 2 {
            return Err(Error::Config("mel filterbank needs at least one band and an FFT of 2+".into()));
        }
        if !(0.0..nyquist).contains(&fmin) || fmax <= fmin || fmax > nyquist + 1e-9 {
            return Err(Error::Config(format!(
                "mel range [{fmin}, {fmax}] Hz must lie inside [0, {nyquist}]"
            )));
        }
        let linear_bins = fft_size / 2 + 1;
        let bin_hz = sample_rate_hz as f64 / fft_size as f64;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let mut weights = vec![0.0; mel_bins * linear_bins];
        for m in 0..mel_bins {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * linear_bins..(m + 1) * linear_bins];
            for (k, wgt) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *wgt = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
            }
            // bands narrower than one bin fall back to the nearest bin
            if row.iter().all(|&v| v == 0.0) {
                let k = ((c / bin_hz).round() as usize).min(linear_bins - 1);
                row[k] = 1.0;
            }
            // unit area: a band reports the weighted mean magnitude it covers,
            // so wide upper bands do not outweigh narrow lower ones
            let area: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= area);
        }
        let mat = DMatrix::from_row_slice(mel_bins, linear_bins, &weights);
        let pinv_m = mat
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Numeric(format!("mel pseudo-inverse: {e}")))?;
        let mut pinv = vec![0.0; linear_bins * mel_bins];
        for i in 0..linear_bins {
            for j in 0..mel_bins {
                pinv[i * mel_bins + j] = pinv_m[(i, j)];
            }
        }
        Ok(Self { mel_bins, linear_bins, weights, pinv, edges_hz: edges })
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn linear_bins(&self) -> usize {
        self.linear_bins
    }

    pub fn centre_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    pub fn lower_edge_hz(&self, m: usize) -> f64 {
        self.edges_hz[m]
    }

    /// Band whose centre is nearest to `hz` on the mel axis.
    pub fn row_for_hz(&self, hz: f64) -> usize {
        let target = hz_to_mel(hz.max(0.0));
        (0..self.mel_bins)
            .min_by(|&a, &b| {
                (hz_to_mel(self.centre_hz(a)) - target)
                    .abs()
                    .total_cmp(&(hz_to_mel(self.centre_hz(b)) - target).abs())
            })
            .expect("at least one band")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply_frame(&self, linear: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.linear_bins)
            .map(|row| row.iter().zip(linear).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// Least-squares inverse clamped at zero.
    pub fn invert_frame(&self, mel: &[f64]) -> Vec<f64> {
        self.pinv
            .chunks(self.mel_bins)
            .map(|row| row.iter().zip(mel).map(|(w, x)| w * x).sum::<f64>().max(0.0))
            .collect()
    }
}

pub fn to_mel(s: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if s.scale != Scale::Linear || s.bins() != fb.linear_bins() {
        return Err(Error::Contract(format!(
            "filterbank expects {} linear bins, spectrogram has {} ({:?})",
            fb.linear_bins(),
            s.bins(),
            s.scale
        )));
    }
    let mut out = Vec::with_capacity(s.frames() * fb.mel_bins());
    for t in 0..s.frames() {
        out.extend(fb.apply_frame(s.frame(t)));
    }
    s.with_magnitudes(out, s.frames(), fb.mel_bins(), Scale::Mel)
}

pub fn from_mel(s: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if s.scale != Scale::Mel || s.bins() != fb.mel_bins() {
        return Err(Error::Contract(format!(
            "filterbank expects {} mel bins, spectrogram has {} ({:?})",
            fb.mel_bins(),
            s.bins(),
            s.scale
        )));
    }
    let mut out = Vec::with_capacity(s.frames() * fb.linear_bins());
    for t in 0..s.frames() {
        out.extend(fb.invert_frame(s.frame(t)));
    }
    s.with_magnitudes(out, s.frames(), fb.linear_bins(), Scale::Linear)
}

use serde::{Deserialize, Serialize};

use super::{
    from_mel, griffin_lim, to_mel, FrameLayout, ImageScale, MelFilterbank, Scale, SpectroImage,
    Spectrogram, StftParams, Waveform,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StftPreset {
    /// Hop derived from chunk length and image width so frames fill the image.
    Derived,
    /// Hop 49, window 640, FFT 1024.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StftChoice {
    Preset(StftPreset),
    Explicit(StftParams),
}

impl Default for StftChoice {
    fn default() -> Self {
        StftChoice::Preset(StftPreset::Derived)
    }
}

/// How audio chunks become fixed-size spectrogram images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub sample_rate_hz: u32,
    pub chunk_ms: f64,
    /// Image height (mel bands) and width (frames).
    pub image_size: usize,
    pub stft: StftChoice,
    pub fmin_hz: f64,
    /// `None` means the Nyquist frequency.
    pub fmax_hz: Option<f64>,
    pub db_floor: f64,
    pub db_ceiling: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16000,
            chunk_ms: 1550.0,
            image_size: 64,
            stft: StftChoice::default(),
            fmin_hz: 0.0,
            fmax_hz: None,
            db_floor: -80.0,
            db_ceiling: 60.0,
        }
    }
}

/// Resolved analysis chain: STFT settings, frame layout, mel filterbank and
/// image scaling for one configuration.
#[derive(Clone, Debug)]
pub struct Analysis {
    config: AnalysisConfig,
    params: StftParams,
    chunk_samples: usize,
    layout: FrameLayout,
    filterbank: MelFilterbank,
    scale: ImageScale,
}

impl Analysis {
    pub fn new(config: &AnalysisConfig) -> Result<Self> {
        if config.sample_rate_hz == 0 || !(config.chunk_ms > 0.0) || config.image_size == 0 {
            return Err(Error::Config("sample rate, chunk length and image size must be positive".into()));
        }
        let chunk_samples = (config.chunk_ms * config.sample_rate_hz as f64 / 1000.0).round() as usize;
        let params = match config.stft {
            StftChoice::Preset(StftPreset::Derived) => StftParams::for_image(chunk_samples, config.image_size)?,
            StftChoice::Preset(StftPreset::Reference) => StftParams::reference(),
            StftChoice::Explicit(p) => p,
        };
        params.validate()?;
        let layout = FrameLayout::with_frames(chunk_samples, config.image_size, &params)?;
        let nyquist = config.sample_rate_hz as f64 / 2.0;
        let filterbank = MelFilterbank::new(
            config.image_size,
            params.fft_size,
            config.sample_rate_hz,
            config.fmin_hz,
            config.fmax_hz.unwrap_or(nyquist),
        )?;
        let scale = ImageScale { db_floor: config.db_floor, db_ceiling: config.db_ceiling, ..ImageScale::default() };
        scale.validate()?;
        Ok(Self { config: config.clone(), params, chunk_samples, layout, filterbank, scale })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.config.sample_rate_hz
    }

    pub fn chunk_samples(&self) -> usize {
        self.chunk_samples
    }

    pub fn size(&self) -> usize {
        self.config.image_size
    }

    pub fn hop(&self) -> usize {
        self.params.hop
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn scale(&self) -> ImageScale {
        self.scale
    }

    /// Layout for an `n`-sample signal at `ceil(n / hop)` frames.
    pub fn layout_for(&self, samples: usize) -> Result<FrameLayout> {
        FrameLayout::covering(samples, &self.params)
    }

    /// Linear spectrogram of `w` under `layout`, with bins above `cutoff_hz` zeroed.
    pub fn linear(&self, w: &Waveform, layout: &FrameLayout, cutoff_hz: Option<f64>) -> Result<Spectrogram> {
        self.check_rate(w)?;
        let s = layout.analyse(w, &self.params)?;
        let Some(cutoff) = cutoff_hz else { return Ok(s) };
        let bin_hz = self.sample_rate_hz() as f64 / self.params.fft_size as f64;
        let mut mags = s.magnitudes().to_vec();
        for t in 0..s.frames() {
            for k in 0..s.bins() {
                if k as f64 * bin_hz > cutoff {
                    mags[t * s.bins() + k] = 0.0;
                }
            }
        }
        let phases = s.phases().map(<[f64]>::to_vec);
        let out = s.with_magnitudes(mags, s.frames(), s.bins(), Scale::Linear)?;
        match phases {
            Some(p) => out.with_phases(p),
            None => Ok(out),
        }
    }

    /// Mel image of `w` (any length) with one column per hop.
    pub fn mel_image(&self, w: &Waveform, cutoff_hz: Option<f64>) -> Result<SpectroImage> {
        let layout = if w.len() == self.chunk_samples { self.layout } else { self.layout_for(w.len())? };
        let lin = self.linear(w, &layout, cutoff_hz)?;
        let mel = to_mel(&lin, &self.filterbank)?;
        SpectroImage::from_spectrogram(&mel, self.size(), mel.frames(), self.scale)
    }

    /// Fixed-size image of one chunk; `w` is zero-padded or truncated to the chunk length.
    pub fn chunk_image(&self, w: &Waveform, cutoff_hz: Option<f64>) -> Result<SpectroImage> {
        self.mel_image(&w.with_len(self.chunk_samples), cutoff_hz)
    }

    /// Log image of a linear spectrogram (height = FFT bins).
    pub fn linear_image(&self, s: &Spectrogram) -> Result<SpectroImage> {
        SpectroImage::from_spectrogram(s, s.bins(), s.frames(), self.scale)
    }

    /// Undo the mel warp of a single-channel mel image (clamped pseudo-inverse).
    pub fn rescale_to_linear(&self, mel_img: &SpectroImage) -> Result<Spectrogram> {
        let mel = mel_img.to_spectrogram(Scale::Mel, self.params, self.sample_rate_hz())?;
        from_mel(&mel, &self.filterbank)
    }

    pub fn linear_from_image(&self, img: &SpectroImage) -> Result<Spectrogram> {
        img.to_spectrogram(Scale::Linear, self.params, self.sample_rate_hz())
    }

    /// Griffin-Lim reconstruction of `samples` samples from linear magnitudes.
    pub fn reconstruct(&self, linear: &Spectrogram, samples: usize, iterations: usize) -> Result<Waveform> {
        let layout = FrameLayout::with_frames(samples, linear.frames(), &self.params)?;
        Ok(layout.unpad(&griffin_lim(linear, iterations)?))
    }

    fn check_rate(&self, w: &Waveform) -> Result<()> {
        if w.sample_rate_hz() != self.sample_rate_hz() {
            return Err(Error::Contract(format!(
                "audio at {} Hz, analysis configured for {} Hz",
                w.sample_rate_hz(),
                self.sample_rate_hz()
            )));
        }
        Ok(())
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scale, Spectrogram, StftParams};
use crate::error::{Error, Result};

/// Log compression settings mapping magnitudes to pixels in [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageScale {
    pub db_floor: f64,
    pub db_ceiling: f64,
    pub eps: f64,
}

impl Default for ImageScale {
    fn default() -> Self {
        Self { db_floor: -80.0, db_ceiling: 60.0, eps: 1e-5 }
    }
}

impl ImageScale {
    pub fn validate(&self) -> Result<()> {
        if !(self.db_floor.is_finite() && self.db_ceiling.is_finite()) || self.db_ceiling <= self.db_floor {
            return Err(Error::Config(format!(
                "dB range [{}, {}] is empty",
                self.db_floor, self.db_ceiling
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("log epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn magnitude_to_pixel(&self, m: f64) -> f64 {
        let db = (20.0 * (m + self.eps).log10()).clamp(self.db_floor, self.db_ceiling);
        2.0 * (db - self.db_floor) / (self.db_ceiling - self.db_floor) - 1.0
    }

    pub fn pixel_to_magnitude(&self, p: f64) -> f64 {
        let db = (p.clamp(-1.0, 1.0) + 1.0) / 2.0 * (self.db_ceiling - self.db_floor) + self.db_floor;
        (10f64.powf(db / 20.0) - self.eps).max(0.0)
    }
}

/// Fixed-size spectrogram image, pixels laid out `channels x height x width`
/// with height index 0 the lowest frequency row.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroImage {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    pub scale: ImageScale,
}

impl SpectroImage {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f64>, scale: ImageScale) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Contract("image dimensions must be positive".into()));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::Contract(format!(
                "{} pixels for a {channels}x{height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::Contract(format!("pixel {p} outside [-1, 1]")));
        }
        Ok(Self { channels, height, width, pixels, scale })
    }

    /// Image with every pixel at `value`, clamped to [-1, 1].
    pub fn filled(channels: usize, height: usize, width: usize, value: f64, scale: ImageScale) -> Self {
        Self { channels, height, width, pixels: vec![value.clamp(-1.0, 1.0); channels * height * width], scale }
    }

    /// Pixels are clamped into [-1, 1] (non-finite values become -1).
    pub fn from_clamped(channels: usize, height: usize, width: usize, pixels: Vec<f64>, scale: ImageScale) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|p| if p.is_finite() { p.clamp(-1.0, 1.0) } else { -1.0 })
            .collect();
        Self::new(channels, height, width, pixels, scale)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> f64 {
        self.pixels[(c * self.height + row) * self.width + col]
    }

    pub fn channel(&self, c: usize) -> Result<SpectroImage> {
        if c >= self.channels {
            return Err(Error::Contract(format!("channel {c} of a {}-channel image", self.channels)));
        }
        let n = self.height * self.width;
        Self::new(1, self.height, self.width, self.pixels[c * n..(c + 1) * n].to_vec(), self.scale)
    }

    /// Channel-wise concatenation.
    pub fn stack(parts: &[SpectroImage]) -> Result<SpectroImage> {
        let first = parts.first().ok_or_else(|| Error::Contract("nothing to stack".into()))?;
        let mut pixels = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (first.height, first.width) {
                return Err(Error::Contract(format!(
                    "cannot stack {}x{} with {}x{}",
                    p.height, p.width, first.height, first.width
                )));
            }
            pixels.extend_from_slice(&p.pixels);
            channels += p.channels;
        }
        Self::new(channels, first.height, first.width, pixels, first.scale)
    }

    /// Columns `[start, start + len)`; columns past the end are filled with -1.
    pub fn crop_columns(&self, start: usize, len: usize) -> SpectroImage {
        let mut pixels = vec![-1.0; self.channels * self.height * len];
        for c in 0..self.channels {
            for r in 0..self.height {
                for j in 0..len {
                    if start + j < self.width {
                        pixels[(c * self.height + r) * len + j] = self.at(c, r, start + j);
                    }
                }
            }
        }
        Self { channels: self.channels, height: self.height, width: len, pixels, scale: self.scale }
    }

    /// Rows `[start, start + len)`; rows past the top are filled with -1.
    pub fn crop_rows(&self, start: usize, len: usize) -> Result<SpectroImage> {
        if len == 0 {
            return Err(Error::Contract("empty row crop".into()));
        }
        let mut pixels = vec![-1.0; self.channels * len * self.width];
        for c in 0..self.channels {
            for r in 0..len.min(self.height.saturating_sub(start)) {
                let src = (c * self.height + start + r) * self.width;
                let dst = (c * len + r) * self.width;
                pixels[dst..dst + self.width].copy_from_slice(&self.pixels[src..src + self.width]);
            }
        }
        Self::new(self.channels, len, self.width, pixels, self.scale)
    }

    /// Map a single-channel image back to a magnitude spectrogram (`height` bins).
    pub fn to_spectrogram(&self, scale: Scale, params: StftParams, sample_rate_hz: u32) -> Result<Spectrogram> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "expected a single-channel image, got {} channels",
                self.channels
            )));
        }
        let mut mags = vec![0.0; self.width * self.height];
        for t in 0..self.width {
            for b in 0..self.height {
                mags[t * self.height + b] = self.scale.pixel_to_magnitude(self.at(0, b, t));
            }
        }
        Spectrogram::new(mags, self.width, self.height, scale, params, sample_rate_hz)
    }

    /// Log-compress a spectrogram with exactly `height` bins and `width` frames.
    pub fn from_spectrogram(s: &Spectrogram, height: usize, width: usize, scale: ImageScale) -> Result<Self> {
        scale.validate()?;
        if s.bins() != height || s.frames() != width {
            return Err(Error::Contract(format!(
                "spectrogram is {} frames x {} bins, image wants {width} x {height}",
                s.frames(),
                s.bins()
            )));
        }
        let mut pixels = vec![0.0; height * width];
        for t in 0..width {
            for b in 0..height {
                pixels[b * width + t] = scale.magnitude_to_pixel(s.at(t, b));
            }
        }
        Self::new(1, height, width, pixels, scale)
    }

    /// 8-bit grayscale rendering: channels stacked top to bottom, each with
    /// the lowest frequency row at the bottom.
    pub fn to_gray8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len());
        for c in 0..self.channels {
            for r in (0..self.height).rev() {
                for col in 0..self.width {
                    out.push(((self.at(c, r, col) + 1.0) / 2.0 * 255.0).round() as u8);
                }
            }
        }
        out
    }
}

pub fn write_png(img: &SpectroImage, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width as u32, (img.channels * img.height) as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    writer
        .write_image_data(&img.to_gray8())
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    Ok(())
}

/// Inverse of [`write_png`] up to 8-bit quantisation.
pub fn read_png(path: impl AsRef<Path>, channels: usize, scale: ImageScale) -> Result<SpectroImage> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "{:?} {:?} png; expected 8-bit grayscale",
            info.color_type, info.bit_depth
        )));
    }
    let (width, rows) = (info.width as usize, info.height as usize);
    if channels == 0 || rows % channels != 0 {
        return Err(Error::Format(format!("{rows} rows do not split into {channels} channels")));
    }
    let height = rows / channels;
    let mut pixels = vec![0.0; channels * height * width];
    for c in 0..channels {
        for r in 0..height {
            let src_row = c * height + (height - 1 - r);
            for col in 0..width {
                let v = buf[src_row * info.line_size + col] as f64;
                pixels[(c * height + r) * width + col] = v / 255.0 * 2.0 - 1.0;
            }
        }
    }
    SpectroImage::new(channels, height, width, pixels, scale)
}

use crate::error::{Error, Result};

/// μ-law companding onto `channels` classes with μ = channels - 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuLaw {
    channels: usize,
    mu: f64,
}

impl MuLaw {
    pub fn new(channels: usize) -> Result<Self> {
        if channels < 2 {
            return Err(Error::Config(format!("μ-law needs at least 2 channels, got {channels}")));
        }
        Ok(Self { channels, mu: (channels - 1) as f64 })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Input is clamped to [-1, 1]. Zero lands on the upper middle class (128 of 256).
    pub fn encode(&self, x: f64) -> usize {
        let x = x.clamp(-1.0, 1.0);
        let y = x.signum() * (self.mu * x.abs()).ln_1p() / self.mu.ln_1p();
        let y = if x == 0.0 { 0.0 } else { y };
        let c = ((y + 1.0) / 2.0 * self.mu + 0.5).floor();
        (c.max(0.0) as usize).min(self.channels - 1)
    }

    pub fn decode(&self, class: usize) -> f64 {
        let c = class.min(self.channels - 1) as f64;
        let y = 2.0 * c / self.mu - 1.0;
        y.signum() * ((1.0 + self.mu).powf(y.abs()) - 1.0) / self.mu
    }

    /// Round trip through the alphabet.
    pub fn quantize(&self, x: f64) -> f64 {
        self.decode(self.encode(x))
    }

    /// Width of the decoded interval between `class` and its upper neighbour.
    pub fn step_at(&self, class: usize) -> f64 {
        let c = class.min(self.channels - 2);
        self.decode(c + 1) - self.decode(c)
    }
}

pub fn mu_law_encode(x: f64, channels: usize) -> Result<usize> {
    Ok(MuLaw::new(channels)?.encode(x))
}

pub fn mu_law_decode(class: usize, channels: usize) -> Result<f64> {
    Ok(MuLaw::new(channels)?.decode(class))
}

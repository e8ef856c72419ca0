//! Audio signal processing: waveforms, companding, resampling, STFT, mel
//! scaling, Griffin-Lim and the spectrogram image representation.

mod analysis;
mod framing;
mod griffin_lim;
mod image;
mod mel;
mod mulaw;
mod resample;
mod stft;
mod wav;
mod waveform;

pub use analysis::{Analysis, AnalysisConfig, StftChoice, StftPreset};
pub use framing::FrameLayout;
pub use griffin_lim::{griffin_lim, griffin_lim_with_history, spectral_convergence};
pub use image::{read_png, write_png, ImageScale, SpectroImage};
pub use mel::{from_mel, hz_to_mel, mel_to_hz, to_mel, MelFilterbank};
pub use mulaw::{mu_law_decode, mu_law_encode, MuLaw};
pub use resample::{lowpass_brickwall, resample_cubic, resample_linear};
pub use stft::{istft, stft, Scale, Spectrogram, StftParams, WindowKind};
pub use wav::{read_wav, write_wav};
pub use waveform::{chunk, normalize_peak, Waveform};

/// Frequency in Hz of MIDI note `pitch` (A4 = 69 = 440 Hz).
pub fn midi_to_hz(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

pub fn hz_to_midi(hz: f64) -> f64 {
    69.0 + 12.0 * (hz / 440.0).log2()
}

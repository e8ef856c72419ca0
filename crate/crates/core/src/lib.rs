//! Spectrogram-to-spectrogram translation for instrumental audio tasks.
//!
//! - [`dsp`]: audio I/O, STFT, mel filterbanks, Griffin-Lim, spectrogram images
//! - [`datagen`]: deterministic synthetic paired datasets
//! - [`translator`]: U-Net generator, patch discriminator, adversarial training
//! - [`vocoder`]: conditioned autoregressive waveform model
//! - [`metrics`]: L1 %, SSIM, pitch statistics, SDR/SIR

pub mod datagen;
pub mod dsp;
mod error;
pub mod metrics;
pub mod translator;
pub mod vocoder;

pub use error::{Error, Result};
pub use spectrans_autodiff as autodiff;

/// Map `f` over `items` on up to `jobs` threads, preserving order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let per = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

use super::{istft, stft, Scale, Spectrogram, Waveform};
use crate::error::{Error, Result};

/// `||a - r||_F / ||r||_F` over magnitudes.
pub fn spectral_convergence(estimate: &Spectrogram, reference: &Spectrogram) -> Result<f64> {
    if estimate.frames() != reference.frames() || estimate.bins() != reference.bins() {
        return Err(Error::Contract(format!(
            "spectrogram shapes differ: {}x{} vs {}x{}",
            estimate.frames(),
            estimate.bins(),
            reference.frames(),
            reference.bins()
        )));
    }
    let den: f64 = reference.magnitudes().iter().map(|r| r * r).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::DegenerateInput("reference spectrogram is all zero".into()));
    }
    let num: f64 = estimate
        .magnitudes()
        .iter()
        .zip(reference.magnitudes())
        .map(|(a, r)| (a - r).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// Phase reconstruction by alternating projection, starting from zero phase.
pub fn griffin_lim(target: &Spectrogram, iterations: usize) -> Result<Waveform> {
    Ok(griffin_lim_with_history(target, iterations)?.0)
}

/// Like [`griffin_lim`], also returning the spectral convergence after each
/// iteration (entry 0 is the zero-phase starting point).
pub fn griffin_lim_with_history(target: &Spectrogram, iterations: usize) -> Result<(Waveform, Vec<f64>)> {
    if target.scale != Scale::Linear {
        return Err(Error::Contract("phase reconstruction needs a linear-scale spectrogram".into()));
    }
    target.params.check_cola()?;
    let zero = vec![0.0; target.magnitudes().len()];
    let target_mags = target.clone().without_phases();
    let mut current = target_mags.clone().with_phases(zero)?;
    let mut wave = istft(&current)?;
    let mut history = Vec::with_capacity(iterations + 1);
    let silent = target.magnitudes().iter().all(|&m| m == 0.0);
    let record = |est: &Spectrogram, history: &mut Vec<f64>| -> Result<()> {
        if !silent {
            history.push(spectral_convergence(est, target)?);
        }
        Ok(())
    };
    record(&stft(&wave, &target.params)?, &mut history)?;
    for _ in 0..iterations {
        let est = stft(&wave, &target.params)?;
        let phases = est.phases().expect("stft yields phases").to_vec();
        current = target_mags.clone().with_phases(phases)?;
        wave = istft(&current)?;
        record(&stft(&wave, &target.params)?, &mut history)?;
    }
    Ok((wave, history))
}

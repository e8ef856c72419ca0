use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

fn output_len(w: &Waveform, target_hz: u32) -> Result<usize> {
    if w.is_empty() {
        return Err(Error::DegenerateInput("cannot resample an empty waveform".into()));
    }
    if target_hz == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    Ok((w.len() as f64 * target_hz as f64 / w.sample_rate_hz() as f64).round() as usize)
}

/// Two-point interpolation; positions past the last sample hold its value.
pub fn resample_linear(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    let n = output_len(w, target_hz)?;
    let x = w.samples();
    let ratio = w.sample_rate_hz() as f64 / target_hz as f64;
    let out = (0..n)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            if k + 1 >= x.len() {
                return x[x.len() - 1];
            }
            let frac = pos - k as f64;
            x[k] * (1.0 - frac) + x[k + 1] * frac
        })
        .collect();
    Waveform::new(out, target_hz)
}

fn mirror(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = k.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Coefficients of the cubic B-spline that interpolates `s` (mirror boundary).
fn bspline_coefficients(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    if n == 1 {
        return s.to_vec();
    }
    let z = 3f64.sqrt() - 2.0;
    let mut c = vec![0.0; n];
    // causal initialisation, truncated where z^k is negligible
    let horizon = ((1e-12f64).ln() / z.abs().ln()).ceil() as usize;
    let mut zk = 1.0;
    let mut acc = 0.0;
    for k in 0..horizon.min(2 * n) {
        acc += zk * s[mirror(k as isize, n)];
        zk *= z;
    }
    c[0] = acc;
    for k in 1..n {
        c[k] = s[k] + z * c[k - 1];
    }
    c[n - 1] = z / (z * z - 1.0) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
    c.iter_mut().for_each(|v| *v *= 6.0);
    c
}

fn bspline3(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + a * a * a / 2.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

/// Interpolating uniform cubic B-spline evaluated at the new sample times.
pub fn resample_cubic(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    let n = output_len(w, target_hz)?;
    let c = bspline_coefficients(w.samples());
    let ratio = w.sample_rate_hz() as f64 / target_hz as f64;
    let last = (w.len() - 1) as f64;
    let out = (0..n)
        .map(|i| {
            let pos = (i as f64 * ratio).min(last);
            let k0 = pos.floor() as isize;
            (k0 - 1..=k0 + 2)
                .map(|k| c[mirror(k, c.len())] * bspline3(pos - k as f64))
                .sum()
        })
        .collect();
    Waveform::new(out, target_hz)
}

/// Zero every DFT component above `cutoff_hz` (whole-signal brick-wall filter).
pub fn lowpass_brickwall(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let n = w.len();
    if n == 0 {
        return Ok(w.clone());
    }
    let mut buf: Vec<Complex64> = w.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let sr = w.sample_rate_hz() as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sr / n as f64;
        if f > cutoff_hz {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Waveform::new(buf.iter().map(|c| c.re / n as f64).collect(), w.sample_rate_hz())
}

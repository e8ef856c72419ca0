use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Reported in place of ±∞ dB.
pub const DB_SENTINEL: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BssRatios {
    pub sdr_db: f64,
    pub sir_db: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

fn ratio_db(num: f64, den: f64, scale: f64) -> f64 {
    let tiny = 1e-24 * scale;
    if num <= tiny {
        -DB_SENTINEL
    } else if den <= tiny {
        DB_SENTINEL
    } else {
        (10.0 * (num / den).log10()).clamp(-DB_SENTINEL, DB_SENTINEL)
    }
}

/// Projection of `x` onto the span of `basis` (least squares via the Gram matrix).
fn project(x: &[f64], basis: &[&[f64]]) -> Result<Vec<f64>> {
    let k = basis.len();
    let gram = DMatrix::from_fn(k, k, |i, j| dot(basis[i], basis[j]));
    let rhs = DVector::from_fn(k, |i, _| dot(basis[i], x));
    let eps = 1e-12 * gram.diagonal().max();
    let coeffs = gram
        .pseudo_inverse(eps)
        .map_err(|e| Error::Numeric(format!("projection: {e}")))?
        * rhs;
    let mut out = vec![0.0; x.len()];
    for (c, b) in coeffs.iter().zip(basis) {
        for (o, v) in out.iter_mut().zip(b.iter()) {
            *o += c * v;
        }
    }
    Ok(out)
}

/// Decompose `estimate` into target, interference and artefact parts by
/// time-invariant orthogonal projections and return SDR / SIR in dB.
pub fn bss_ratios(estimate: &Waveform, target: &Waveform, interferences: &[Waveform]) -> Result<BssRatios> {
    let n = estimate.len();
    if target.len() != n || interferences.iter().any(|i| i.len() != n) {
        return Err(Error::Contract("estimate, target and interferences must have equal lengths".into()));
    }
    let e = estimate.samples();
    let t = target.samples();
    let tt = energy(t);
    if tt == 0.0 {
        return Err(Error::DegenerateInput("target is identically zero".into()));
    }
    let g = dot(e, t) / tt;
    let s_target: Vec<f64> = t.iter().map(|v| g * v).collect();
    let mut basis: Vec<&[f64]> = vec![t];
    basis.extend(interferences.iter().map(|w| w.samples()));
    let p_all = project(e, &basis)?;
    let e_interf: Vec<f64> = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
    let e_total: Vec<f64> = e.iter().zip(&s_target).map(|(x, s)| x - s).collect();
    let scale = energy(e).max(f64::MIN_POSITIVE);
    let st = energy(&s_target);
    Ok(BssRatios {
        sdr_db: ratio_db(st, energy(&e_total), scale),
        sir_db: ratio_db(st, energy(&e_interf), scale),
    })
}

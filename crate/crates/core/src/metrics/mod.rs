//! Evaluation measures: normalised L1 %, SSIM, pitch statistics and SDR/SIR.

mod bss;
mod pitch;

use serde::{Deserialize, Serialize};

use crate::dsp::SpectroImage;
use crate::error::{Error, Result};

pub use bss::{bss_ratios, BssRatios, DB_SENTINEL};
pub use pitch::{
    decode_pitch, extract_notes, pitch_stats, BinNote, PitchReport, VOICING_THRESHOLD,
};

/// Width of the pixel value range.
pub const PIXEL_RANGE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub l1_percent: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pitch: Option<PitchReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bss: Option<BssRatios>,
}

impl EvalReport {
    /// Image measures for a (prediction, truth) pair.
    pub fn for_images(pred: &SpectroImage, truth: &SpectroImage) -> Result<Self> {
        Ok(Self { l1_percent: l1_percent(pred, truth)?, ssim: ssim_default(pred, truth)?, pitch: None, bss: None })
    }

    /// Mean of every field over `reports`; pitch tallies are summed, with
    /// precision recomputed from the sums and frame errors averaged.
    pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
        if reports.is_empty() {
            return Err(Error::DegenerateInput("no reports to aggregate".into()));
        }
        let n = reports.len() as f64;
        let pitches: Vec<&PitchReport> = reports.iter().filter_map(|r| r.pitch.as_ref()).collect();
        let bss: Vec<&BssRatios> = reports.iter().filter_map(|r| r.bss.as_ref()).collect();
        Ok(EvalReport {
            l1_percent: reports.iter().map(|r| r.l1_percent).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            pitch: (!pitches.is_empty()).then(|| PitchReport::combine(&pitches)),
            bss: (!bss.is_empty()).then(|| BssRatios {
                sdr_db: bss.iter().map(|b| b.sdr_db).sum::<f64>() / bss.len() as f64,
                sir_db: bss.iter().map(|b| b.sir_db).sum::<f64>() / bss.len() as f64,
            }),
        })
    }
}

fn same_shape(a: &SpectroImage, b: &SpectroImage) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!("image shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean absolute pixel difference as a percentage of the pixel range.
pub fn l1_percent(a: &SpectroImage, b: &SpectroImage) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.pixels().len() as f64 / PIXEL_RANGE * 100.0)
}

pub fn ssim_default(a: &SpectroImage, b: &SpectroImage) -> Result<f64> {
    let window = 8.min(a.height()).min(a.width());
    ssim(a, b, window, 0.01, 0.03)
}

/// Mean structural similarity over all `window x window` box windows
/// (stride 1) of every channel, with population statistics.
pub fn ssim(a: &SpectroImage, b: &SpectroImage, window: usize, k1: f64, k2: f64) -> Result<f64> {
    same_shape(a, b)?;
    let (channels, h, w) = a.shape();
    if window == 0 || window > h.min(w) {
        return Err(Error::Contract(format!("SSIM window {window} does not fit a {h}x{w} image")));
    }
    let c1 = (k1 * PIXEL_RANGE).powi(2);
    let c2 = (k2 * PIXEL_RANGE).powi(2);
    let n = (window * window) as f64;
    // summed-area tables of x, y, x², y², xy per channel
    let stride = w + 1;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..channels {
        let mut tables = vec![[0.0f64; 5]; (h + 1) * stride];
        for r in 0..h {
            for col in 0..w {
                let x = a.at(c, r, col);
                let y = b.at(c, r, col);
                let vals = [x, y, x * x, y * y, x * y];
                for k in 0..5 {
                    tables[(r + 1) * stride + col + 1][k] = vals[k]
                        + tables[r * stride + col + 1][k]
                        + tables[(r + 1) * stride + col][k]
                        - tables[r * stride + col][k];
                }
            }
        }
        for r in 0..=h - window {
            for col in 0..=w - window {
                let mut s = [0.0; 5];
                for (k, v) in s.iter_mut().enumerate() {
                    *v = tables[(r + window) * stride + col + window][k]
                        - tables[r * stride + col + window][k]
                        - tables[(r + window) * stride + col][k]
                        + tables[r * stride + col][k];
                }
                let (mx, my) = (s[0] / n, s[1] / n);
                let vx = (s[2] / n - mx * mx).max(0.0);
                let vy = (s[3] / n - my * my).max(0.0);
                let cov = s[4] / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ImageScale;

    fn img(px: Vec<f64>, h: usize, w: usize) -> SpectroImage {
        SpectroImage::new(1, h, w, px, ImageScale::default()).unwrap()
    }

    #[test]
    fn l1_examples() {
        let a = img(vec![1.0; 16], 4, 4);
        let b = img(vec![-1.0; 16], 4, 4);
        assert_eq!(l1_percent(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_percent(&a, &b).unwrap(), 100.0);
        assert!(l1_percent(&a, &img(vec![0.0; 12], 3, 4)).is_err());
    }

    #[test]
    fn ssim_identity_and_constant_shift() {
        let x = img((0..64).map(|i| ((i * 13) % 17) as f64 / 8.5 - 1.0).collect(), 8, 8);
        assert!((ssim_default(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let a = img(vec![-0.25; 64], 8, 8);
        let b = img(vec![0.25; 64], 8, 8);
        // constant windows: contrast/structure term is 1, luminance term remains
        let c1 = (0.01f64 * 2.0).powi(2);
        let expected = (2.0 * -0.25 * 0.25 + c1) / (0.0625 + 0.0625 + c1);
        assert!((ssim_default(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!(ssim(&a, &b, 9, 0.01, 0.03).is_err());
    }

    #[test]
    fn aggregate_means() {
        let r1 = EvalReport { l1_percent: 2.0, ssim: 0.5, pitch: None, bss: None };
        let r2 = EvalReport { l1_percent: 4.0, ssim: 1.0, pitch: None, bss: Some(BssRatios { sdr_db: 3.0, sir_db: 6.0 }) };
        let m = EvalReport::aggregate(&[r1, r2]).unwrap();
        assert_eq!((m.l1_percent, m.ssim), (3.0, 0.75));
        assert_eq!(m.bss.unwrap().sir_db, 6.0);
        let json = serde_json::to_value(&m).unwrap();
        assert!(json.get("pitch").is_none());
        assert!(EvalReport::aggregate(&[]).is_err());
    }
}

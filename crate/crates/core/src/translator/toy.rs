use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{ImageScale, SpectroImage};
use crate::error::{Error, Result};

/// Seeded single-channel image with one or two horizontal bands of
/// varying brightness on a -1 background; a small stand-in for a note roll.
pub fn toy_band_image(size: usize, seed: u64) -> SpectroImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![-1.0f64; size * size];
    let bands = rng.gen_range(1..=2);
    for _ in 0..bands {
        let row = rng.gen_range(0..size);
        let start = rng.gen_range(0..size / 2);
        let end = rng.gen_range(start + size / 4..=size);
        let level: f64 = rng.gen_range(0.2..0.9);
        for col in start..end {
            let fade = 1.0 - (col - start) as f64 / (end - start) as f64 * 0.5;
            pixels[row * size + col] = pixels[row * size + col].max(level * fade);
        }
    }
    SpectroImage::new(1, size, size, pixels, ImageScale::default()).expect("toy pixels lie in [-1, 1]")
}

/// Move every row up by `shift` (negative: down), filling with -1.
pub fn shift_rows(img: &SpectroImage, shift: isize) -> Result<SpectroImage> {
    let (c, h, w) = img.shape();
    if shift.unsigned_abs() >= h {
        return Err(Error::Range(format!("row shift {shift} exceeds height {h}")));
    }
    let mut pixels = vec![-1.0; c * h * w];
    for ch in 0..c {
        for r in 0..h {
            let dst = r as isize + shift;
            if (0..h as isize).contains(&dst) {
                for col in 0..w {
                    pixels[(ch * h + dst as usize) * w + col] = img.at(ch, r, col);
                }
            }
        }
    }
    SpectroImage::new(c, h, w, pixels, img.scale)
}

/// `n` seeded (image, image shifted by `shift` rows) pairs.
pub fn toy_shift_pairs(n: usize, size: usize, shift: isize, seed: u64) -> Result<Vec<(SpectroImage, SpectroImage)>> {
    (0..n)
        .map(|i| {
            let x = toy_band_image(size, seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
            let y = shift_rows(&x, shift)?;
            Ok((x, y))
        })
        .collect()
}

use super::Generator;
use crate::datagen::window_starts;
use crate::dsp::SpectroImage;
use crate::error::{Error, Result};
use crate::par_map;

/// How neighbouring windows are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blend {
    /// 50 % overlap, triangular crossfade weights.
    Crossfade,
    /// Abutting windows; the last window is aligned to the far edge and
    /// overwrites the region it shares with its neighbour.
    Abut,
}

/// Windows processed per generator call.
const TILE_BATCH: usize = 8;

fn starts(len: usize, size: usize, blend: Blend) -> Vec<usize> {
    match blend {
        Blend::Crossfade => window_starts(len, size),
        Blend::Abut => {
            if len <= size {
                return vec![0];
            }
            let mut s: Vec<usize> = (0..).map(|k| k * size).take_while(|s| s + size < len).collect();
            s.push(len - size);
            s
        }
    }
}

/// Triangular weight of position `i` inside a window of `size`; never zero.
fn tri(i: usize, size: usize) -> f64 {
    let x = i as f64 + 0.5;
    x.min(size as f64 - x)
}

fn crop(img: &SpectroImage, row: usize, col: usize, size: usize) -> Result<Vec<f64>> {
    Ok(img.crop_rows(row, size)?.crop_columns(col, size).into_pixels())
}

/// Translate a spectrogram image of any width: its height must equal the
/// generator's image size; the time axis is tiled with `image_size` windows.
pub fn translate(gen: &Generator, img: &SpectroImage, blend: Blend, jobs: usize) -> Result<SpectroImage> {
    if img.height() != gen.config.image_size {
        return Err(Error::Contract(format!(
            "image has {} bins, generator expects {}",
            img.height(),
            gen.config.image_size
        )));
    }
    translate_grid(gen, img, blend, jobs)
}

/// Translate an image of any height and width by tiling it with
/// `image_size` windows in both axes. Images smaller than a window are padded
/// with -1 and cropped back. A single window returns the generator output
/// unchanged.
pub fn translate_grid(gen: &Generator, img: &SpectroImage, blend: Blend, jobs: usize) -> Result<SpectroImage> {
    let cfg = &gen.config;
    if img.channels() != cfg.in_channels {
        return Err(Error::Contract(format!(
            "image has {} channels, generator expects {}",
            img.channels(),
            cfg.in_channels
        )));
    }
    let (h, w, size, out_c) = (img.height(), img.width(), cfg.image_size, cfg.out_channels);
    let rows = starts(h, size, blend);
    let cols = starts(w, size, blend);
    let windows: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
    let batches: Vec<&[(usize, usize)]> = windows.chunks(TILE_BATCH).collect();
    let outputs = par_map(&batches, jobs, |batch| -> Result<Vec<Vec<f64>>> {
        let inputs = batch.iter().map(|&(r, c)| crop(img, r, c, size)).collect::<Result<Vec<_>>>()?;
        gen.predict(&inputs)
    });
    let mut tiles = Vec::with_capacity(windows.len());
    for out in outputs {
        tiles.extend(out?);
    }

    if windows.len() == 1 {
        let full = SpectroImage::from_clamped(out_c, size, size, tiles.pop().expect("one tile"), img.scale)?;
        return full.crop_rows(0, h).map(|i| i.crop_columns(0, w));
    }

    let mut acc = vec![0.0; out_c * h * w];
    let mut weight = vec![0.0; h * w];
    for (&(r0, c0), tile) in windows.iter().zip(&tiles) {
        for i in 0..size.min(h - r0) {
            for j in 0..size.min(w - c0) {
                let wt = match blend {
                    Blend::Crossfade => tri(i, size) * tri(j, size),
                    Blend::Abut => 1.0,
                };
                let at = (r0 + i) * w + c0 + j;
                if blend == Blend::Abut {
                    weight[at] = wt;
                    for c in 0..out_c {
                        acc[c * h * w + at] = tile[(c * size + i) * size + j];
                    }
                } else {
                    weight[at] += wt;
                    for c in 0..out_c {
                        acc[c * h * w + at] += wt * tile[(c * size + i) * size + j];
                    }
                }
            }
        }
    }
    for c in 0..out_c {
        for (v, wt) in acc[c * h * w..(c + 1) * h * w].iter_mut().zip(&weight) {
            *v /= wt;
        }
    }
    SpectroImage::from_clamped(out_c, h, w, acc, img.scale)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format_score, parse_score, DatasetConfig, Pair, PairAudio, PairedDataset, Task};
use crate::dsp::{read_wav, write_png, write_wav, AnalysisConfig, ImageScale, SpectroImage, StftParams};
use crate::error::{Error, Result};
use crate::par_map;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInfo {
    pub input_channels: usize,
    pub target_channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    pub score: usize,
    pub chunk: usize,
    pub task: Task,
    pub input_png: String,
    pub target_png: String,
    pub input_f32: String,
    pub target_f32: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_wav: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_wav: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interference_wavs: Vec<String>,
}

/// On-disk description of a dataset; all paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: Task,
    pub seed: u64,
    pub generator: DatasetConfig,
    pub analysis: AnalysisConfig,
    pub stft: StftParams,
    pub image: ImageInfo,
    pub scale: ImageScale,
    pub scores: Vec<String>,
    pub pairs: Vec<PairEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn write_f32(img: &SpectroImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.pixels().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32(path: &Path, shape: (usize, usize, usize), scale: ImageScale) -> Result<SpectroImage> {
    let bytes = fs::read(path)?;
    let (c, h, w) = shape;
    if bytes.len() != 4 * c * h * w {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {} for {c}x{h}x{w}",
            path.display(),
            bytes.len(),
            4 * c * h * w
        )));
    }
    let pixels = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    SpectroImage::new(c, h, w, pixels, scale)
}

/// Write manifest, score texts, PNG previews, f32 planes and WAVs under `dir`.
pub fn save_dataset(d: &PairedDataset, dir: impl AsRef<Path>, stft: StftParams, jobs: usize) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("pairs"))?;
    fs::create_dir_all(dir.join("scores"))?;
    let mut score_files = Vec::with_capacity(d.scores.len());
    for (i, s) in d.scores.iter().enumerate() {
        let rel = format!("scores/s{i:04}.txt");
        fs::write(dir.join(&rel), format_score(s))?;
        score_files.push(rel);
    }
    let entries: Vec<Result<PairEntry>> = par_map(&d.pairs, jobs, |p| save_pair(p, dir));
    let pairs = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let (ic, h, w) = d.input_shape().unwrap_or((d.task.input_channels(), 0, 0));
    let scale = d.pairs.first().map(|p| p.input.scale).unwrap_or_default();
    let manifest = Manifest {
        task: d.task,
        seed: d.seed(),
        generator: d.config.clone(),
        analysis: d.analysis.clone(),
        stft,
        image: ImageInfo { input_channels: ic, target_channels: 1, height: h, width: w },
        scale,
        scores: score_files,
        pairs,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn save_pair(p: &Pair, dir: &Path) -> Result<PairEntry> {
    let rel = |suffix: &str| format!("pairs/{}_{suffix}", p.id);
    let mut e = PairEntry {
        id: p.id.clone(),
        score: p.score,
        chunk: p.chunk,
        task: p.task,
        input_png: rel("input.png"),
        target_png: rel("target.png"),
        input_f32: rel("input.f32"),
        target_f32: rel("target.f32"),
        input_wav: None,
        target_wav: None,
        interference_wavs: vec![],
    };
    write_png(&p.input, dir.join(&e.input_png))?;
    write_png(&p.target, dir.join(&e.target_png))?;
    write_f32(&p.input, &dir.join(&e.input_f32))?;
    write_f32(&p.target, &dir.join(&e.target_f32))?;
    if let Some(a) = &p.audio {
        let (iw, tw) = (rel("input.wav"), rel("target.wav"));
        write_wav(&a.input, dir.join(&iw))?;
        write_wav(&a.target, dir.join(&tw))?;
        for (k, s) in a.interferences.iter().enumerate() {
            let name = rel(&format!("interference{k}.wav"));
            write_wav(s, dir.join(&name))?;
            e.interference_wavs.push(name);
        }
        e.input_wav = Some(iw);
        e.target_wav = Some(tw);
    }
    Ok(e)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Load a dataset written by [`save_dataset`]; `path` is the directory or the
/// manifest file. Images come from the lossless f32 planes.
pub fn load_dataset(path: impl AsRef<Path>, with_audio: bool) -> Result<(PairedDataset, Manifest)> {
    let path = path.as_ref();
    let dir = manifest_dir(path);
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let m = Manifest::load(&manifest_path)?;
    let mut scores = Vec::with_capacity(m.scores.len());
    for rel in &m.scores {
        scores.push(parse_score(&fs::read_to_string(dir.join(rel))?)?);
    }
    let in_shape = (m.image.input_channels, m.image.height, m.image.width);
    let out_shape = (m.image.target_channels, m.image.height, m.image.width);
    let mut pairs = Vec::with_capacity(m.pairs.len());
    for e in &m.pairs {
        let audio = match (&e.input_wav, &e.target_wav, with_audio) {
            (Some(i), Some(t), true) => Some(PairAudio {
                input: read_wav(dir.join(i))?,
                target: read_wav(dir.join(t))?,
                interferences: e.interference_wavs.iter().map(|w| read_wav(dir.join(w))).collect::<Result<_>>()?,
            }),
            _ => None,
        };
        pairs.push(Pair {
            id: e.id.clone(),
            score: e.score,
            chunk: e.chunk,
            task: e.task,
            input: read_f32(&dir.join(&e.input_f32), in_shape, m.scale)?,
            target: read_f32(&dir.join(&e.target_f32), out_shape, m.scale)?,
            audio,
        });
    }
    let d = PairedDataset { task: m.task, config: m.generator.clone(), analysis: m.analysis.clone(), scores, pairs };
    d.check_shapes()?;
    Ok((d, m))
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{random_score, render_blueprint, render_instrument, NoteEvent, Rhythm, TimbreConfig, MAX_PITCH, MIN_PITCH};
use crate::dsp::{
    chunk, lowpass_brickwall, resample_cubic, resample_linear, Analysis, SpectroImage, Waveform,
};
use crate::error::{Error, Result};
use crate::par_map;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PitchTrack,
    SourceSeparate,
    SuperResolve,
    Synthesize,
    Joint,
    /// Rescaled-linear to true-linear image crops for the refinement stage.
    Restore,
}

impl Task {
    pub const JOINT_PARTS: [Task; 3] = [Task::PitchTrack, Task::SourceSeparate, Task::SuperResolve];

    pub fn input_channels(self) -> usize {
        if self == Task::Joint {
            3
        } else {
            1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::PitchTrack => "pitch_track",
            Task::SourceSeparate => "source_separate",
            Task::SuperResolve => "super_resolve",
            Task::Synthesize => "synthesize",
            Task::Joint => "joint",
            Task::Restore => "restore",
        }
    }

    pub fn parse(name: &str) -> Result<Task> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown task {name:?}")))
    }
}

/// Settings for synthetic dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub task: Task,
    pub seed: u64,
    pub scores: usize,
    pub notes_per_score: usize,
    pub pitch_lo: i32,
    pub pitch_hi: i32,
    pub rhythm: Rhythm,
    pub timbre: TimbreConfig,
    pub blueprint_partials: usize,
    /// Inclusive range of interfering voices per separation mixture.
    pub interferers: [usize; 2],
    /// Minimum pitch distance between the target range and interferer ranges.
    pub interferer_offset_semitones: i32,
    pub interference_gain: f64,
    pub low_rate_hz: u32,
    /// Hop between chunks; `None` means back-to-back chunks.
    pub chunk_hop_ms: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            task: Task::PitchTrack,
            seed: 1,
            scores: 8,
            notes_per_score: 5,
            pitch_lo: 55,
            pitch_hi: 79,
            rhythm: Rhythm::default(),
            timbre: TimbreConfig::default(),
            blueprint_partials: 6,
            interferers: [1, 4],
            interferer_offset_semitones: 7,
            interference_gain: 1.0,
            low_rate_hz: 4000,
            chunk_hop_ms: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scores == 0 || self.notes_per_score == 0 {
            return Err(Error::Config("need at least one score with at least one note".into()));
        }
        if self.pitch_lo > self.pitch_hi || self.pitch_lo < MIN_PITCH || self.pitch_hi > MAX_PITCH {
            return Err(Error::Config(format!("pitch range [{}, {}] is invalid", self.pitch_lo, self.pitch_hi)));
        }
        if self.blueprint_partials == 0 {
            return Err(Error::Config("blueprint_partials must be at least 1".into()));
        }
        let [lo, hi] = self.interferers;
        if lo == 0 || lo > hi {
            return Err(Error::Config("interferer count range must satisfy 1 <= min <= max".into()));
        }
        if self.interferer_offset_semitones < 7 {
            return Err(Error::Config("interferer pitch offset must be at least 7 semitones".into()));
        }
        if !(self.interference_gain >= 0.0 && self.interference_gain.is_finite()) {
            return Err(Error::Config("interference gain must be finite and non-negative".into()));
        }
        if self.low_rate_hz == 0 {
            return Err(Error::Config("low_rate_hz must be positive".into()));
        }
        self.timbre.validate()
    }
}

/// Audio behind one pair, aligned chunk by chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct PairAudio {
    pub input: Waveform,
    pub target: Waveform,
    /// Interfering stems (separation only), scaled exactly as in the mixture.
    pub interferences: Vec<Waveform>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub id: String,
    pub score: usize,
    pub chunk: usize,
    /// Concrete task of this pair (one of the parts for joint datasets).
    pub task: Task,
    pub input: SpectroImage,
    pub target: SpectroImage,
    pub audio: Option<PairAudio>,
}

#[derive(Clone, Debug)]
pub struct PairedDataset {
    pub task: Task,
    pub config: DatasetConfig,
    pub analysis: crate::dsp::AnalysisConfig,
    pub scores: Vec<Vec<NoteEvent>>,
    pub pairs: Vec<Pair>,
}

impl PairedDataset {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn input_shape(&self) -> Option<(usize, usize, usize)> {
        self.pairs.first().map(|p| p.input.shape())
    }

    pub fn target_shape(&self) -> Option<(usize, usize, usize)> {
        self.pairs.first().map(|p| p.target.shape())
    }

    /// All pairs share one input shape and one target shape.
    pub fn check_shapes(&self) -> Result<()> {
        let (Some(i), Some(t)) = (self.input_shape(), self.target_shape()) else { return Ok(()) };
        for p in &self.pairs {
            if p.input.shape() != i || p.target.shape() != t {
                return Err(Error::Contract(format!(
                    "pair {} has shapes {:?}/{:?}, expected {:?}/{:?}",
                    p.id,
                    p.input.shape(),
                    p.target.shape(),
                    i,
                    t
                )));
            }
        }
        Ok(())
    }

    fn subset(&self, keep: impl Fn(&Pair) -> bool) -> PairedDataset {
        PairedDataset {
            task: self.task,
            config: self.config.clone(),
            analysis: self.analysis.clone(),
            scores: self.scores.clone(),
            pairs: self.pairs.iter().filter(|p| keep(p)).cloned().collect(),
        }
    }

    /// Pairs whose score index is in `scores`.
    pub fn with_scores(&self, scores: &[usize]) -> PairedDataset {
        self.subset(|p| scores.contains(&p.score))
    }
}

/// Deterministic 64-bit mixing of a seed with stream indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Concrete task of score `index` (joint datasets rotate through their parts).
pub fn score_task(task: Task, index: usize) -> Task {
    match task {
        Task::Joint => Task::JOINT_PARTS[index % Task::JOINT_PARTS.len()],
        t => t,
    }
}

/// Seeded scores for a configuration.
pub fn generate_scores(cfg: &DatasetConfig) -> Result<Vec<Vec<NoteEvent>>> {
    (0..cfg.scores)
        .map(|i| random_score(derive_seed(cfg.seed, 1, i as u64), cfg.notes_per_score, cfg.pitch_lo, cfg.pitch_hi, &cfg.rhythm))
        .collect()
}

/// Generate scores from the configuration and build the dataset.
pub fn generate_dataset(cfg: &DatasetConfig, analysis: &Analysis, jobs: usize) -> Result<PairedDataset> {
    cfg.validate()?;
    make_task_dataset(cfg, analysis, generate_scores(cfg)?, jobs)
}

/// Render, transform and image every score; pairs are ordered by score then chunk.
pub fn make_task_dataset(
    cfg: &DatasetConfig,
    analysis: &Analysis,
    scores: Vec<Vec<NoteEvent>>,
    jobs: usize,
) -> Result<PairedDataset> {
    cfg.validate()?;
    if scores.is_empty() {
        return Err(Error::Config("dataset needs at least one score".into()));
    }
    let indexed: Vec<(usize, &Vec<NoteEvent>)> = scores.iter().enumerate().collect();
    let per_score = par_map(&indexed, jobs, |(i, notes)| score_pairs(cfg, analysis, *i, notes));
    let mut pairs = Vec::new();
    for p in per_score {
        pairs.extend(p?);
    }
    let d = PairedDataset { task: cfg.task, config: cfg.clone(), analysis: analysis.config().clone(), scores, pairs };
    d.check_shapes()?;
    Ok(d)
}

fn pad_to(w: &Waveform, len: usize) -> Waveform {
    if w.len() >= len {
        w.clone()
    } else {
        w.with_len(len)
    }
}

struct Rendered {
    input: Waveform,
    target: Waveform,
    interferences: Vec<Waveform>,
    cutoff_hz: Option<f64>,
}

fn interferer_range(cfg: &DatasetConfig, extra: i32) -> (i32, i32) {
    let span = cfg.pitch_hi - cfg.pitch_lo;
    let up = cfg.pitch_hi + cfg.interferer_offset_semitones + extra;
    if up + span <= MAX_PITCH {
        (up, up + span)
    } else {
        let down = cfg.pitch_lo - cfg.interferer_offset_semitones - extra;
        ((down - span).max(MIN_PITCH), down.max(MIN_PITCH))
    }
}

/// Solo target plus 1..=4 interfering voices; the mixture is peak-normalised
/// and the same gain is applied to every stem.
fn render_separation(cfg: &DatasetConfig, sr: u32, index: usize, notes: &[NoteEvent]) -> Result<Rendered> {
    let target = render_instrument(notes, &cfg.timbre, sr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, index as u64));
    let count = rng.gen_range(cfg.interferers[0]..=cfg.interferers[1]);
    let mut stems = Vec::with_capacity(count);
    for k in 0..count {
        let (lo, hi) = interferer_range(cfg, rng.gen_range(0..=5));
        let voice_seed = derive_seed(cfg.seed, 3 + k as u64, index as u64);
        let score = random_score(voice_seed, cfg.notes_per_score + 1, lo, hi, &cfg.rhythm)?;
        let timbre = TimbreConfig::random(voice_seed);
        stems.push(render_instrument(&score, &timbre, sr)?.scaled(cfg.interference_gain));
    }
    let len = stems.iter().map(Waveform::len).chain([target.len()]).max().unwrap_or(0);
    let target = pad_to(&target, len);
    let stems: Vec<Waveform> = stems.iter().map(|s| pad_to(s, len).with_len(len)).collect();
    let mut mixture = target.clone();
    for s in &stems {
        mixture = mixture.mix(s)?;
    }
    let peak = mixture.peak();
    let gain = if peak > 0.0 { super::RENDER_PEAK / peak } else { 1.0 };
    Ok(Rendered {
        input: mixture.scaled(gain),
        target: target.scaled(gain),
        interferences: stems.iter().map(|s| s.scaled(gain)).collect(),
        cutoff_hz: None,
    })
}

/// Band-limit to the low rate's Nyquist, decimate, and cubic-interpolate back.
pub fn degrade_bandwidth(w: &Waveform, low_rate_hz: u32) -> Result<Waveform> {
    let cutoff = low_rate_hz as f64 / 2.0;
    let low = resample_linear(&lowpass_brickwall(w, cutoff)?, low_rate_hz)?;
    Ok(resample_cubic(&low, w.sample_rate_hz())?.with_len(w.len()))
}

fn render(cfg: &DatasetConfig, sr: u32, task: Task, index: usize, notes: &[NoteEvent]) -> Result<Rendered> {
    let solo = |input: Waveform, target: Waveform, cutoff_hz| Rendered { input, target, interferences: vec![], cutoff_hz };
    Ok(match task {
        Task::PitchTrack => solo(render_instrument(notes, &cfg.timbre, sr)?, render_blueprint(notes, sr, 1)?, None),
        Task::Synthesize => solo(
            render_blueprint(notes, sr, cfg.blueprint_partials)?,
            render_instrument(notes, &cfg.timbre, sr)?,
            None,
        ),
        Task::SourceSeparate => render_separation(cfg, sr, index, notes)?,
        Task::SuperResolve | Task::Restore => {
            let target = render_instrument(notes, &cfg.timbre, sr)?;
            let input = degrade_bandwidth(&target, cfg.low_rate_hz)?;
            solo(input, target, Some(cfg.low_rate_hz as f64 / 2.0))
        }
        Task::Joint => unreachable!("joint scores are mapped to a concrete task"),
    })
}

fn pad_channels(img: SpectroImage, channels: usize) -> Result<SpectroImage> {
    let (c, h, w) = img.shape();
    if c >= channels {
        return Ok(img);
    }
    let filler = SpectroImage::filled(channels - c, h, w, -1.0, img.scale);
    SpectroImage::stack(&[img, filler])
}

fn score_pairs(cfg: &DatasetConfig, analysis: &Analysis, index: usize, notes: &[NoteEvent]) -> Result<Vec<Pair>> {
    let task = score_task(cfg.task, index);
    let sr = analysis.sample_rate_hz();
    let r = render(cfg, sr, task, index, notes)?;
    let chunk_ms = analysis.config().chunk_ms;
    let hop_ms = cfg.chunk_hop_ms.unwrap_or(chunk_ms);
    let len = r.input.len().max(r.target.len());
    let inputs = chunk(&pad_to(&r.input, len), chunk_ms, hop_ms)?;
    let targets = chunk(&pad_to(&r.target, len), chunk_ms, hop_ms)?;
    let stems: Vec<Vec<Waveform>> =
        r.interferences.iter().map(|s| chunk(&pad_to(s, len), chunk_ms, hop_ms)).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for (c, (xi, yi)) in inputs.into_iter().zip(targets).enumerate() {
        let id = format!("s{index:04}_c{c:02}");
        if task == Task::Restore {
            pairs.extend(restore_pairs(analysis, &id, index, c, &yi)?);
            continue;
        }
        let input = pad_channels(analysis.chunk_image(&xi, r.cutoff_hz)?, cfg.task.input_channels())?;
        let target = analysis.chunk_image(&yi, None)?;
        let interferences = stems.iter().map(|s| s[c].clone()).collect();
        pairs.push(Pair {
            id,
            score: index,
            chunk: c,
            task,
            input,
            target,
            audio: Some(PairAudio { input: xi, target: yi, interferences }),
        });
    }
    Ok(pairs)
}

/// Row offsets of `size`-row windows with 50 % overlap covering `rows` rows.
pub fn window_starts(rows: usize, size: usize) -> Vec<usize> {
    if rows <= size {
        return vec![0];
    }
    let step = (size / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|s| s + size < rows).collect();
    starts.push(rows - size);
    starts
}

fn restore_pairs(
    analysis: &Analysis,
    id: &str,
    score: usize,
    chunk: usize,
    target: &Waveform,
) -> Result<Vec<Pair>> {
    let layout = analysis.layout();
    let truth = analysis.linear_image(&analysis.linear(&target.with_len(analysis.chunk_samples()), &layout, None)?)?;
    let mel = analysis.chunk_image(target, None)?;
    let rescaled = analysis.linear_image(&analysis.rescale_to_linear(&mel)?)?;
    let size = analysis.size();
    let rows = truth.height();
    let mut pairs = Vec::new();
    for (k, start) in window_starts(rows, size).into_iter().enumerate() {
        pairs.push(Pair {
            id: format!("{id}_r{k:02}"),
            score,
            chunk,
            task: Task::Restore,
            input: rescaled.crop_rows(start, size)?,
            target: truth.crop_rows(start, size)?,
            audio: None,
        });
    }
    Ok(pairs)
}

/// Score-level seeded split: pairs of one score never straddle the two sides.
pub fn split_dataset(d: &PairedDataset, train_fraction: f64, seed: u64) -> Result<(PairedDataset, PairedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let mut ids: Vec<usize> = d.pairs.iter().map(|p| p.score).collect();
    ids.sort_unstable();
    ids.dedup();
    let n_train = (ids.len() as f64 * train_fraction).round() as usize;
    if ids.len() < 2 || n_train == 0 || n_train == ids.len() {
        return Err(Error::Config(format!(
            "{} scores cannot be split {train_fraction} without straddling",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_ids = &ids[..n_train];
    Ok((d.subset(|p| train_ids.contains(&p.score)), d.subset(|p| !train_ids.contains(&p.score))))
}

//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! This target runs without the libtest harness so that every criterion is
//! reported even when an earlier one fails. The process exits non-zero only
//! for unexpected failures; criteria listed in `KNOWN_FAILURES` are printed
//! as FAIL with their measured values but do not fail the build.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrans_cli::commands::{PitchOutcome, TranslateReport};
use spectrans_cli::config::RunConfig;
use spectrans_cli::read_json;
use spectrans_core::autodiff::gradcheck::{check_gradients, seeded_tensor, seeded_tensor_away_from_zero, weighted_sum};
use spectrans_core::autodiff::{Graph, Tensor, Var};
use spectrans_core::datagen::{
    generate_dataset, parse_score, random_score, render_blueprint, render_instrument, DatasetConfig, NoteEvent, Rhythm, Task,
};
use spectrans_core::dsp::{
    from_mel, griffin_lim_with_history, istft, stft, to_mel, Analysis, AnalysisConfig, ImageScale, MuLaw, Scale,
    SpectroImage, Spectrogram, StftParams, Waveform,
};
use spectrans_core::metrics::{bss_ratios, extract_notes, l1_percent, pitch_stats, ssim_default, decode_pitch, BinNote, DB_SENTINEL};
use spectrans_core::translator::{
    load_generator, no_checkpoints, toy_band_image, toy_shift_pairs, train, train_autoencoder_baseline, translate, Blend,
    Discriminator, Generator, History, PatchDiscConfig, TrainConfig, UNetConfig,
};
use spectrans_core::vocoder::{
    generate, generate_primed, generate_teacher_weighted, teacher_blend, train_vocoder, upsample_conditioning,
    ConditioningTrack, Selection, VocoderConfig, VocoderModel, VocoderTrainConfig,
};
use tempfile::TempDir;

/// Worst μ-law round-trip error over the 1000-point sweep, frozen from an
/// independent brute-force evaluation of the companding formulas. With 256
/// classes the outermost quantisation cells are ~0.043 wide, so the < 0.02
/// bound cannot be met by any 256-class mid-cell decoder.
const MU_LAW_SWEEP_WORST: f64 = 0.020704269314382295;

/// Criteria expected to fail, with the reason printed alongside.
const KNOWN_FAILURES: &[(usize, &str)] =
    &[(1, "μ-law sweep bound < 0.02 is below half the outermost 256-class cell width")];

struct Verdict {
    pass: bool,
    /// The failure is exactly the documented one (see `KNOWN_FAILURES`).
    explained: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, explained: false, detail: detail.into() }
    }
}

type Check = Result<Verdict, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

// ---------------------------------------------------------------------------
// 1. DSP suite

fn noise(len: usize, sr: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-0.9..0.9)).collect(), sr).unwrap()
}

fn harmonic(len: usize, sr: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.gen_range(110.0..660.0);
    let partials: Vec<(f64, f64)> = (1..=rng.gen_range(3..=6))
        .map(|k| (rng.gen_range(0.1..1.0) / k as f64, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / sr as f64;
            partials
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * (std::f64::consts::TAU * f0 * (k + 1) as f64 * t + ph).sin())
                .sum::<f64>()
                * 0.3
        })
        .collect();
    Waveform::new(samples, sr).unwrap()
}

fn relative_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / b.iter().map(|y| y.abs()).sum::<f64>()
}

fn dsp_suite() -> Check {
    let start = Instant::now();
    let analysis = Analysis::new(&AnalysisConfig::default()).map_err(err)?;

    let mut stft_worst = 0.0f64;
    for (k, p) in [analysis.params(), StftParams::new(256, 256, 128).map_err(err)?, StftParams::new(512, 300, 150).map_err(err)?]
        .into_iter()
        .enumerate()
    {
        let w = noise(16000, 16000, 10 + k as u64);
        let y = istft(&stft(&w, &p).map_err(err)?).map_err(err)?;
        let (a, b) = (p.window_length, w.len().min(y.len()) - p.window_length);
        let num: f64 = (a..b).map(|i| (y.samples()[i] - w.samples()[i]).powi(2)).sum();
        let den: f64 = (a..b).map(|i| w.samples()[i].powi(2)).sum();
        stft_worst = stft_worst.max((num / den).sqrt());
    }

    let mu = MuLaw::new(256).map_err(err)?;
    let mu_worst = (0..1000)
        .map(|i| -1.0 + 2.0 * i as f64 / 999.0)
        .map(|x| (mu.quantize(x) - x).abs())
        .fold(0.0, f64::max);

    let fb = analysis.filterbank();
    let p = analysis.params();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mel_worst = 0.0f64;
    let mut mel_harmonic = 0.0f64;
    for i in 0..5 {
        // seeded non-negative mel grids, and mel grids of non-negative linear grids
        let m: Vec<f64> = (0..64 * fb.mel_bins()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s = Spectrogram::new(m.clone(), 64, fb.mel_bins(), Scale::Mel, p, 16000).map_err(err)?;
        let back = to_mel(&from_mel(&s, fb).map_err(err)?, fb).map_err(err)?;
        mel_worst = mel_worst.max(relative_l1(back.magnitudes(), &m));
        let lin: Vec<f64> = (0..64 * fb.linear_bins()).map(|_| rng.gen_range(0.0f64..1.0).powi(3)).collect();
        let lin = Spectrogram::new(lin, 64, fb.linear_bins(), Scale::Linear, p, 16000).map_err(err)?;
        let mel = to_mel(&lin, fb).map_err(err)?;
        let back = to_mel(&from_mel(&mel, fb).map_err(err)?, fb).map_err(err)?;
        mel_worst = mel_worst.max(relative_l1(back.magnitudes(), mel.magnitudes()));
        // reported only: sparse harmonic spectra lose more to the clamped pseudo-inverse
        let mel = to_mel(&stft(&harmonic(12000, 16000, 30 + i), &p).map_err(err)?, fb).map_err(err)?;
        let back = to_mel(&from_mel(&mel, fb).map_err(err)?, fb).map_err(err)?;
        mel_harmonic = mel_harmonic.max(relative_l1(back.magnitudes(), mel.magnitudes()));
    }

    let batch = 6;
    let iterations = 32;
    let mut mean = vec![0.0; iterations + 1];
    for i in 0..batch {
        let target = stft(&harmonic(8000, 16000, 40 + i), &p).map_err(err)?;
        let (_, h) = griffin_lim_with_history(&target, iterations).map_err(err)?;
        for (m, v) in mean.iter_mut().zip(&h) {
            *m += v / batch as f64;
        }
    }
    let gl_monotone = mean[1..].windows(2).all(|w| w[1] <= w[0] + 1e-12);

    let elapsed = seconds(start);
    let pass = stft_worst < 1e-6 && mu_worst < 0.02 && mel_worst < 0.05 && gl_monotone && elapsed < 30.0;
    let mu_matches_oracle = (mu_worst - MU_LAW_SWEEP_WORST).abs() < 1e-12;
    let rest_pass = stft_worst < 1e-6 && mel_worst < 0.05 && gl_monotone && elapsed < 30.0;
    let mut v = Verdict::new(
        pass,
        format!(
            "stft rms {stft_worst:.2e} (<1e-6); μ-law {mu_worst:.6} (<0.02; oracle {}); mel {mel_worst:.4} (<0.05; harmonic spectra {mel_harmonic:.3}, not gated); \
             GL mean SC {:.4}→{:.4} non-increasing {gl_monotone}; {elapsed:.1} s (<30)",
            if mu_matches_oracle { "agrees" } else { "DISAGREES" },
            mean[1],
            mean[iterations],
        ),
    );
    v.explained = rest_pass && mu_matches_oracle;
    Ok(v)
}

// ---------------------------------------------------------------------------
// 2. Gradient suite

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-3;

struct GradTally {
    checks: usize,
    worst: f64,
    failures: Vec<String>,
}

impl GradTally {
    fn check(&mut self, name: &str, inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> spectrans_core::autodiff::Result<Var>) {
        self.checks += 1;
        match check_gradients(inputs, EPS, f) {
            Ok(r) => {
                self.worst = self.worst.max(r.max_rel_error);
                if !(r.max_rel_error < TOL) {
                    self.failures.push(format!("{name}: {:.2e}", r.max_rel_error));
                }
            }
            Err(e) => self.failures.push(format!("{name}: {e}")),
        }
    }
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut t = GradTally { checks: 0, worst: 0.0, failures: Vec::new() };

    for (i, &(n, cin, h, cout, k, s, p)) in [(1, 1, 5, 2, 3, 1, 1), (2, 2, 6, 3, 4, 2, 1), (1, 3, 8, 2, 2, 2, 0)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, h, h], 10 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cout, cin, k, k], 20 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 30 + i as u64, -0.5, 0.5);
        t.check("conv2d", &[x, w, b], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), s, p)?;
            weighted_sum(g, y, 99)
        });
    }
    for (i, &(n, cin, h, cout, k, s, p)) in [(1, 1, 3, 2, 4, 2, 1), (2, 2, 4, 1, 3, 1, 1), (1, 3, 2, 2, 8, 2, 3)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, h, h], 40 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cin, cout, k, k], 50 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 60 + i as u64, -0.5, 0.5);
        t.check("conv_transpose2d", &[x, w, b], |g, v| {
            let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), s, p)?;
            weighted_sum(g, y, 98)
        });
    }
    for (i, &(n, cin, len, cout, k, d)) in [(1, 1, 9, 2, 2, 1), (2, 3, 12, 2, 2, 4), (1, 2, 10, 3, 3, 2)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, len], 70 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cout, cin, k], 80 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 90 + i as u64, -0.5, 0.5);
        t.check("causal_conv1d", &[x, w, b], |g, v| {
            let y = g.causal_conv1d(v[0], v[1], Some(v[2]), d)?;
            weighted_sum(g, y, 97)
        });
    }
    for (i, shape) in [[1, 1, 3, 3], [2, 3, 4, 4], [1, 2, 2, 5]].iter().enumerate() {
        let x = seeded_tensor(shape, 100 + i as u64, -2.0, 2.0);
        t.check("instance_norm", &[x], |g, v| {
            let y = g.instance_norm(v[0], 1e-5)?;
            weighted_sum(g, y, 96)
        });
    }
    for (i, shape) in [vec![7], vec![2, 3, 4], vec![1, 2, 3, 3]].iter().enumerate() {
        let x = seeded_tensor_away_from_zero(shape, 110 + i as u64, 2.0, 1e-2);
        let y = seeded_tensor(shape, 115 + i as u64, -1.0, 1.0);
        t.check("leaky_relu", &[x.clone()], |g, v| {
            let y = g.leaky_relu(v[0], 0.2);
            weighted_sum(g, y, 1)
        });
        t.check("relu", &[x.clone()], |g, v| {
            let y = g.relu(v[0]);
            weighted_sum(g, y, 2)
        });
        t.check("tanh", &[x.clone()], |g, v| {
            let y = g.tanh(v[0]);
            weighted_sum(g, y, 3)
        });
        t.check("sigmoid", &[x.clone()], |g, v| {
            let y = g.sigmoid(v[0]);
            weighted_sum(g, y, 4)
        });
        t.check("scale", &[x.clone()], |g, v| {
            let y = g.scale(v[0], -1.7);
            weighted_sum(g, y, 5)
        });
        t.check("add", &[x.clone(), y.clone()], |g, v| {
            let z = g.add(v[0], v[1])?;
            weighted_sum(g, z, 10)
        });
        t.check("sub", &[x.clone(), y.clone()], |g, v| {
            let z = g.sub(v[0], v[1])?;
            weighted_sum(g, z, 11)
        });
        t.check("mul", &[x.clone(), y.clone()], |g, v| {
            let z = g.mul(v[0], v[1])?;
            weighted_sum(g, z, 12)
        });
        t.check("sum", &[x.clone()], |g, v| {
            let z = g.tanh(v[0]);
            Ok(g.sum(z))
        });
        t.check("mean", &[x], |g, v| {
            let z = g.sigmoid(v[0]);
            Ok(g.mean(z))
        });
    }
    for (i, shape) in [[1, 2, 5], [2, 4, 3], [1, 6, 2]].iter().enumerate() {
        let x = seeded_tensor(shape, 120 + i as u64, -2.0, 2.0);
        t.check("gated_activation", &[x], |g, v| {
            let y = g.gated_activation(v[0])?;
            weighted_sum(g, y, 6)
        });
    }
    for (i, &axis) in [0usize, 1, 2].iter().enumerate() {
        let mut sa = vec![2, 3, 4];
        let mut sb = vec![2, 3, 4];
        sa[axis] = 1;
        sb[axis] = 2;
        let a = seeded_tensor(&sa, 130 + i as u64, -1.0, 1.0);
        let b = seeded_tensor(&sb, 140 + i as u64, -1.0, 1.0);
        t.check("concat", &[a, b], |g, v| {
            let y = g.concat(&[v[0], v[1]], axis)?;
            weighted_sum(g, y, 7)
        });
    }
    for (i, shape) in [vec![10], vec![2, 3, 4], vec![1, 1, 5, 5]].iter().enumerate() {
        let x = seeded_tensor(shape, 150 + i as u64, -1.0, 1.0);
        t.check("dropout", &[x], |g, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let y = g.dropout(v[0], 0.3, &mut rng)?;
            weighted_sum(g, y, 8)
        });
    }
    for (i, shape) in [vec![6], vec![2, 3, 4], vec![1, 2, 3, 3]].iter().enumerate() {
        let a = seeded_tensor(shape, 160 + i as u64, -1.0, 1.0);
        let d = seeded_tensor_away_from_zero(shape, 170 + i as u64, 0.5, 0.05);
        let b = Tensor::new(shape, a.values().iter().zip(d.values()).map(|(x, y)| x + y).collect()).map_err(err)?;
        t.check("l1_loss", &[a.clone(), b.clone()], |g, v| g.l1_loss(v[0], v[1]));
        t.check("mse_loss", &[a, b], |g, v| g.mse_loss(v[0], v[1]));
    }
    for (i, &(n, k, len)) in [(1, 5, 1), (2, 4, 3), (1, 256, 2)].iter().enumerate() {
        let logits = seeded_tensor(&[n, k, len], 180 + i as u64, -3.0, 3.0);
        let targets: Vec<usize> = (0..n * len).map(|j| (j * 7 + i) % k).collect();
        t.check("softmax_cross_entropy", &[logits], |g, v| g.softmax_cross_entropy(v[0], &targets));
    }

    let elapsed = seconds(start);
    let pass = t.failures.is_empty() && elapsed < 60.0;
    let mut detail = format!("{} checks, worst relative error {:.2e} (<1e-3); {elapsed:.1} s (<60)", t.checks, t.worst);
    if !t.failures.is_empty() {
        detail.push_str(&format!("; failing: {}", t.failures.join(", ")));
    }
    Ok(Verdict::new(pass, detail))
}

// ---------------------------------------------------------------------------
// 3 and 5: vocoder helpers

fn tiny_vocoder() -> VocoderConfig {
    VocoderConfig {
        layers_per_cycle: 4,
        cycles: 2,
        residual_channels: 8,
        skip_channels: 16,
        cond_channels: 6,
        hop: 10,
        ..VocoderConfig::default()
    }
}

/// Every parameter (including the zero-initialised head) drawn at random.
fn randomised(cfg: &VocoderConfig, seed: u64) -> VocoderModel {
    let mut m = VocoderModel::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for i in 0..m.params.len() {
        m.params.tensor_mut(i).values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.4f32..0.4) as f64);
    }
    m
}

fn random_track(channels: usize, frames: usize, hop: usize, seed: u64) -> ConditioningTrack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..channels * frames).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let img = SpectroImage::new(1, channels, frames, px, ImageScale::default()).unwrap();
    upsample_conditioning(&img, hop, 8000).unwrap()
}

fn classes_of(m: &VocoderModel, audio: &[f64]) -> Vec<usize> {
    let mu = MuLaw::new(m.config.classes).unwrap();
    audio.iter().map(|&x| mu.encode(x)).collect()
}

fn logits(m: &VocoderModel, inputs: &[usize], cond: &ConditioningTrack) -> Result<Vec<f64>, String> {
    let mut g = Graph::new();
    let l = m.logits(&mut g, inputs, cond, 0, true).map_err(err)?;
    Ok(g.value(l).values().to_vec())
}

fn column(values: &[f64], classes: usize, t: usize) -> Vec<f64> {
    let len = values.len() / classes;
    (0..classes).map(|c| values[c * len + t]).collect()
}

fn causality_suite() -> Check {
    let start = Instant::now();
    let cfg = tiny_vocoder();
    let rf = cfg.receptive_field();
    let mut problems = Vec::new();

    let m = randomised(&cfg, 4);
    let cond = random_track(6, 12, 10, 5);
    let audio = noise(120, 8000, 6);
    let base = classes_of(&m, audio.samples());
    let before = logits(&m, &base, &cond)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let t = rng.gen_range(0..119);
        let mut changed = base.clone();
        for c in changed.iter_mut().skip(t + 1) {
            *c = (*c + 97) % 256;
        }
        let after = logits(&m, &changed, &cond)?;
        if (0..=t).any(|s| column(&before, 256, s) != column(&after, 256, s)) {
            problems.push(format!("future inputs reached position ≤ {t}"));
        }
        if column(&before, 256, t + 1) == column(&after, 256, t + 1) {
            problems.push(format!("input {t} did not reach position {}", t + 1));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let t = rng.gen_range(rf + 5..120);
        let mut far = base.clone();
        for c in far.iter_mut().take(t + 1 - rf) {
            *c = (*c + 53) % 256;
        }
        if column(&before, 256, t) != column(&logits(&m, &far, &cond)?, 256, t) {
            problems.push(format!("inputs ≥ {rf} back moved position {t}"));
        }
        let mut near = base.clone();
        near[t + 1 - rf] = (near[t + 1 - rf] + 53) % 256;
        if column(&before, 256, t) == column(&logits(&m, &near, &cond)?, 256, t) {
            problems.push(format!("input {} back did not move position {t}", rf - 1));
        }
    }

    let elapsed = seconds(start);
    let pass = problems.is_empty() && elapsed < 30.0;
    let mut detail = format!("receptive field {rf}; 10 future-input and 10 boundary positions; {elapsed:.1} s (<30)");
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.join(", ")));
    }
    Ok(Verdict::new(pass, detail))
}

// ---------------------------------------------------------------------------
// 4. Translator toy tasks

fn small_unet() -> UNetConfig {
    UNetConfig { image_size: 32, depth: 3, base_channels: 8, ..UNetConfig::default() }
}

fn mean_l1(gen: &Generator, pairs: &[(SpectroImage, SpectroImage)]) -> Result<f64, String> {
    let inputs: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.pixels().to_vec()).collect();
    let outs = gen.predict(&inputs).map_err(err)?;
    let mut total = 0.0;
    for (o, (_, y)) in outs.iter().zip(pairs) {
        total += o.iter().zip(y.pixels()).map(|(a, b)| (a - b).abs()).sum::<f64>() / o.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn refs(pairs: &[(SpectroImage, SpectroImage)]) -> Vec<(&SpectroImage, &SpectroImage)> {
    pairs.iter().map(|(x, y)| (x, y)).collect()
}

fn tail_mean(h: &History, n: usize) -> f64 {
    let tail = &h.loss_l1[h.loss_l1.len() - n..];
    tail.iter().sum::<f64>() / n as f64
}

fn translator_suite() -> Check {
    let start = Instant::now();
    let g_cfg = small_unet();
    let d_cfg = PatchDiscConfig { base_channels: 8, ..PatchDiscConfig::default() };

    let identity: Vec<_> = (0..6)
        .map(|i| {
            let x = toy_band_image(32, 100 + i);
            (x.clone(), x)
        })
        .collect();
    let t_cfg = TrainConfig { steps: 600, checkpoint_every: 600, ..TrainConfig::default() };
    let untrained = mean_l1(&Generator::new(&g_cfg, t_cfg.seed).map_err(err)?, &identity)?;

    let mut cgan_init = None;
    let mut hook = |step: usize, g: &Generator, _: Option<&Discriminator>, _: &History| {
        if step == 0 {
            cgan_init = Some(g.params.fingerprint());
        }
        Ok(())
    };
    let (_, _, cgan_hist) = train(&refs(&identity), &g_cfg, &d_cfg, &t_cfg, &mut hook).map_err(err)?;
    let mut base_init = None;
    let mut hook = |step: usize, g: &Generator, _: Option<&Discriminator>, _: &History| {
        if step == 0 {
            base_init = Some(g.params.fingerprint());
        }
        Ok(())
    };
    let (_, base_hist) = train_autoencoder_baseline(&refs(&identity), &g_cfg, &t_cfg, &mut hook).map_err(err)?;
    let cgan_tail = tail_mean(&cgan_hist, 300);
    let base_tail = tail_mean(&base_hist, 300);
    let same_init = cgan_init.is_some() && cgan_init == base_init;

    let train_pairs = toy_shift_pairs(12, 32, 4, 1).map_err(err)?;
    let held_out = toy_shift_pairs(6, 32, 4, 2).map_err(err)?;
    let s_cfg = TrainConfig { steps: 600, ..TrainConfig::default() };
    let (gen, _, _) = train(&refs(&train_pairs), &g_cfg, &d_cfg, &s_cfg, &mut no_checkpoints).map_err(err)?;
    let model = mean_l1(&gen, &held_out)?;
    let copy = held_out
        .iter()
        .map(|(x, y)| x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.pixels().len() as f64)
        .sum::<f64>()
        / held_out.len() as f64;

    let elapsed = seconds(start);
    let bound = 0.25 * untrained;
    let pass = cgan_tail < bound && base_tail < bound && model < copy && same_init && elapsed < 600.0;
    Ok(Verdict::new(
        pass,
        format!(
            "(a) cGAN final-300 L1 {cgan_tail:.4} vs 25 % of untrained {bound:.4}; (b) shift held-out L1 {model:.4} vs \
             identity {copy:.4}; (c) L1-only final-300 L1 {base_tail:.4}, step-0 parameters identical {same_init}; \
             {elapsed:.1} s (<600)"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 5. Teacher weighting

fn teacher_suite() -> Check {
    let start = Instant::now();
    let m = randomised(&tiny_vocoder(), 17);
    let cond = random_track(6, 10, 10, 18);
    let reference = noise(100, 8000, 19);
    let mu = MuLaw::new(256).map_err(err)?;
    let mut exact = true;
    let mut worst_steps = 0.0f64;
    for sel in [Selection::Mode, Selection::Sample] {
        let plain = generate(&m, &cond, 100, sel, 3).map_err(err)?;
        let f1 = generate_teacher_weighted(&m, &cond, &reference, 100, 1.0, sel, 3).map_err(err)?;
        exact &= plain.samples().iter().zip(f1.samples()).all(|(a, b)| a.to_bits() == b.to_bits());
        let big = generate_teacher_weighted(&m, &cond, &reference, 100, 1e6, sel, 3).map_err(err)?;
        for (g, r) in big.samples().iter().zip(reference.samples()) {
            worst_steps = worst_steps.max((g - r).abs() / mu.step_at(mu.encode(*r)));
        }
    }
    let blend = teacher_blend(0.5, -0.5, 20.0);
    let pass = exact && worst_steps <= 1.0 && blend == 0.45;
    Ok(Verdict::new(
        pass,
        format!(
            "f=1 bit-exact {exact}; f=1e6 worst deviation {worst_steps:.3} μ-law steps (≤1); blend(0.5, −0.5, 20) = {blend}; \
             {:.1} s",
            seconds(start)
        ),
    ))
}

// ---------------------------------------------------------------------------
// 6. Vocoder overfit

fn overfit_suite() -> Check {
    let start = Instant::now();
    let a = Analysis::new(&AnalysisConfig { sample_rate_hz: 8000, ..AnalysisConfig::default() }).map_err(err)?;
    let notes = parse_score("0 250 57\n250 250 64").map_err(err)?;
    let clip = render_blueprint(&notes, 8000, 3).map_err(err)?.with_len(4000);
    let cond = upsample_conditioning(&a.mel_image(&clip, None).map_err(err)?, a.hop(), 8000).map_err(err)?;
    let clip = clip.with_len(cond.len());
    let cfg = VocoderConfig { hop: a.hop(), ..VocoderConfig::default() };
    let mut m = VocoderModel::new(&cfg, 1).map_err(err)?;
    let tc = VocoderTrainConfig { steps: 200, ..VocoderTrainConfig::default() };
    let history = train_vocoder(&mut m, &[(clip.clone(), cond.clone())], &tc, &mut |_, _, _| Ok(())).map_err(err)?;
    let first = history[0];
    let last = *history.last().unwrap();

    let rf = m.receptive_field();
    let out = generate_primed(&m, &cond, &clip.samples()[..rf], clip.len(), Selection::Mode, 1).map_err(err)?;
    let truth = classes_of(&m, clip.samples());
    let got = classes_of(&m, out.samples());
    let hits = (rf..clip.len()).filter(|&t| got[t] == truth[t]).count();
    let accuracy = hits as f64 / (clip.len() - rf) as f64 * 100.0;
    let elapsed = seconds(start);
    let pass = (first - 256f64.ln()).abs() < 1e-6 && last < 1.0 && accuracy > 50.0 && elapsed < 900.0;
    Ok(Verdict::new(
        pass,
        format!(
            "{} samples at 8 kHz; loss {first:.4} (ln 256 = {:.4}) → {last:.4} (<1.0); primed accuracy {accuracy:.1} % \
             (>50); {elapsed:.1} s (<900)",
            clip.len(),
            256f64.ln()
        ),
    ))
}

// ---------------------------------------------------------------------------
// 7. Metric oracles

fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, levels: Option<usize>) -> SpectroImage {
    let px = (0..c * h * w)
        .map(|_| match levels {
            Some(n) => -1.0 + 2.0 * rng.gen_range(0..n) as f64 / (n - 1) as f64,
            None => rng.gen_range(-1.0..1.0),
        })
        .collect();
    SpectroImage::new(c, h, w, px, ImageScale::default()).unwrap()
}

fn oracle_l1(a: &SpectroImage, b: &SpectroImage) -> f64 {
    let (c, h, w) = a.shape();
    let mut sum = 0.0;
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                sum += (a.at(ch, r, col) - b.at(ch, r, col)).abs();
            }
        }
    }
    sum / (c * h * w) as f64 / 2.0 * 100.0
}

/// Two-pass window statistics over every box window, every channel.
fn oracle_ssim(a: &SpectroImage, b: &SpectroImage) -> f64 {
    let (c, h, w) = a.shape();
    let win = 8.min(h).min(w);
    let c1 = (0.01f64 * 2.0).powi(2);
    let c2 = (0.03f64 * 2.0).powi(2);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for ch in 0..c {
        for r0 in 0..=h - win {
            for c0 in 0..=w - win {
                let cells: Vec<(f64, f64)> = (r0..r0 + win)
                    .flat_map(|r| (c0..c0 + win).map(move |col| (r, col)))
                    .map(|(r, col)| (a.at(ch, r, col), b.at(ch, r, col)))
                    .collect();
                let mx = cells.iter().map(|p| p.0).sum::<f64>() / n;
                let my = cells.iter().map(|p| p.1).sum::<f64>() / n;
                let vx = cells.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
                let vy = cells.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
                let cov = cells.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Runs of random bins with unvoiced gaps.
fn random_bins(rng: &mut ChaCha8Rng, len: usize, rows: usize) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let run = rng.gen_range(1..12);
        let value = if rng.gen_bool(0.25) { None } else { Some(rng.gen_range(0..rows)) };
        for _ in 0..run {
            let jitter = value.map(|b: usize| {
                if rng.gen_bool(0.15) {
                    (b + rng.gen_range(0..3)).saturating_sub(1).min(rows - 1)
                } else {
                    b
                }
            });
            out.push(jitter);
        }
    }
    out.truncate(len);
    out
}

/// Prediction derived from the truth: shifted, dropped, or replaced frames.
fn perturb(rng: &mut ChaCha8Rng, truth: &[Option<usize>], rows: usize) -> Vec<Option<usize>> {
    let offset = rng.gen_range(-2i64..=2);
    truth
        .iter()
        .map(|b| match rng.gen_range(0..10) {
            0 => None,
            1 => Some(rng.gen_range(0..rows)),
            _ => b.map(|b| (b as i64 + offset).clamp(0, rows as i64 - 1) as usize),
        })
        .collect()
}

fn frames_of(n: &BinNote) -> std::collections::BTreeSet<usize> {
    (n.start..n.start + n.frames).collect()
}

/// Returns (correct, truth notes, predicted notes, precision, frame errors).
fn oracle_pitch(
    pred_bins: &[Option<usize>],
    pred_notes: &[BinNote],
    truth_bins: &[Option<usize>],
    truth_notes: &[BinNote],
) -> (usize, usize, usize, f64, f64) {
    let mut taken = vec![false; pred_notes.len()];
    let mut correct = 0;
    for t in truth_notes {
        let tf = frames_of(t);
        for (i, p) in pred_notes.iter().enumerate() {
            let shared = frames_of(p).intersection(&tf).count();
            let near = (p.bin as i64 - t.bin as i64).abs() <= 1;
            if !taken[i] && near && shared as f64 >= t.frames as f64 / 2.0 {
                taken[i] = true;
                correct += 1;
                break;
            }
        }
    }
    let mut errors = 0;
    for (p, t) in pred_bins.iter().zip(truth_bins) {
        let wrong = match (p, t) {
            (Some(p), Some(t)) => (*p as i64 - *t as i64).abs() > 1,
            (None, None) => false,
            _ => true,
        };
        errors += wrong as usize;
    }
    let precision = if pred_notes.is_empty() {
        if truth_notes.is_empty() {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * correct as f64 / pred_notes.len() as f64
    };
    (correct, truth_notes.len(), pred_notes.len(), precision, errors as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram–Schmidt (two passes) projection of `x` onto span(`basis`).
fn gram_schmidt_projection(x: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        let mut v = b.to_vec();
        for _ in 0..2 {
            for u in &q {
                let c = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * dot(b, b).sqrt() {
            q.push(v.iter().map(|a| a / norm).collect());
        }
    }
    let mut out = vec![0.0; x.len()];
    for u in &q {
        let c = dot(x, u);
        out.iter_mut().zip(u).for_each(|(o, v)| *o += c * v);
    }
    out
}

fn oracle_db(num: f64, den: f64, scale: f64) -> f64 {
    let tiny = 1e-24 * scale;
    if num <= tiny {
        -DB_SENTINEL
    } else if den <= tiny {
        DB_SENTINEL
    } else {
        (10.0 * (num / den).log10()).clamp(-DB_SENTINEL, DB_SENTINEL)
    }
}

fn oracle_bss(e: &[f64], t: &[f64], interferers: &[Vec<f64>]) -> (f64, f64) {
    let s_t: Vec<f64> = t.iter().map(|v| v * dot(e, t) / dot(t, t)).collect();
    let mut basis: Vec<&[f64]> = vec![t];
    basis.extend(interferers.iter().map(Vec::as_slice));
    let p_all = gram_schmidt_projection(e, &basis);
    let dist: Vec<f64> = e.iter().zip(&s_t).map(|(a, b)| a - b).collect();
    let interf: Vec<f64> = p_all.iter().zip(&s_t).map(|(a, b)| a - b).collect();
    let scale = dot(e, e).max(f64::MIN_POSITIVE);
    let st = dot(&s_t, &s_t);
    (oracle_db(st, dot(&dist, &dist), scale), oracle_db(st, dot(&interf, &interf), scale))
}

fn pitch_image(bins: &[Option<usize>], rows: usize) -> SpectroImage {
    let w = bins.len();
    let mut px = vec![-1.0; rows * w];
    for (t, b) in bins.iter().enumerate() {
        if let Some(b) = b {
            px[b * w + t] = 1.0;
        }
    }
    SpectroImage::new(1, rows, w, px, ImageScale::default()).unwrap()
}

fn metrics_suite() -> Check {
    let start = Instant::now();
    let instances = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut l1_worst, mut ssim_worst, mut bss_worst) = (0.0f64, 0.0f64, 0.0f64);
    let mut pitch_mismatch = 0;

    for i in 0..instances {
        let c = rng.gen_range(1..=3);
        let (h, w) = (rng.gen_range(2..20), rng.gen_range(2..20));
        let levels = (i % 3 == 0).then_some(3);
        let a = random_image(&mut rng, c, h, w, levels);
        let b = if i % 2 == 0 {
            let noise = random_image(&mut rng, c, h, w, None);
            let px = a.pixels().iter().zip(noise.pixels()).map(|(x, n)| (x + 0.2 * n).clamp(-1.0, 1.0)).collect();
            SpectroImage::new(c, h, w, px, ImageScale::default()).unwrap()
        } else {
            random_image(&mut rng, c, h, w, levels)
        };
        l1_worst = l1_worst.max((l1_percent(&a, &b).map_err(err)? - oracle_l1(&a, &b)).abs());
        ssim_worst = ssim_worst.max((ssim_default(&a, &b).map_err(err)? - oracle_ssim(&a, &b)).abs());
    }

    for _ in 0..instances {
        let rows = rng.gen_range(3..40);
        let len = rng.gen_range(10..90);
        let truth = random_bins(&mut rng, len, rows);
        let pred = perturb(&mut rng, &truth, rows);
        let min_frames = rng.gen_range(1..=3);
        let (tn, pn) = (extract_notes(&truth, min_frames), extract_notes(&pred, min_frames));
        let r = pitch_stats(&pred, &pn, &truth, &tn).map_err(err)?;
        let o = oracle_pitch(&pred, &pn, &truth, &tn);
        if (r.correct_notes, r.total_truth_notes, r.total_pred_notes) != (o.0, o.1, o.2)
            || (r.precision - o.3).abs() > 1e-12
            || r.mean_frame_error != o.4
        {
            pitch_mismatch += 1;
        }
    }

    for _ in 0..instances {
        let n = rng.gen_range(16..200);
        let k = rng.gen_range(0..=3);
        let sig = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let t = sig(&mut rng);
        let interferers: Vec<Vec<f64>> = (0..k).map(|_| sig(&mut rng)).collect();
        let residual = sig(&mut rng);
        let (ga, gr) = (rng.gen_range(0.2..2.0), rng.gen_range(0.0..0.5));
        let mut e: Vec<f64> = t.iter().zip(&residual).map(|(a, r)| ga * a + gr * r).collect();
        for s in &interferers {
            let g = rng.gen_range(-0.8..0.8);
            e.iter_mut().zip(s).for_each(|(x, v)| *x += g * v);
        }
        let wave = |v: &[f64]| Waveform::new(v.to_vec(), 8000).unwrap();
        let iw: Vec<Waveform> = interferers.iter().map(|s| wave(s)).collect();
        let r = bss_ratios(&wave(&e), &wave(&t), &iw).map_err(err)?;
        let (sdr, sir) = oracle_bss(&e, &t, &interferers);
        bss_worst = bss_worst.max((r.sdr_db - sdr).abs()).max((r.sir_db - sir).abs());
    }

    // Predictions one row off the truth are neither frame errors nor missed notes.
    let mut shifted_errors = 0.0;
    let mut shifted_missed = 0;
    for _ in 0..20 {
        let rows = 40;
        let truth = random_bins(&mut rng, 60, rows - 1);
        let up = if rng.gen_bool(0.5) { 1 } else { 0 };
        let shifted: Vec<Option<usize>> =
            truth.iter().map(|b| b.map(|b| if up == 1 { b + 1 } else { b.saturating_sub(1) })).collect();
        let tb = decode_pitch(&pitch_image(&truth, rows)).map_err(err)?;
        let pb = decode_pitch(&pitch_image(&shifted, rows)).map_err(err)?;
        let (tn, pn) = (extract_notes(&tb, 1), extract_notes(&pb, 1));
        let r = pitch_stats(&pb, &pn, &tb, &tn).map_err(err)?;
        shifted_errors += r.mean_frame_error;
        shifted_missed += r.total_truth_notes - r.correct_notes;
    }

    let pass = l1_worst < 1e-9 && ssim_worst < 1e-9 && pitch_mismatch == 0 && bss_worst < 1e-6 && shifted_errors == 0.0;
    Ok(Verdict::new(
        pass,
        format!(
            "{instances} instances each: L1 Δ {l1_worst:.1e}, SSIM Δ {ssim_worst:.1e}, pitch tally mismatches {pitch_mismatch}, \
             BSS Δ {bss_worst:.1e} dB; one-row-shifted predictions: {shifted_errors} frame errors, {shifted_missed} missed \
             notes; {:.1} s",
            seconds(start)
        ),
    ))
}

// ---------------------------------------------------------------------------
// 8 and 9: command-line pipeline

fn spectrans(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spectrans")).args(args).output().map_err(err)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("spectrans {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn pipeline_config(task: Task, scores: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.task = Some(task);
    c.dataset.scores = scores;
    c.dataset.notes_per_score = 3;
    c.generator.base_channels = 32;
    c.train.steps = 500;
    c.vocoder.layers_per_cycle = 6;
    c.vocoder.cycles = 1;
    c.vocoder.residual_channels = 16;
    c.vocoder.skip_channels = 32;
    c.vocoder_train.steps = 10;
    c.vocoder_train.segment_samples = Some(2048);
    c
}

struct Pipeline {
    dir: TempDir,
    score: Vec<NoteEvent>,
}

impl Pipeline {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> Result<PathBuf, String> {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_json()).map_err(err)?;
    Ok(path)
}

/// Dedicated pitch-tracking model trained through the binary, plus a seeded
/// three-note test recording.
fn build_pipeline() -> Result<Pipeline, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let root = dir.path();
    let cfg = write_config(root, "pitch.json", &pipeline_config(Task::PitchTrack, 24))?;
    spectrans(&["datagen", "--config", s(&cfg), "--out", s(&root.join("data"))])?;
    spectrans(&["train-translator", "--dataset", s(&root.join("data")), "--out", s(&root.join("model"))])?;

    let score = random_score(5, 3, 55, 79, &Rhythm::default()).map_err(err)?;
    let w = render_instrument(&score, &DatasetConfig::default().timbre, 16000).map_err(err)?;
    spectrans_core::dsp::write_wav(&w, root.join("score.wav")).map_err(err)?;
    Ok(Pipeline { dir, score })
}

/// Truth notes in image coordinates: frame `j` spans samples `[j·hop, (j+1)·hop)`.
fn truth_notes(score: &[NoteEvent], analysis: &Analysis) -> Vec<BinNote> {
    let hop = analysis.hop() as f64;
    let sr = analysis.sample_rate_hz() as f64;
    score
        .iter()
        .map(|n| {
            let start = (n.onset_ms / 1000.0 * sr / hop).floor() as usize;
            let end = (n.end_ms() / 1000.0 * sr / hop).ceil() as usize;
            BinNote { start, frames: end - start, bin: analysis.filterbank().row_for_hz(n.frequency_hz()) }
        })
        .collect()
}

fn pitch_l1(gen: &Generator, pairs: &[(SpectroImage, SpectroImage)]) -> Result<f64, String> {
    let mut total = 0.0;
    for (x, y) in pairs {
        let input = if gen.config.in_channels == 1 {
            x.clone()
        } else {
            let mut parts = vec![x.clone()];
            for _ in 1..gen.config.in_channels {
                parts.push(SpectroImage::filled(1, x.height(), x.width(), -1.0, x.scale));
            }
            SpectroImage::stack(&parts).map_err(err)?
        };
        let pred = translate(gen, &input, Blend::Crossfade, 1).map_err(err)?;
        total += l1_percent(&pred, y).map_err(err)?;
    }
    Ok(total / pairs.len() as f64)
}

fn end_to_end(p: &Pipeline, started: Instant) -> Check {
    let start = Instant::now();
    spectrans(&["pitch-track", "--checkpoint", s(&p.path("model")), "--input", s(&p.path("score.wav")), "--out", s(&p.path("pt"))])?;
    let outcome: PitchOutcome = read_json(&p.path("pt/notes.json")).map_err(err)?;
    let analysis = RunConfig::default().analysis().map_err(err)?;
    let truth = truth_notes(&p.score, &analysis);
    let mut used = vec![false; outcome.notes.len()];
    let mut recovered = 0;
    for t in &truth {
        if let Some(i) = (0..outcome.notes.len())
            .find(|&i| !used[i] && outcome.notes[i].bin.abs_diff(t.bin) <= 1 && 2 * outcome.notes[i].overlap(t) >= t.frames)
        {
            used[i] = true;
            recovered += 1;
        }
    }

    let joint = write_config(p.dir.path(), "joint.json", &pipeline_config(Task::Joint, 72))?;
    spectrans(&["datagen", "--config", s(&joint), "--out", s(&p.path("joint_data"))])?;
    spectrans(&["train-translator", "--dataset", s(&p.path("joint_data")), "--out", s(&p.path("joint_model"))])?;
    spectrans(&[
        "pitch-track",
        "--checkpoint",
        s(&p.path("joint_model")),
        "--input",
        s(&p.path("score.wav")),
        "--out",
        s(&p.path("joint_pt")),
    ])?;

    // Held-out pitch pairs rendered from scores neither model trained on.
    let eval_cfg = DatasetConfig { seed: 77, scores: 8, notes_per_score: 3, ..DatasetConfig::default() };
    let eval = generate_dataset(&eval_cfg, &analysis, 1).map_err(err)?;
    let pairs: Vec<(SpectroImage, SpectroImage)> = eval.pairs.iter().map(|q| (q.input.clone(), q.target.clone())).collect();
    let (dedicated, _) = load_generator(p.path("model/generator.params")).map_err(err)?;
    let (joint_gen, _) = load_generator(p.path("joint_model/generator.params")).map_err(err)?;
    let d_l1 = pitch_l1(&dedicated, &pairs)?;
    let j_l1 = pitch_l1(&joint_gen, &pairs)?;
    let ratio = j_l1 / d_l1;

    let total = seconds(started);
    let pass = recovered >= 2 && ratio <= 2.0 && total < 1200.0;
    Ok(Verdict::new(
        pass,
        format!(
            "recovered {recovered}/3 notes (≥2; {} predicted); held-out pitch L1 dedicated {d_l1:.3} %, joint {j_l1:.3} %, \
             ratio {ratio:.2} (≤2, {} pairs); {total:.1} s total (<1200, this stage {:.1} s)",
            outcome.notes.len(),
            pairs.len(),
            seconds(start)
        ),
    ))
}

fn reconstruction_paths(p: &Pipeline) -> Check {
    let start = Instant::now();
    let root = p.dir.path();
    let mut restore = RunConfig::default();
    restore.task = Some(Task::Restore);
    restore.dataset.scores = 2;
    restore.generator.base_channels = 8;
    restore.train.steps = 30;
    restore.split.train_fraction = 1.0;
    let rcfg = write_config(root, "restore.json", &restore)?;
    spectrans(&["datagen", "--config", s(&rcfg), "--out", s(&root.join("restore_data"))])?;
    spectrans(&["train-translator", "--dataset", s(&root.join("restore_data")), "--out", s(&root.join("refiner"))])?;
    spectrans(&[
        "train-vocoder",
        "--dataset",
        s(&root.join("data")),
        "--translator",
        s(&root.join("model")),
        "--out",
        s(&root.join("vocoder")),
    ])?;

    let input = root.join("score.wav");
    let model = root.join("model");
    let n = spectrans_core::dsp::read_wav(&input).map_err(err)?.len();
    let hop = RunConfig::default().analysis().map_err(err)?.hop();
    let mut parts = Vec::new();
    let mut ok = true;
    let mut gl_rate = 0.0;
    for (method, extra) in [
        ("gl", vec![]),
        ("gl2", vec!["--refiner".to_string(), root.join("refiner").display().to_string()]),
        ("vocoder", vec!["--vocoder".to_string(), root.join("vocoder").display().to_string()]),
    ] {
        let out = root.join(format!("translate_{method}"));
        let mut args = vec!["translate", "--checkpoint", s(&model), "--input", s(&input), "--method", method];
        args.extend(extra.iter().map(String::as_str));
        args.extend(["--out", s(&out)]);
        spectrans(&args)?;
        let wav = spectrans_core::dsp::read_wav(out.join("output.wav")).map_err(err)?;
        let report: TranslateReport = read_json(&out.join("report.json")).map_err(err)?;
        let good = wav.sample_rate_hz() == 16000 && wav.len().abs_diff(n) <= hop && report.samples == wav.len();
        ok &= good;
        if method == "gl" {
            gl_rate = report.realtime_factor;
        }
        parts.push(format!("{method} {} samples", wav.len()));
    }
    let pass = ok && gl_rate >= 0.1;
    Ok(Verdict::new(
        pass,
        format!(
            "input {n} samples; {} (within one hop, {hop}); gl realtime factor {gl_rate:.2}× (≥0.1×); {:.1} s",
            parts.join(", "),
            seconds(start)
        ),
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [&str; 9] = [
        "DSP suite",
        "gradient suite",
        "causality and receptive field",
        "translator toy tasks",
        "teacher-weighted generation",
        "vocoder overfit",
        "metric oracles",
        "end-to-end pitch tracking and joint model",
        "reconstruction paths",
    ];
    let mut pipeline: Option<Pipeline> = None;
    let mut pipeline_started = Instant::now();
    let mut unexpected = Vec::new();
    println!("acceptance: {} criteria", criteria.len());
    // ACCEPTANCE_ONLY=1,7 restricts the run to the listed criteria.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    for (i, name) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = match id {
            1 => dsp_suite(),
            2 => gradient_suite(),
            3 => causality_suite(),
            4 => translator_suite(),
            5 => teacher_suite(),
            6 => overfit_suite(),
            7 => metrics_suite(),
            8 | 9 => {
                if pipeline.is_none() {
                    pipeline_started = Instant::now();
                    match build_pipeline() {
                        Ok(p) => pipeline = Some(p),
                        Err(e) => {
                            report(id, name, start, &Err(e), &mut unexpected);
                            continue;
                        }
                    }
                }
                let p = pipeline.as_ref().expect("pipeline built");
                if id == 8 {
                    end_to_end(p, pipeline_started)
                } else {
                    reconstruction_paths(p)
                }
            }
            _ => unreachable!(),
        };
        report(id, name, start, &result, &mut unexpected);
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
    } else {
        println!("acceptance: unexpected failures in criteria {unexpected:?}");
        std::process::exit(1);
    }
}

fn report(id: usize, name: &str, start: Instant, result: &Check, unexpected: &mut Vec<usize>) {
    let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
    let (pass, explained, detail) = match result {
        Ok(v) => (v.pass, v.explained, v.detail.clone()),
        Err(e) => (false, false, format!("error: {e}")),
    };
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut line = format!("{tag} {id} {name} [{:.1} s]: {detail}", seconds(start));
    match (pass, known) {
        (false, Some(why)) if explained => line.push_str(&format!(" (known: {why})")),
        (false, _) => unexpected.push(id),
        (true, Some(_)) => line.push_str(" (listed as a known failure but passed)"),
        (true, None) => {}
    }
    println!("{line}");
}

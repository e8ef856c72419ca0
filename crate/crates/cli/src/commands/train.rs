use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spectrans_core::datagen::{load_dataset, manifest_dir, split_dataset, Pair, PairedDataset, Task};
use spectrans_core::dsp::{SpectroImage, Waveform};
use spectrans_core::metrics::EvalReport;
use spectrans_core::translator::{
    load_generator, save_generator, train, train_autoencoder_baseline, translate, Blend, Discriminator, Generator, History,
};
use spectrans_core::vocoder::{save_vocoder, train_vocoder as fit_vocoder, upsample_conditioning, ConditioningTrack, VocoderModel};

use super::{
    checkpoint_dir, checkpoint_file, produces_mel, Common, CASCADE_FILE, GENERATOR_FILE, HISTORY_FILE, SPLIT_FILE,
    SUMMARY_FILE, VOCODER_FILE,
};
use crate::config::RunConfig;
use crate::{config_err, create_dir, read_json, write_json, CliError};

/// Which scores and pairs a translator was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub train_fraction: f64,
    pub seed: u64,
    pub train_scores: Vec<usize>,
    pub held_out_scores: Vec<usize>,
    pub train_pairs: Vec<String>,
    pub held_out_pairs: Vec<String>,
}

/// Mean image measures of a trained generator on held-out pairs of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldOut {
    pub pairs: usize,
    pub l1_percent: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSummary {
    pub task: Task,
    pub baseline: bool,
    pub steps: usize,
    /// Mean L1 loss over the first and the last quarter of the steps.
    pub initial_quarter_l1: f64,
    pub final_quarter_l1: f64,
    /// Keyed by concrete task name (joint datasets report each part).
    pub held_out: BTreeMap<String, HeldOut>,
}

/// Pairs the vocoder was trained on and where their conditioning came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeRecord {
    /// `cascade` (translator predictions) or `ground_truth` (target images).
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translator: Option<String>,
    pub pairs: Vec<String>,
    pub final_loss: f64,
}

fn unique_scores(d: &PairedDataset) -> Vec<usize> {
    let mut s: Vec<usize> = d.pairs.iter().map(|p| p.score).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn ids(d: &PairedDataset) -> Vec<String> {
    d.pairs.iter().map(|p| p.id.clone()).collect()
}

fn quarter_means(values: &[f64]) -> (f64, f64) {
    let q = (values.len() / 4).max(1).min(values.len());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    (mean(&values[..q]), mean(&values[values.len() - q..]))
}

fn held_out_scores(gen: &Generator, held: &PairedDataset, jobs: usize) -> Result<BTreeMap<String, HeldOut>, CliError> {
    let mut by_task: BTreeMap<String, Vec<EvalReport>> = BTreeMap::new();
    for p in &held.pairs {
        let pred = translate(gen, &p.input, Blend::Crossfade, jobs)?;
        by_task.entry(p.task.name().to_string()).or_default().push(EvalReport::for_images(&pred, &p.target)?);
    }
    let mut out = BTreeMap::new();
    for (task, reports) in by_task {
        let mean = EvalReport::aggregate(&reports)?;
        out.insert(task, HeldOut { pairs: reports.len(), l1_percent: mean.l1_percent, ssim: mean.ssim });
    }
    Ok(out)
}

/// Train a translator (or, with `baseline`, the L1-only autoencoder) on the
/// dataset at `dataset`; the configured fraction of scores is held out.
pub fn train_translator(common: &Common, dataset: &Path, baseline: bool) -> Result<TrainSummary, CliError> {
    let cfg = common.resolve_config(Some(&manifest_dir(dataset)))?;
    let (data, manifest) = load_dataset(dataset, false)?;
    if manifest.task != cfg.dataset.task {
        return Err(config_err(format!(
            "dataset holds {} pairs but the configuration trains {}",
            manifest.task.name(),
            cfg.dataset.task.name()
        )));
    }
    let (g, img) = (&cfg.generator, &manifest.image);
    if img.input_channels != g.in_channels || img.target_channels != g.out_channels {
        return Err(config_err(format!(
            "channel mismatch: dataset {}→{}, generator {}→{}",
            img.input_channels, img.target_channels, g.in_channels, g.out_channels
        )));
    }
    if img.height != g.image_size || img.width < g.image_size {
        return Err(config_err(format!("dataset images are {}x{}, generator expects {}", img.height, img.width, g.image_size)));
    }
    create_dir(&common.out)?;

    let (train_set, held) = if cfg.split.train_fraction < 1.0 {
        split_dataset(&data, cfg.split.train_fraction, cfg.seeds.data)?
    } else {
        (data.clone(), data.with_scores(&[]))
    };
    let split = SplitRecord {
        train_fraction: cfg.split.train_fraction,
        seed: cfg.seeds.data,
        train_scores: unique_scores(&train_set),
        held_out_scores: unique_scores(&held),
        train_pairs: ids(&train_set),
        held_out_pairs: ids(&held),
    };
    write_json(&common.out.join(SPLIT_FILE), &split)?;

    let pairs: Vec<(&SpectroImage, &SpectroImage)> = train_set.pairs.iter().map(|p| (&p.input, &p.target)).collect();
    let path = common.out.join(GENERATOR_FILE);
    let t_cfg = cfg.train.clone();
    let mut hook = |_: usize, gen: &Generator, disc: Option<&Discriminator>, h: &History| save_generator(gen, disc, &t_cfg, h, &path);
    let (gen, history) = if baseline {
        train_autoencoder_baseline(&pairs, &cfg.generator, &cfg.train, &mut hook)?
    } else {
        let (gen, _, history) = train(&pairs, &cfg.generator, &cfg.discriminator, &cfg.train, &mut hook)?;
        (gen, history)
    };
    write_json(&common.out.join(HISTORY_FILE), &history)?;

    let (initial_quarter_l1, final_quarter_l1) = quarter_means(&history.loss_l1);
    let summary = TrainSummary {
        task: manifest.task,
        baseline,
        steps: history.len(),
        initial_quarter_l1,
        final_quarter_l1,
        held_out: held_out_scores(&gen, &held, common.jobs())?,
    };
    write_json(&common.out.join(SUMMARY_FILE), &summary)?;
    cfg.write_to(&common.out)?;
    eprintln!(
        "{} steps: L1 {:.4} → {:.4} (first/last quarter means); checkpoint {}",
        summary.steps,
        initial_quarter_l1,
        final_quarter_l1,
        path.display()
    );
    for (task, h) in &summary.held_out {
        eprintln!("held-out {task}: {} pairs, L1 {:.3} %, SSIM {:.3}", h.pairs, h.l1_percent, h.ssim);
    }
    Ok(summary)
}

fn clip(pair: &Pair, cond_image: &SpectroImage, cfg: &RunConfig) -> Result<(Waveform, ConditioningTrack), CliError> {
    let audio = pair
        .audio
        .as_ref()
        .ok_or_else(|| config_err(format!("pair {} has no audio", pair.id)))?;
    let cond = upsample_conditioning(cond_image, cfg.vocoder.hop, cfg.audio.sample_rate_hz)?;
    Ok((audio.target.with_len(cond.len()), cond))
}

/// Train the vocoder on (mel image, target audio) pairs of a dataset. With a
/// translator checkpoint the conditioning is that translator's prediction on
/// the pairs it did not train on (cascade training); otherwise it is the
/// ground-truth target image of every pair.
pub fn train_vocoder(common: &Common, dataset: &Path, translator: Option<&Path>) -> Result<CascadeRecord, CliError> {
    let cfg = common.resolve_config(Some(&manifest_dir(dataset)))?;
    let (data, manifest) = load_dataset(dataset, true)?;
    if !produces_mel(manifest.task) {
        return Err(config_err(format!("{} datasets have no mel targets to condition a vocoder", manifest.task.name())));
    }
    if manifest.image.height != cfg.vocoder.cond_channels {
        return Err(config_err(format!(
            "channel mismatch: {}-row images, vocoder conditions on {} channels",
            manifest.image.height, cfg.vocoder.cond_channels
        )));
    }

    let mut clips = Vec::new();
    let mut used = Vec::new();
    let translator_name = match translator {
        Some(t) => {
            let file = checkpoint_file(t, GENERATOR_FILE);
            let split: SplitRecord = read_json(&checkpoint_dir(&file).join(SPLIT_FILE))?;
            if split.held_out_pairs.is_empty() {
                return Err(config_err("the translator trained on every score; no held-out pairs for cascade training"));
            }
            let (gen, _) = load_generator(&file)?;
            if gen.config.in_channels != manifest.image.input_channels || gen.config.image_size != manifest.image.height {
                return Err(config_err(format!(
                    "channel mismatch: translator takes {}x{}, dataset images are {}x{}",
                    gen.config.in_channels, gen.config.image_size, manifest.image.input_channels, manifest.image.height
                )));
            }
            for p in data.pairs.iter().filter(|p| split.held_out_pairs.contains(&p.id)) {
                let pred = translate(&gen, &p.input, Blend::Crossfade, common.jobs())?;
                clips.push(clip(p, &pred, &cfg)?);
                used.push(p.id.clone());
            }
            if clips.is_empty() {
                return Err(config_err("none of the translator's held-out pairs are in this dataset"));
            }
            Some(file.display().to_string())
        }
        None => {
            for p in &data.pairs {
                clips.push(clip(p, &p.target, &cfg)?);
                used.push(p.id.clone());
            }
            None
        }
    };

    create_dir(&common.out)?;
    let mut model = VocoderModel::new(&cfg.vocoder, cfg.seeds.vocoder)?;
    let path = common.out.join(VOCODER_FILE);
    let v_cfg = cfg.vocoder_train.clone();
    let mut hook = |_: usize, m: &VocoderModel, h: &[f64]| save_vocoder(m, &v_cfg, h, &path);
    let history = fit_vocoder(&mut model, &clips, &cfg.vocoder_train, &mut hook)?;
    write_json(&common.out.join(HISTORY_FILE), &history)?;

    let record = CascadeRecord {
        mode: if translator_name.is_some() { "cascade" } else { "ground_truth" }.to_string(),
        translator: translator_name,
        pairs: used,
        final_loss: history.last().copied().unwrap_or(f64::NAN),
    };
    write_json(&common.out.join(CASCADE_FILE), &record)?;
    cfg.write_to(&common.out)?;
    eprintln!(
        "vocoder trained on {} clips ({}); final loss {:.4}; checkpoint {}",
        record.pairs.len(),
        record.mode,
        record.final_loss,
        path.display()
    );
    Ok(record)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spectrans_autodiff::{adam_step, AdamState, Graph, Tensor, Var};

use super::{Discriminator, Generator, PatchDiscConfig, UNetConfig};
use crate::dsp::SpectroImage;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda_l1: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub dropout_p: f64,
    /// Checkpoint interval in steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 100.0,
            lr_g: 2e-4,
            lr_d: 2e-4,
            batch_size: 1,
            steps: 500,
            seed: 1,
            dropout_p: 0.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0) || !(self.lr_g > 0.0) || !(self.lr_d > 0.0) {
            return Err(Error::Config("lambda_l1 must be >= 0 and learning rates > 0".into()));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config("dropout_p must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Losses of one training step; the discriminator terms are absent for the
/// L1-only baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub loss_d: Option<f64>,
    pub loss_adv: Option<f64>,
    pub loss_l1: f64,
}

/// Per-step loss arrays.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub loss_d: Vec<f64>,
    pub loss_adv: Vec<f64>,
    pub loss_l1: Vec<f64>,
}

impl History {
    pub fn push(&mut self, l: StepLosses) {
        if let Some(d) = l.loss_d {
            self.loss_d.push(d);
        }
        if let Some(a) = l.loss_adv {
            self.loss_adv.push(a);
        }
        self.loss_l1.push(l.loss_l1);
    }

    pub fn len(&self) -> usize {
        self.loss_l1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_l1.is_empty()
    }
}

/// Optimiser state of a generator/discriminator pair.
pub struct Trainer {
    pub opt_g: AdamState,
    pub opt_d: Option<AdamState>,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(g: &Generator, d: Option<&Discriminator>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            opt_g: AdamState::new(&g.params, config.lr_g),
            opt_d: d.map(|d| AdamState::new(&d.params, config.lr_d)),
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0xd0_0d),
        })
    }
}

fn batch_tensor(images: &[&SpectroImage]) -> Result<Tensor> {
    let (c, h, w) = images[0].shape();
    let mut values = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if img.shape() != (c, h, w) {
            return Err(Error::Contract(format!("batch mixes shapes {:?} and {:?}", img.shape(), (c, h, w))));
        }
        values.extend_from_slice(img.pixels());
    }
    Ok(Tensor::new(&[images.len(), c, h, w], values)?)
}

fn check_batch(g: &Generator, batch: &[(&SpectroImage, &SpectroImage)]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let c = &g.config;
    for (x, y) in batch {
        let want_x = (c.in_channels, c.image_size, c.image_size);
        let want_y = (c.out_channels, c.image_size, c.image_size);
        if x.shape() != want_x || y.shape() != want_y {
            return Err(Error::Contract(format!(
                "pair shapes {:?} -> {:?}, generator wants {want_x:?} -> {want_y:?}",
                x.shape(),
                y.shape()
            )));
        }
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} became non-finite")))
    }
}

fn squared_error_to(g: &mut Graph, scores: Var, target: f64) -> Result<Var> {
    let t = g.constant(Tensor::full(g.shape(scores), target));
    Ok(g.mse_loss(scores, t)?)
}

/// Least-squares discriminator loss ½[mean (D(x,y)−1)² + mean D(x,G(x))²].
pub fn ls_discriminator_loss(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let lr = squared_error_to(g, real_scores, 1.0)?;
    let lf = squared_error_to(g, fake_scores, 0.0)?;
    let sum = g.add(lr, lf)?;
    Ok(g.scale(sum, 0.5))
}

/// Least-squares generator loss ½ mean (D(x,G(x))−1)².
pub fn ls_generator_loss(g: &mut Graph, fake_scores: Var) -> Result<Var> {
    let l = squared_error_to(g, fake_scores, 1.0)?;
    Ok(g.scale(l, 0.5))
}

fn batch_tensors(gen: &Generator, batch: &[(&SpectroImage, &SpectroImage)]) -> Result<(Tensor, Tensor)> {
    check_batch(gen, batch)?;
    let xs: Vec<&SpectroImage> = batch.iter().map(|p| p.0).collect();
    let ys: Vec<&SpectroImage> = batch.iter().map(|p| p.1).collect();
    Ok((batch_tensor(&xs)?, batch_tensor(&ys)?))
}

/// Discriminator update against the current (frozen) generator; returns the
/// discriminator loss before the update.
pub fn discriminator_phase(
    gen: &Generator,
    disc: &mut Discriminator,
    trainer: &mut Trainer,
    batch: &[(&SpectroImage, &SpectroImage)],
) -> Result<f64> {
    let (x_t, y_t) = batch_tensors(gen, batch)?;
    let dropout_p = trainer.config.dropout_p;
    let opt_d = trainer
        .opt_d
        .as_mut()
        .ok_or_else(|| Error::Contract("trainer has no discriminator state".into()))?;
    let mut g = Graph::new();
    let x = g.constant(x_t);
    let y = g.constant(y_t);
    let fake = gen.forward(&mut g, x, true, Some((dropout_p, &mut trainer.rng)))?;
    let real_pair = g.concat(&[x, y], 1)?;
    let fake_pair = g.concat(&[x, fake], 1)?;
    let real_scores = disc.forward(&mut g, real_pair, false)?;
    let fake_scores = disc.forward(&mut g, fake_pair, false)?;
    let loss = ls_discriminator_loss(&mut g, real_scores, fake_scores)?;
    let value = finite(g.value(loss).item(), "discriminator loss")?;
    g.backward(loss, &mut [&mut disc.params])?;
    adam_step(&mut disc.params, opt_d)?;
    Ok(value)
}

/// Generator update against a frozen discriminator (λ·L1 only without one);
/// returns (adversarial loss, L1 loss) before the update.
pub fn generator_phase(
    gen: &mut Generator,
    disc: Option<&Discriminator>,
    trainer: &mut Trainer,
    batch: &[(&SpectroImage, &SpectroImage)],
) -> Result<(Option<f64>, f64)> {
    let (x_t, y_t) = batch_tensors(gen, batch)?;
    let (lambda, dropout_p) = (trainer.config.lambda_l1, trainer.config.dropout_p);
    let mut g = Graph::new();
    let x = g.constant(x_t);
    let y = g.constant(y_t);
    let fake = gen.forward(&mut g, x, false, Some((dropout_p, &mut trainer.rng)))?;
    let l1 = g.l1_loss(fake, y)?;
    let loss_l1 = finite(g.value(l1).item(), "L1 loss")?;
    let mut total = g.scale(l1, lambda);
    let mut loss_adv = None;
    if let Some(d) = disc {
        let pair = g.concat(&[x, fake], 1)?;
        let scores = d.forward(&mut g, pair, true)?;
        let adv = ls_generator_loss(&mut g, scores)?;
        loss_adv = Some(finite(g.value(adv).item(), "adversarial loss")?);
        total = g.add(total, adv)?;
    }
    finite(g.value(total).item(), "generator loss")?;
    g.backward(total, &mut [&mut gen.params])?;
    adam_step(&mut gen.params, &mut trainer.opt_g)?;
    Ok((loss_adv, loss_l1))
}

/// One alternating step: the discriminator update, then the generator
/// update against the updated, frozen discriminator. Without a
/// discriminator only the λ·L1 generator update runs.
pub fn train_step(
    gen: &mut Generator,
    mut disc: Option<&mut Discriminator>,
    trainer: &mut Trainer,
    batch: &[(&SpectroImage, &SpectroImage)],
) -> Result<StepLosses> {
    let loss_d = match disc.as_deref_mut() {
        Some(d) => Some(discriminator_phase(gen, d, trainer, batch)?),
        None => None,
    };
    let (loss_adv, loss_l1) = generator_phase(gen, disc.as_deref(), trainer, batch)?;
    Ok(StepLosses { loss_d, loss_adv, loss_l1 })
}

/// Training progress callback: `(step, generator, history)` every
/// `checkpoint_every` steps and after the last step; with periodic
/// checkpoints enabled it also sees the untrained networks at step 0.
pub type CheckpointHook<'a> = dyn FnMut(usize, &Generator, Option<&Discriminator>, &History) -> Result<()> + 'a;

fn check_data(data: &[(&SpectroImage, &SpectroImage)], g_cfg: &UNetConfig) -> Result<()> {
    let Some((x, y)) = data.first() else {
        return Err(Error::Config("training set is empty".into()));
    };
    if x.channels() != g_cfg.in_channels || y.channels() != g_cfg.out_channels {
        return Err(Error::Config(format!(
            "dataset has {} -> {} channels, generator is configured for {} -> {}",
            x.channels(),
            y.channels(),
            g_cfg.in_channels,
            g_cfg.out_channels
        )));
    }
    if x.height() != g_cfg.image_size || x.width() != g_cfg.image_size {
        return Err(Error::Config(format!(
            "dataset images are {}x{}, generator is configured for {}",
            x.height(),
            x.width(),
            g_cfg.image_size
        )));
    }
    Ok(())
}

fn run(
    data: &[(&SpectroImage, &SpectroImage)],
    mut gen: Generator,
    mut disc: Option<Discriminator>,
    t_cfg: &TrainConfig,
    hook: &mut CheckpointHook<'_>,
) -> Result<(Generator, Option<Discriminator>, History)> {
    let mut trainer = Trainer::new(&gen, disc.as_ref(), t_cfg)?;
    let mut history = History::default();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    if t_cfg.checkpoint_every > 0 {
        hook(0, &gen, disc.as_ref(), &history)?;
    }
    for step in 1..=t_cfg.steps {
        let mut batch = Vec::with_capacity(t_cfg.batch_size);
        while batch.len() < t_cfg.batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(t_cfg.seed.wrapping_add(epoch)));
                epoch += 1;
                cursor = 0;
            }
            batch.push(data[order[cursor]]);
            cursor += 1;
        }
        let losses = train_step(&mut gen, disc.as_mut(), &mut trainer, &batch)?;
        history.push(losses);
        if (t_cfg.checkpoint_every > 0 && step % t_cfg.checkpoint_every == 0) || step == t_cfg.steps {
            hook(step, &gen, disc.as_ref(), &history)?;
        }
    }
    Ok((gen, disc, history))
}

/// Adversarial training of a fresh generator/discriminator pair.
pub fn train(
    data: &[(&SpectroImage, &SpectroImage)],
    g_cfg: &UNetConfig,
    d_cfg: &PatchDiscConfig,
    t_cfg: &TrainConfig,
    hook: &mut CheckpointHook<'_>,
) -> Result<(Generator, Discriminator, History)> {
    check_data(data, g_cfg)?;
    if d_cfg.in_channels != g_cfg.in_channels + g_cfg.out_channels {
        return Err(Error::Config(format!(
            "discriminator sees {} channels but observation + candidate have {}",
            d_cfg.in_channels,
            g_cfg.in_channels + g_cfg.out_channels
        )));
    }
    let gen = Generator::new(g_cfg, t_cfg.seed)?;
    let disc = Discriminator::new(d_cfg, g_cfg.image_size, t_cfg.seed)?;
    let (gen, disc, history) = run(data, gen, Some(disc), t_cfg, hook)?;
    Ok((gen, disc.expect("discriminator kept"), history))
}

/// The generator trained on λ·L1 alone (no discriminator); same
/// initialisation as [`train`] for the same seed.
pub fn train_autoencoder_baseline(
    data: &[(&SpectroImage, &SpectroImage)],
    g_cfg: &UNetConfig,
    t_cfg: &TrainConfig,
    hook: &mut CheckpointHook<'_>,
) -> Result<(Generator, History)> {
    check_data(data, g_cfg)?;
    let gen = Generator::new(g_cfg, t_cfg.seed)?;
    let (gen, _, history) = run(data, gen, None, t_cfg, hook)?;
    Ok((gen, history))
}

/// No-op checkpoint hook.
pub fn no_checkpoints(_: usize, _: &Generator, _: Option<&Discriminator>, _: &History) -> Result<()> {
    Ok(())
}

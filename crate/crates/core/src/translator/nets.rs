use rand::Rng;
use serde::{Deserialize, Serialize};
use spectrans_autodiff::{Graph, ParamSet, Tensor, Var};

use crate::error::{Error, Result};

const LEAK: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;
/// Channel multiplier cap relative to the base width.
const MAX_MULT: usize = 8;

/// U-Net generator shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub image_size: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self { image_size: 64, depth: 4, base_channels: 32, kernel: 4, in_channels: 1, out_channels: 1 }
    }
}

impl UNetConfig {
    /// 256 x 256 images with 8 x 8 kernels.
    pub fn full_size() -> Self {
        Self { image_size: 256, depth: 8, base_channels: 64, kernel: 8, in_channels: 1, out_channels: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || !self.image_size.is_power_of_two() || self.image_size < (1 << self.depth) {
            return Err(Error::Config(format!(
                "image size {} must be a power of two of at least 2^depth (depth {})",
                self.image_size, self.depth
            )));
        }
        if self.kernel < 2 || self.kernel % 2 != 0 {
            return Err(Error::Config(format!("kernel {} must be even and at least 2", self.kernel)));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Channels of encoder level `i`.
    pub fn level_channels(&self, i: usize) -> usize {
        self.base_channels * (1usize << i.min(MAX_MULT.trailing_zeros() as usize))
    }

    pub fn bottleneck_size(&self) -> usize {
        self.image_size >> self.depth
    }
}

/// Patch discriminator shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchDiscConfig {
    pub layers: usize,
    pub base_channels: usize,
    pub kernel: usize,
    /// Observation channels plus candidate channels.
    pub in_channels: usize,
}

impl Default for PatchDiscConfig {
    fn default() -> Self {
        Self { layers: 3, base_channels: 32, kernel: 4, in_channels: 2 }
    }
}

impl PatchDiscConfig {
    pub fn validate(&self, image_size: usize) -> Result<()> {
        if self.layers == 0 || self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::Config("discriminator layers and channels must be positive".into()));
        }
        if self.kernel < 2 || self.kernel % 2 != 0 {
            return Err(Error::Config(format!("kernel {} must be even and at least 2", self.kernel)));
        }
        if image_size >> self.layers == 0 || image_size % (1 << self.layers) != 0 {
            return Err(Error::Config(format!(
                "{} stride-2 layers do not fit a {image_size}-pixel image",
                self.layers
            )));
        }
        Ok(())
    }

    /// Output channels of layer `i` (the last layer emits one score channel).
    pub fn layer_channels(&self, i: usize) -> usize {
        if i + 1 == self.layers {
            1
        } else {
            self.base_channels * (1usize << i.min(MAX_MULT.trailing_zeros() as usize))
        }
    }

    pub fn score_size(&self, image_size: usize) -> usize {
        image_size >> self.layers
    }

    /// Closed-form parameter count (weights plus biases).
    pub fn parameter_count(&self) -> usize {
        let mut cin = self.in_channels;
        let mut total = 0;
        for i in 0..self.layers {
            let cout = self.layer_channels(i);
            total += cout * cin * self.kernel * self.kernel + cout;
            cin = cout;
        }
        total
    }
}

fn stride2_pad(kernel: usize) -> usize {
    kernel / 2 - 1
}

fn read(g: &mut Graph, set: &ParamSet, i: usize, frozen: bool) -> Var {
    if frozen {
        g.param_frozen(set, i)
    } else {
        g.param(set, i)
    }
}

/// Stable per-layer initialisation seed.
fn layer_seed(seed: u64, net: u64, layer: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (net << 32) ^ layer as u64
}

/// U-Net: `depth` stride-2 convolutions down, mirrored transposed
/// convolutions up, skip concatenation between mirrored levels, tanh output.
#[derive(Clone, Debug)]
pub struct Generator {
    pub config: UNetConfig,
    pub params: ParamSet,
    /// (weight, bias) indices of encoder levels.
    enc: Vec<(usize, usize)>,
    /// (weight, bias) indices of decoder levels, outermost last.
    dec: Vec<(usize, usize)>,
}

impl Generator {
    pub fn new(config: &UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut params = ParamSet::new();
        let mut enc = Vec::with_capacity(config.depth);
        let mut cin = config.in_channels;
        for i in 0..config.depth {
            let cout = config.level_channels(i);
            let fan_in = cin * k * k;
            let s = layer_seed(seed, 1, i);
            let w = params.add_uniform(format!("enc{i}.w"), &[cout, cin, k, k], fan_in, s);
            let b = params.add_uniform(format!("enc{i}.b"), &[cout], fan_in, s ^ 0xb1a5);
            enc.push((w, b));
            cin = cout;
        }
        // decoder level j maps level (depth-1-j) features up to level (depth-2-j)
        let mut dec = Vec::with_capacity(config.depth);
        for j in 0..config.depth {
            let level = config.depth - 1 - j;
            let from = if j == 0 { config.level_channels(level) } else { 2 * config.level_channels(level) };
            let to = if level == 0 { config.out_channels } else { config.level_channels(level - 1) };
            let fan_in = from * k * k / 4;
            let s = layer_seed(seed, 2, j);
            let w = params.add_uniform(format!("dec{j}.w"), &[from, to, k, k], fan_in, s);
            let b = params.add_uniform(format!("dec{j}.b"), &[to], fan_in, s ^ 0xb1a5);
            dec.push((w, b));
        }
        Ok(Self { config: config.clone(), params, enc, dec })
    }

    /// Forward pass on `[N, in_channels, S, S]`. `frozen` reads parameters
    /// without gradient tracking; dropout applies to the inner decoder levels.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        x: Var,
        frozen: bool,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var> {
        let c = &self.config;
        let s = c.image_size;
        let shape = g.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != c.in_channels || shape[2] != s || shape[3] != s {
            return Err(Error::Contract(format!(
                "generator expects [N, {}, {s}, {s}], got {shape:?}",
                c.in_channels
            )));
        }
        let pad = stride2_pad(c.kernel);
        let mut skips = Vec::with_capacity(c.depth);
        let mut h = x;
        for (i, &(wi, bi)) in self.enc.iter().enumerate() {
            if i > 0 {
                h = g.leaky_relu(h, LEAK);
            }
            let w = read(g, &self.params, wi, frozen);
            let b = read(g, &self.params, bi, frozen);
            h = g.conv2d(h, w, Some(b), 2, pad)?;
            if i > 0 && s >> (i + 1) > 1 {
                h = g.instance_norm(h, NORM_EPS)?;
            }
            skips.push(h);
        }
        let mut dropout = dropout;
        for (j, &(wi, bi)) in self.dec.iter().enumerate() {
            let level = c.depth - 1 - j;
            h = g.relu(h);
            let w = read(g, &self.params, wi, frozen);
            let b = read(g, &self.params, bi, frozen);
            h = g.conv_transpose2d(h, w, Some(b), 2, pad)?;
            if level == 0 {
                break;
            }
            h = g.instance_norm(h, NORM_EPS)?;
            if j < 3 {
                if let Some((p, rng)) = dropout.as_mut() {
                    h = g.dropout(h, *p, *rng)?;
                }
            }
            h = g.concat(&[h, skips[level - 1]], 1)?;
        }
        Ok(g.tanh(h))
    }

    /// Inference on a batch of flattened `[in_channels, S, S]` images.
    pub fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let c = &self.config;
        let n = batch.len();
        let per = c.in_channels * c.image_size * c.image_size;
        let mut values = Vec::with_capacity(n * per);
        for b in batch {
            if b.len() != per {
                return Err(Error::Contract(format!("image has {} values, generator expects {per}", b.len())));
            }
            values.extend_from_slice(b);
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[n, c.in_channels, c.image_size, c.image_size], values)?);
        let y = self.forward::<rand_chacha::ChaCha8Rng>(&mut g, x, true, None)?;
        let out = g.value(y).values();
        let per_out = out.len() / n.max(1);
        Ok(out.chunks(per_out.max(1)).map(<[f64]>::to_vec).collect())
    }
}

/// Patch discriminator over (observation ‖ candidate); no normalisation, so
/// each score depends only on its receptive field.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub config: PatchDiscConfig,
    pub params: ParamSet,
    layers: Vec<(usize, usize)>,
}

impl Discriminator {
    pub fn new(config: &PatchDiscConfig, image_size: usize, seed: u64) -> Result<Self> {
        config.validate(image_size)?;
        let k = config.kernel;
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(config.layers);
        let mut cin = config.in_channels;
        for i in 0..config.layers {
            let cout = config.layer_channels(i);
            let fan_in = cin * k * k;
            let s = layer_seed(seed, 3, i);
            let w = params.add_uniform(format!("d{i}.w"), &[cout, cin, k, k], fan_in, s);
            let b = params.add_uniform(format!("d{i}.b"), &[cout], fan_in, s ^ 0xb1a5);
            layers.push((w, b));
            cin = cout;
        }
        Ok(Self { config: config.clone(), params, layers })
    }

    /// Score map `[N, 1, S / 2^layers, S / 2^layers]` for `[N, in_channels, S, S]`.
    pub fn forward(&self, g: &mut Graph, xy: Var, frozen: bool) -> Result<Var> {
        let shape = g.shape(xy).to_vec();
        if shape.len() != 4 || shape[1] != self.config.in_channels {
            return Err(Error::Contract(format!(
                "discriminator expects [N, {}, S, S], got {shape:?}",
                self.config.in_channels
            )));
        }
        let pad = stride2_pad(self.config.kernel);
        let mut h = xy;
        for (i, &(wi, bi)) in self.layers.iter().enumerate() {
            let w = read(g, &self.params, wi, frozen);
            let b = read(g, &self.params, bi, frozen);
            h = g.conv2d(h, w, Some(b), 2, pad)?;
            if i + 1 < self.layers.len() {
                h = g.leaky_relu(h, LEAK);
            }
        }
        Ok(h)
    }
}

use std::collections::VecDeque;

use spectrans_autodiff::{Graph, ParamSet, Tensor, Var};

use super::{ConditioningTrack, VocoderConfig};
use crate::error::{Error, Result};

/// Parameter indices of one dilated layer.
#[derive(Clone, Debug)]
struct Layer {
    dilation: usize,
    /// `[2R, R, K]` filter/gate convolution and its bias.
    w: usize,
    b: usize,
    /// `[2R, C, 1]` conditioning projection.
    cond: usize,
    /// `[R, R, 1]` residual projection; the last layer has none.
    res: Option<(usize, usize)>,
    /// `[S, R, 1]` skip projection.
    skip: (usize, usize),
}

/// Conditioned autoregressive waveform model over μ-law classes. Position
/// `t` of the input sequence carries the class of the previous sample; the
/// logits at `t` describe sample `t`.
#[derive(Clone, Debug)]
pub struct VocoderModel {
    pub config: VocoderConfig,
    pub params: ParamSet,
    input: (usize, usize),
    layers: Vec<Layer>,
    head1: (usize, usize),
    head2: (usize, usize),
}

fn seeded(seed: u64, a: u64, b: usize) -> u64 {
    crate::datagen::derive_seed(seed, a, b as u64)
}

impl VocoderModel {
    /// Fresh model; the output head starts at zero so every class is
    /// equally likely before training.
    pub fn new(config: &VocoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let (r, s, k) = (c.residual_channels, c.skip_channels, c.kernel);
        let mut p = ParamSet::new();
        let input = (
            p.add_uniform("in.w", &[r, c.classes, 1], 1, seeded(seed, 1, 0)),
            p.add_zeros("in.b", &[r]),
        );
        let mut layers = Vec::new();
        let total = c.cycles * c.layers_per_cycle;
        for i in 0..total {
            let dilation = 1 << (i % c.layers_per_cycle);
            let fan = r * k;
            let w = p.add_uniform(format!("l{i}.w"), &[2 * r, r, k], fan, seeded(seed, 2, i));
            let b = p.add_zeros(format!("l{i}.b"), &[2 * r]);
            let cond = p.add_uniform(format!("l{i}.cond"), &[2 * r, c.cond_channels, 1], c.cond_channels, seeded(seed, 3, i));
            let res = (i + 1 < total).then(|| {
                (
                    p.add_uniform(format!("l{i}.res.w"), &[r, r, 1], r, seeded(seed, 4, i)),
                    p.add_zeros(format!("l{i}.res.b"), &[r]),
                )
            });
            let skip = (
                p.add_uniform(format!("l{i}.skip.w"), &[s, r, 1], r, seeded(seed, 5, i)),
                p.add_zeros(format!("l{i}.skip.b"), &[s]),
            );
            layers.push(Layer { dilation, w, b, cond, res, skip });
        }
        let head1 = (
            p.add_uniform("head1.w", &[s, s, 1], s, seeded(seed, 6, 0)),
            p.add_zeros("head1.b", &[s]),
        );
        let head2 = (p.add_zeros("head2.w", &[c.classes, s, 1]), p.add_zeros("head2.b", &[c.classes]));
        Ok(Self { config: config.clone(), params: p, input, layers, head1, head2 })
    }

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    fn leaf(&self, g: &mut Graph, i: usize, frozen: bool) -> Var {
        if frozen {
            g.param_frozen(&self.params, i)
        } else {
            g.param(&self.params, i)
        }
    }

    fn check_lengths(&self, inputs: usize, cond: &ConditioningTrack, start: usize) -> Result<()> {
        if cond.channels() != self.config.cond_channels {
            return Err(Error::Contract(format!(
                "conditioning has {} channels, model expects {}",
                cond.channels(),
                self.config.cond_channels
            )));
        }
        if start + inputs > cond.len() {
            return Err(Error::Contract(format!(
                "conditioning covers {} samples, {} needed",
                cond.len(),
                start + inputs
            )));
        }
        Ok(())
    }

    /// Logits `[1, classes, T]` for input classes `inputs` (previous-sample
    /// classes) and conditioning columns `start..start + T`.
    pub fn logits(
        &self,
        g: &mut Graph,
        inputs: &[usize],
        cond: &ConditioningTrack,
        start: usize,
        frozen: bool,
    ) -> Result<Var> {
        self.check_lengths(inputs.len(), cond, start)?;
        let c = &self.config;
        let t = inputs.len();
        let mut one_hot = vec![0.0; c.classes * t];
        for (i, &class) in inputs.iter().enumerate() {
            if class >= c.classes {
                return Err(Error::Contract(format!("input class {class} out of range")));
            }
            one_hot[class * t + i] = 1.0;
        }
        let x = g.constant(Tensor::new(&[1, c.classes, t], one_hot)?);
        let cv = g.constant(Tensor::new(&[1, c.cond_channels, t], cond.window(start, t))?);
        let (w, b) = (self.leaf(g, self.input.0, frozen), self.leaf(g, self.input.1, frozen));
        let mut h = g.causal_conv1d(x, w, Some(b), 1)?;
        let mut skips: Option<Var> = None;
        for layer in &self.layers {
            let w = self.leaf(g, layer.w, frozen);
            let b = self.leaf(g, layer.b, frozen);
            let wc = self.leaf(g, layer.cond, frozen);
            let z = g.causal_conv1d(h, w, Some(b), layer.dilation)?;
            let zc = g.causal_conv1d(cv, wc, None, 1)?;
            let z = g.add(z, zc)?;
            let gated = g.gated_activation(z)?;
            let (sw, sb) = (self.leaf(g, layer.skip.0, frozen), self.leaf(g, layer.skip.1, frozen));
            let skip = g.causal_conv1d(gated, sw, Some(sb), 1)?;
            skips = Some(match skips {
                Some(acc) => g.add(acc, skip)?,
                None => skip,
            });
            if let Some((rw, rb)) = layer.res {
                let (rw, rb) = (self.leaf(g, rw, frozen), self.leaf(g, rb, frozen));
                let res = g.causal_conv1d(gated, rw, Some(rb), 1)?;
                h = g.add(h, res)?;
            }
        }
        let s = g.relu(skips.expect("at least one layer"));
        let (w1, b1) = (self.leaf(g, self.head1.0, frozen), self.leaf(g, self.head1.1, frozen));
        let s = g.causal_conv1d(s, w1, Some(b1), 1)?;
        let s = g.relu(s);
        let (w2, b2) = (self.leaf(g, self.head2.0, frozen), self.leaf(g, self.head2.1, frozen));
        Ok(g.causal_conv1d(s, w2, Some(b2), 1)?)
    }

    /// Incremental evaluator that consumes one input class at a time.
    pub fn stream(&self) -> Stream<'_> {
        let r = self.config.residual_channels;
        let history = self
            .layers
            .iter()
            .map(|l| {
                let span = l.dilation * (self.config.kernel - 1) + 1;
                VecDeque::from(vec![vec![0.0; r]; span])
            })
            .collect();
        Stream { model: self, history }
    }
}

/// `out = W x + b` for a `[rows, cols, 1]` weight.
fn affine(w: &Tensor, b: Option<&Tensor>, x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    let wv = w.values();
    for (o, row) in out.iter_mut().zip(wv.chunks(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    if let Some(b) = b {
        out.iter_mut().zip(b.values()).for_each(|(o, b)| *o += b);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sample-by-sample evaluation with per-layer history buffers; agrees with
/// [`VocoderModel::logits`] position by position.
pub struct Stream<'a> {
    model: &'a VocoderModel,
    /// Per layer, the last `dilation·(K−1)+1` layer inputs, oldest first.
    history: Vec<VecDeque<Vec<f64>>>,
}

impl Stream<'_> {
    /// Logits for the next sample given the previous sample's class and the
    /// conditioning column for this position.
    pub fn step(&mut self, input: usize, cond: &[f64]) -> Vec<f64> {
        let m = self.model;
        let c = &m.config;
        let (r, s, k) = (c.residual_channels, c.skip_channels, c.kernel);
        let p = &m.params;
        let win = p.tensor(m.input.0).values();
        let mut h: Vec<f64> = (0..r).map(|o| win[o * c.classes + input]).collect();
        h.iter_mut().zip(p.tensor(m.input.1).values()).for_each(|(v, b)| *v += b);

        let mut skip_sum = vec![0.0; s];
        let mut z = vec![0.0; 2 * r];
        let mut zc = vec![0.0; 2 * r];
        let mut skip = vec![0.0; s];
        let mut res = vec![0.0; r];
        for (layer, hist) in m.layers.iter().zip(&mut self.history) {
            hist.pop_front();
            hist.push_back(h.clone());
            let w = p.tensor(layer.w).values();
            z.copy_from_slice(p.tensor(layer.b).values());
            for (o, zo) in z.iter_mut().enumerate() {
                for tap in 0..k {
                    // tap k-1 is the current position, tap j lags by d·(k-1-j)
                    let x = &hist[hist.len() - 1 - layer.dilation * (k - 1 - tap)];
                    for (ci, xv) in x.iter().enumerate() {
                        *zo += w[(o * r + ci) * k + tap] * xv;
                    }
                }
            }
            affine(p.tensor(layer.cond), None, cond, &mut zc);
            z.iter_mut().zip(&zc).for_each(|(a, b)| *a += b);
            let gated: Vec<f64> = (0..r).map(|i| z[i].tanh() * sigmoid(z[r + i])).collect();
            affine(p.tensor(layer.skip.0), Some(p.tensor(layer.skip.1)), &gated, &mut skip);
            skip_sum.iter_mut().zip(&skip).for_each(|(a, b)| *a += b);
            if let Some((rw, rb)) = layer.res {
                affine(p.tensor(rw), Some(p.tensor(rb)), &gated, &mut res);
                h.iter_mut().zip(&res).for_each(|(a, b)| *a += b);
            }
        }
        skip_sum.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut hidden = vec![0.0; s];
        affine(p.tensor(m.head1.0), Some(p.tensor(m.head1.1)), &skip_sum, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = vec![0.0; c.classes];
        affine(p.tensor(m.head2.0), Some(p.tensor(m.head2.1)), &hidden, &mut logits);
        logits
    }
}

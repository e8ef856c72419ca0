//! Tape of recorded operations and the reverse sweep over it.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{shape_err, AutodiffError, Result};
use crate::kernels::{self, conv_out, gemm, Geom2d, Layout};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Origin {
    Computed,
    Input,
    Param { set: u64, index: usize },
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Conv2d { x: usize, w: usize, b: Option<usize>, stride: usize, pad: usize },
    ConvT2d { x: usize, w: usize, b: Option<usize>, stride: usize, pad: usize },
    CausalConv1d { x: usize, w: usize, b: Option<usize>, dilation: usize },
    InstanceNorm { x: usize, inv_std: Vec<f64> },
    LeakyRelu { x: usize, alpha: f64 },
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Concat { xs: Vec<usize>, axis: usize },
    Dropout { x: usize, mask: Vec<f64> },
    Gated(usize),
    Sum(usize),
    Mean(usize),
    L1 { a: usize, b: usize },
    Mse { a: usize, b: usize },
    SoftmaxCe { logits: usize, targets: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    origin: Origin,
    requires_grad: bool,
}

/// Recorded computation. Node creation order is a topological order, so the
/// reverse sweep walks the node list backwards and visits each node once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of the input leaves that were created with `requires_grad`.
#[derive(Debug, Default)]
pub struct InputGrads {
    grads: HashMap<Var, Vec<f64>>,
}

impl InputGrads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(&v).map(Vec::as_slice)
    }
}

fn split3(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, origin: Origin, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: value.with_requires_grad(false),
            op,
            origin,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn computed(&mut self, value: Tensor, op: Op, parents: &[usize]) -> Var {
        let rg = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.push(value, op, Origin::Computed, rg)
    }

    /// Leaf holding `t`; gradients are reported back when `t.requires_grad()`.
    pub fn input(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, Origin::Input, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, Origin::Input, false)
    }

    /// Leaf bound to a parameter; its gradient is accumulated into `set` by `backward`.
    pub fn param(&mut self, set: &ParamSet, index: usize) -> Var {
        let t = set.tensor(index).clone();
        self.push(
            t,
            Op::Leaf,
            Origin::Param { set: set.id(), index },
            true,
        )
    }

    /// Parameter read without gradient tracking.
    pub fn param_frozen(&mut self, set: &ParamSet, index: usize) -> Var {
        let t = set.tensor(index).clone();
        self.push(t, Op::Leaf, Origin::Input, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn vals(&self, i: usize) -> &[f64] {
        self.nodes[i].value.values()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, &[sa, sb]));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let vals = self
            .vals(a.0)
            .iter()
            .zip(self.vals(b.0))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), vals).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let vals = self.vals(a.0).iter().map(|&x| f(x)).collect();
        Tensor::new(self.shape(a), vals).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_map(a, b, |x, y| x + y);
        Ok(self.computed(t, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_map(a, b, |x, y| x - y);
        Ok(self.computed(t, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_map(a, b, |x, y| x * y);
        Ok(self.computed(t, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.map(a, |x| x * c);
        self.computed(t, Op::Scale(a.0, c), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.max(0.0));
        self.computed(t, Op::Relu(a.0), &[a.0])
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let t = self.map(a, |x| if x > 0.0 { x } else { alpha * x });
        self.computed(t, Op::LeakyRelu { x: a.0, alpha }, &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::tanh);
        self.computed(t, Op::Tanh(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, sigmoid);
        self.computed(t, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.vals(a.0).iter().sum();
        self.computed(Tensor::scalar(s), Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.vals(a.0);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.computed(Tensor::scalar(s), Op::Mean(a.0), &[a.0])
    }

    /// `tanh(x[:, :C]) * sigmoid(x[:, C:])` over the channel axis (axis 1) of width `2C`.
    pub fn gated_activation(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || shape[1] % 2 != 0 {
            return Err(shape_err("gated_activation", &[&shape]));
        }
        let (n, c2) = (shape[0], shape[1]);
        let c = c2 / 2;
        let inner: usize = shape[2..].iter().product();
        let xv = self.vals(x.0);
        let mut out = Vec::with_capacity(n * c * inner);
        for s in 0..n {
            let base = s * c2 * inner;
            let (a, g) = xv[base..base + c2 * inner].split_at(c * inner);
            out.extend(a.iter().zip(g).map(|(&a, &g)| a.tanh() * sigmoid(g)));
        }
        let mut oshape = shape.clone();
        oshape[1] = c;
        let t = Tensor::new(&oshape, out)?;
        Ok(self.computed(t, Op::Gated(x.0), &[x.0]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| AutodiffError::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", &[&base]));
        }
        let mut total = 0;
        for v in xs {
            let s = self.shape(*v);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                let shapes: Vec<&[usize]> = xs.iter().map(|v| self.shape(*v)).collect();
                return Err(shape_err("concat", &shapes));
            }
            total += s[axis];
        }
        let mut oshape = base.clone();
        oshape[axis] = total;
        let (outer, _, inner) = split3(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in xs {
                let len = self.shape(*v)[axis] * inner;
                out.extend_from_slice(&self.vals(v.0)[o * len..(o + 1) * len]);
            }
        }
        let t = Tensor::new(&oshape, out)?;
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.computed(t, Op::Concat { xs: ids.clone(), axis }, &ids))
    }

    /// Inverted dropout; `p == 0` returns `x` unchanged.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::Contract(format!("dropout p must be in [0,1), got {p}")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let vals = self.vals(x.0).iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::new(self.shape(x), vals)?;
        Ok(self.computed(t, Op::Dropout { x: x.0, mask }, &[x.0]))
    }

    /// Normalises each (sample, channel) plane of a `[N, C, ...]` tensor to zero mean, unit variance.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 3 {
            return Err(shape_err("instance_norm", &[&shape]));
        }
        let groups = shape[0] * shape[1];
        let size: usize = shape[2..].iter().product();
        let xv = self.vals(x.0);
        let mut out = vec![0.0; xv.len()];
        let mut inv_std = Vec::with_capacity(groups);
        for g in 0..groups {
            let src = &xv[g * size..(g + 1) * size];
            let mean = src.iter().sum::<f64>() / size as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / size as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in out[g * size..(g + 1) * size].iter_mut().zip(src) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let t = Tensor::new(&shape, out)?;
        Ok(self.computed(t, Op::InstanceNorm { x: x.0, inv_std }, &[x.0]))
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [channels] {
                return Err(shape_err(op, &[self.shape(b), &[channels]]));
            }
        }
        Ok(())
    }

    fn add_bias(&self, out: &mut [f64], b: Option<Var>, channels: usize, inner: usize) {
        if let Some(b) = b {
            let bv = self.vals(b.0);
            for (chunk, i) in out.chunks_mut(inner).zip((0..channels).cycle()) {
                chunk.iter_mut().for_each(|v| *v += bv[i]);
            }
        }
    }

    /// 2-d convolution; `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] {
            return Err(shape_err("conv2d", &[&xs, &ws]));
        }
        let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[0], ws[2]);
        self.check_bias("conv2d", b, cout)?;
        let (oh, ow) = match (conv_out(h, k, stride, pad), conv_out(wd, k, stride, pad)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(shape_err("conv2d", &[&xs, &ws])),
        };
        let g = Geom2d { channels: cin, height: h, width: wd, kernel: k, stride, pad, out_h: oh, out_w: ow };
        let mut out = vec![0.0; n * cout * oh * ow];
        let mut col = vec![0.0; g.rows() * g.cols()];
        let (xv, wv) = (self.vals(x.0), self.vals(w.0));
        for s in 0..n {
            kernels::im2col(&xv[s * cin * h * wd..(s + 1) * cin * h * wd], &g, &mut col);
            gemm(
                cout, g.rows(), g.cols(), 1.0,
                wv, Layout::row_major(g.rows()),
                &col, Layout::row_major(g.cols()),
                0.0, &mut out[s * cout * oh * ow..(s + 1) * cout * oh * ow],
            );
        }
        self.add_bias(&mut out, b, cout, oh * ow);
        let t = Tensor::new(&[n, cout, oh, ow], out)?;
        let mut parents = vec![x.0, w.0];
        parents.extend(b.map(|b| b.0));
        Ok(self.computed(t, Op::Conv2d { x: x.0, w: w.0, b: b.map(|b| b.0), stride, pad }, &parents))
    }

    /// Transposed 2-d convolution; `x: [N, Cin, H, W]`, `w: [Cin, Cout, k, k]`.
    /// Output side is `(H - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != xs[1] || ws[2] != ws[3] || stride == 0 {
            return Err(shape_err("conv_transpose2d", &[&xs, &ws]));
        }
        let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[1], ws[2]);
        self.check_bias("conv_transpose2d", b, cout)?;
        let oh = ((h - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0);
        let ow = ((wd - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(shape_err("conv_transpose2d", &[&xs, &ws])),
        };
        let g = Geom2d { channels: cout, height: oh, width: ow, kernel: k, stride, pad, out_h: h, out_w: wd };
        debug_assert_eq!(conv_out(oh, k, stride, pad), Some(h));
        let mut out = vec![0.0; n * cout * oh * ow];
        let mut col = vec![0.0; g.rows() * g.cols()];
        let (xv, wv) = (self.vals(x.0), self.vals(w.0));
        for s in 0..n {
            // col[Cout*k*k, H*W] = w^T[Cout*k*k, Cin] * x[Cin, H*W]
            gemm(
                g.rows(), cin, h * wd, 1.0,
                wv, Layout::transposed(g.rows()),
                &xv[s * cin * h * wd..(s + 1) * cin * h * wd], Layout::row_major(h * wd),
                0.0, &mut col,
            );
            kernels::col2im(&col, &g, &mut out[s * cout * oh * ow..(s + 1) * cout * oh * ow]);
        }
        self.add_bias(&mut out, b, cout, oh * ow);
        let t = Tensor::new(&[n, cout, oh, ow], out)?;
        let mut parents = vec![x.0, w.0];
        parents.extend(b.map(|b| b.0));
        Ok(self.computed(t, Op::ConvT2d { x: x.0, w: w.0, b: b.map(|b| b.0), stride, pad }, &parents))
    }

    /// Causal dilated 1-d convolution; `x: [N, Cin, T]`, `w: [Cout, Cin, K]`.
    /// Left-pads by `dilation * (K - 1)` so the output keeps length `T`.
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 3 || ws.len() != 3 || ws[1] != xs[1] || dilation == 0 {
            return Err(shape_err("causal_conv1d", &[&xs, &ws]));
        }
        let (n, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        self.check_bias("causal_conv1d", b, cout)?;
        let mut out = vec![0.0; n * cout * len];
        let (xv, wv) = (self.vals(x.0), self.vals(w.0));
        if k == 1 {
            for s in 0..n {
                gemm(
                    cout, cin, len, 1.0,
                    wv, Layout::row_major(cin),
                    &xv[s * cin * len..(s + 1) * cin * len], Layout::row_major(len),
                    0.0, &mut out[s * cout * len..(s + 1) * cout * len],
                );
            }
        } else {
            let mut col = vec![0.0; cin * k * len];
            for s in 0..n {
                kernels::causal_im2col(&xv[s * cin * len..(s + 1) * cin * len], cin, len, k, dilation, &mut col);
                gemm(
                    cout, cin * k, len, 1.0,
                    wv, Layout::row_major(cin * k),
                    &col, Layout::row_major(len),
                    0.0, &mut out[s * cout * len..(s + 1) * cout * len],
                );
            }
        }
        self.add_bias(&mut out, b, cout, len);
        let t = Tensor::new(&[n, cout, len], out)?;
        let mut parents = vec![x.0, w.0];
        parents.extend(b.map(|b| b.0));
        Ok(self.computed(t, Op::CausalConv1d { x: x.0, w: w.0, b: b.map(|b| b.0), dilation }, &parents))
    }

    /// Mean absolute difference. The subgradient at zero difference is 0.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_loss", a, b)?;
        let (av, bv) = (self.vals(a.0), self.vals(b.0));
        let s = av.iter().zip(bv).map(|(x, y)| (x - y).abs()).sum::<f64>() / av.len() as f64;
        Ok(self.computed(Tensor::scalar(s), Op::L1 { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse_loss", a, b)?;
        let (av, bv) = (self.vals(a.0), self.vals(b.0));
        let s = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / av.len() as f64;
        Ok(self.computed(Tensor::scalar(s), Op::Mse { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Mean cross-entropy of `logits: [N, K, T]` against class indices laid out as `n * T + t`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (n, k, len) = match shape.as_slice() {
            [n, k] => (*n, *k, 1),
            [n, k, t] => (*n, *k, *t),
            _ => return Err(shape_err("softmax_cross_entropy", &[&shape])),
        };
        if targets.len() != n * len {
            return Err(AutodiffError::Contract(format!(
                "softmax_cross_entropy: {} targets for {} positions",
                targets.len(),
                n * len
            )));
        }
        if let Some(bad) = targets.iter().find(|&&c| c >= k) {
            return Err(AutodiffError::Contract(format!(
                "class index {bad} out of range for {k} classes"
            )));
        }
        let lv = self.vals(logits.0);
        let mut probs = vec![0.0; lv.len()];
        let mut total = 0.0;
        for s in 0..n {
            for t in 0..len {
                let at = |c: usize| s * k * len + c * len + t;
                let max = (0..k).map(|c| lv[at(c)]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..k).map(|c| (lv[at(c)] - max).exp()).sum();
                for c in 0..k {
                    probs[at(c)] = (lv[at(c)] - max).exp() / z;
                }
                let target = targets[s * len + t];
                total += -(lv[at(target)] - max - z.ln());
            }
        }
        let loss = total / (n * len) as f64;
        Ok(self.computed(
            Tensor::scalar(loss),
            Op::SoftmaxCe { logits: logits.0, targets: targets.to_vec(), probs },
            &[logits.0],
        ))
    }

    /// Reverse sweep from the scalar `loss`. Parameter gradients are summed into
    /// the matching tensors of `sets`; leaves of other sets are left untouched.
    /// The graph is consumed.
    pub fn backward(self, loss: Var, sets: &mut [&mut ParamSet]) -> Result<InputGrads> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for set in sets.iter_mut() {
            set.ensure_grads();
        }
        let mut inputs = InputGrads::default();

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            match node.origin {
                Origin::Param { set, index } => {
                    if let Some(s) = sets.iter_mut().find(|s| s.id() == set) {
                        s.tensor_mut(index).accumulate_grad(&dy);
                    }
                    continue;
                }
                Origin::Input => {
                    inputs.grads.insert(Var(i), dy);
                    continue;
                }
                Origin::Computed => {}
            }
            backprop_node(&nodes, i, &dy, &mut grads)?;
        }
        Ok(inputs)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], idx: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[idx].requires_grad {
        return;
    }
    let len = nodes[idx].value.len();
    let buf = grads[idx].get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

fn backprop_node(nodes: &[Node], i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
    let node = &nodes[i];
    let val = |j: usize| nodes[j].value.values();
    let y = node.value.values();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |g| add_into(g, dy));
            accumulate(nodes, grads, *b, |g| add_into(g, dy));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |g| add_into(g, dy));
            accumulate(nodes, grads, *b, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g -= d));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |g| {
                g.iter_mut().zip(dy).zip(bv).for_each(|((g, d), b)| *g += d * b)
            });
            accumulate(nodes, grads, *b, |g| {
                g.iter_mut().zip(dy).zip(av).for_each(|((g, d), a)| *g += d * a)
            });
        }
        Op::Scale(a, c) => {
            accumulate(nodes, grads, *a, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d * c));
        }
        Op::Relu(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, |g| {
                for ((g, d), x) in g.iter_mut().zip(dy).zip(x) {
                    if *x > 0.0 {
                        *g += d;
                    }
                }
            });
        }
        Op::LeakyRelu { x, alpha } => {
            let xv = val(*x);
            accumulate(nodes, grads, *x, |g| {
                for ((g, d), x) in g.iter_mut().zip(dy).zip(xv) {
                    *g += if *x > 0.0 { *d } else { alpha * d };
                }
            });
        }
        Op::Tanh(a) => {
            accumulate(nodes, grads, *a, |g| {
                for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                    *g += d * (1.0 - y * y);
                }
            });
        }
        Op::Sigmoid(a) => {
            accumulate(nodes, grads, *a, |g| {
                for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                    *g += d * y * (1.0 - y);
                }
            });
        }
        Op::Sum(a) => {
            accumulate(nodes, grads, *a, |g| g.iter_mut().for_each(|g| *g += dy[0]));
        }
        Op::Mean(a) => {
            let n = nodes[*a].value.len() as f64;
            accumulate(nodes, grads, *a, |g| g.iter_mut().for_each(|g| *g += dy[0] / n));
        }
        Op::Gated(x) => {
            let shape = nodes[*x].value.shape();
            let (n, c2) = (shape[0], shape[1]);
            let c = c2 / 2;
            let inner: usize = shape[2..].iter().product();
            let xv = val(*x);
            accumulate(nodes, grads, *x, |g| {
                for s in 0..n {
                    let base = s * c2 * inner;
                    for j in 0..c * inner {
                        let a = xv[base + j].tanh();
                        let sg = sigmoid(xv[base + c * inner + j]);
                        let d = dy[s * c * inner + j];
                        g[base + j] += d * sg * (1.0 - a * a);
                        g[base + c * inner + j] += d * a * sg * (1.0 - sg);
                    }
                }
            });
        }
        Op::Concat { xs, axis } => {
            let (outer, total, inner) = split3(node.value.shape(), *axis);
            let mut offset = 0;
            for &p in xs {
                let len = nodes[p].value.shape()[*axis] * inner;
                accumulate(nodes, grads, p, |g| {
                    for o in 0..outer {
                        let src = &dy[o * total * inner + offset..o * total * inner + offset + len];
                        add_into(&mut g[o * len..(o + 1) * len], src);
                    }
                });
                offset += len;
            }
        }
        Op::Dropout { x, mask } => {
            accumulate(nodes, grads, *x, |g| {
                for ((g, d), m) in g.iter_mut().zip(dy).zip(mask) {
                    *g += d * m;
                }
            });
        }
        Op::InstanceNorm { x, inv_std } => {
            let shape = nodes[*x].value.shape();
            let size: usize = shape[2..].iter().product();
            accumulate(nodes, grads, *x, |g| {
                for (grp, is) in inv_std.iter().enumerate() {
                    let r = grp * size..(grp + 1) * size;
                    let (d, yy) = (&dy[r.clone()], &y[r.clone()]);
                    let md = d.iter().sum::<f64>() / size as f64;
                    let mdy = d.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / size as f64;
                    for ((g, d), yv) in g[r].iter_mut().zip(d).zip(yy) {
                        *g += is * (d - md - yv * mdy);
                    }
                }
            });
        }
        Op::L1 { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let scale = dy[0] / av.len() as f64;
            let sign = |x: f64, y: f64| {
                let d = x - y;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            };
            accumulate(nodes, grads, *a, |g| {
                for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                    *g += scale * sign(*x, *y);
                }
            });
            accumulate(nodes, grads, *b, |g| {
                for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                    *g -= scale * sign(*x, *y);
                }
            });
        }
        Op::Mse { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let scale = 2.0 * dy[0] / av.len() as f64;
            accumulate(nodes, grads, *a, |g| {
                for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                    *g += scale * (x - y);
                }
            });
            accumulate(nodes, grads, *b, |g| {
                for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                    *g -= scale * (x - y);
                }
            });
        }
        Op::SoftmaxCe { logits, targets, probs } => {
            let shape = nodes[*logits].value.shape();
            let (n, k) = (shape[0], shape[1]);
            let len = if shape.len() == 3 { shape[2] } else { 1 };
            let scale = dy[0] / (n * len) as f64;
            accumulate(nodes, grads, *logits, |g| {
                for (gv, p) in g.iter_mut().zip(probs) {
                    *gv += scale * p;
                }
                for s in 0..n {
                    for t in 0..len {
                        g[s * k * len + targets[s * len + t] * len + t] -= scale;
                    }
                }
            });
        }
        Op::Conv2d { x, w, b, stride, pad } => {
            let xs = nodes[*x].value.shape();
            let ws = nodes[*w].value.shape();
            let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
            let (cout, k) = (ws[0], ws[2]);
            let os = node.value.shape();
            let g = Geom2d { channels: cin, height: h, width: wd, kernel: k, stride: *stride, pad: *pad, out_h: os[2], out_w: os[3] };
            let (xv, wv) = (val(*x), val(*w));
            let plane_in = cin * h * wd;
            let plane_out = cout * g.cols();
            let mut col = vec![0.0; g.rows() * g.cols()];
            if nodes[*w].requires_grad {
                accumulate(nodes, grads, *w, |gw| {
                    for s in 0..n {
                        kernels::im2col(&xv[s * plane_in..(s + 1) * plane_in], &g, &mut col);
                        gemm(
                            cout, g.cols(), g.rows(), 1.0,
                            &dy[s * plane_out..(s + 1) * plane_out], Layout::row_major(g.cols()),
                            &col, Layout::transposed(g.cols()),
                            1.0, gw,
                        );
                    }
                });
            }
            if nodes[*x].requires_grad {
                accumulate(nodes, grads, *x, |gx| {
                    for s in 0..n {
                        gemm(
                            g.rows(), cout, g.cols(), 1.0,
                            wv, Layout::transposed(g.rows()),
                            &dy[s * plane_out..(s + 1) * plane_out], Layout::row_major(g.cols()),
                            0.0, &mut col,
                        );
                        kernels::col2im(&col, &g, &mut gx[s * plane_in..(s + 1) * plane_in]);
                    }
                });
            }
            if let Some(b) = b {
                accumulate(nodes, grads, *b, |gb| bias_grad(gb, dy, cout, g.cols()));
            }
        }
        Op::ConvT2d { x, w, b, stride, pad } => {
            let xs = nodes[*x].value.shape();
            let ws = nodes[*w].value.shape();
            let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
            let (cout, k) = (ws[1], ws[2]);
            let os = node.value.shape();
            let g = Geom2d { channels: cout, height: os[2], width: os[3], kernel: k, stride: *stride, pad: *pad, out_h: h, out_w: wd };
            let (xv, wv) = (val(*x), val(*w));
            let plane_in = cin * h * wd;
            let plane_out = cout * os[2] * os[3];
            let mut col = vec![0.0; g.rows() * g.cols()];
            let need_w = nodes[*w].requires_grad;
            let need_x = nodes[*x].requires_grad;
            let mut gw_buf = need_w.then(|| vec![0.0; wv.len()]);
            let mut gx_buf = need_x.then(|| vec![0.0; xv.len()]);
            if need_w || need_x {
                for s in 0..n {
                    kernels::im2col(&dy[s * plane_out..(s + 1) * plane_out], &g, &mut col);
                    if let Some(gw) = gw_buf.as_mut() {
                        // dW[Cin, Cout*k*k] += x[Cin, HW] * col^T
                        gemm(
                            cin, h * wd, g.rows(), 1.0,
                            &xv[s * plane_in..(s + 1) * plane_in], Layout::row_major(h * wd),
                            &col, Layout::transposed(g.cols()),
                            1.0, gw,
                        );
                    }
                    if let Some(gx) = gx_buf.as_mut() {
                        gemm(
                            cin, g.rows(), h * wd, 1.0,
                            wv, Layout::row_major(g.rows()),
                            &col, Layout::row_major(g.cols()),
                            0.0, &mut gx[s * plane_in..(s + 1) * plane_in],
                        );
                    }
                }
            }
            if let Some(gw) = gw_buf {
                accumulate(nodes, grads, *w, |t| add_into(t, &gw));
            }
            if let Some(gx) = gx_buf {
                accumulate(nodes, grads, *x, |t| add_into(t, &gx));
            }
            if let Some(b) = b {
                accumulate(nodes, grads, *b, |gb| bias_grad(gb, dy, cout, os[2] * os[3]));
            }
        }
        Op::CausalConv1d { x, w, b, dilation } => {
            let xs = nodes[*x].value.shape();
            let ws = nodes[*w].value.shape();
            let (n, cin, len) = (xs[0], xs[1], xs[2]);
            let (cout, k) = (ws[0], ws[2]);
            let (xv, wv) = (val(*x), val(*w));
            let mut col = vec![0.0; cin * k * len];
            if nodes[*w].requires_grad {
                accumulate(nodes, grads, *w, |gw| {
                    for s in 0..n {
                        let xs = &xv[s * cin * len..(s + 1) * cin * len];
                        let src: &[f64] = if k == 1 {
                            xs
                        } else {
                            kernels::causal_im2col(xs, cin, len, k, *dilation, &mut col);
                            &col
                        };
                        gemm(
                            cout, len, cin * k, 1.0,
                            &dy[s * cout * len..(s + 1) * cout * len], Layout::row_major(len),
                            src, Layout::transposed(len),
                            1.0, gw,
                        );
                    }
                });
            }
            if nodes[*x].requires_grad {
                accumulate(nodes, grads, *x, |gx| {
                    for s in 0..n {
                        let d = &dy[s * cout * len..(s + 1) * cout * len];
                        if k == 1 {
                            gemm(
                                cin, cout, len, 1.0,
                                wv, Layout::transposed(cin),
                                d, Layout::row_major(len),
                                1.0, &mut gx[s * cin * len..(s + 1) * cin * len],
                            );
                        } else {
                            gemm(
                                cin * k, cout, len, 1.0,
                                wv, Layout::transposed(cin * k),
                                d, Layout::row_major(len),
                                0.0, &mut col,
                            );
                            kernels::causal_col2im(&col, cin, len, k, *dilation, &mut gx[s * cin * len..(s + 1) * cin * len]);
                        }
                    }
                });
            }
            if let Some(b) = b {
                accumulate(nodes, grads, *b, |gb| bias_grad(gb, dy, cout, len));
            }
        }
    }
    Ok(())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn bias_grad(gb: &mut [f64], dy: &[f64], channels: usize, inner: usize) {
    for (chunk, c) in dy.chunks(inner).zip((0..channels).cycle()) {
        gb[c] += chunk.iter().sum::<f64>();
    }
}

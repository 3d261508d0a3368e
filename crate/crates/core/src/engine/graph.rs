//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes; inputs always precede their
//! consumers, so insertion order is a topological order and `backward` is a
//! single reverse sweep.

use super::kernels::{
    col2im_add, for_each_sample, im2col, lane_sum, lane_sum2, maxpool_margin, maxpool_plane, same_padding, ConvGeom,
    PoolGeom,
};
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Logits `(N,K,1,1)`, one label per sample.
    PerSampleMean,
    /// Logits `(N,K,H,W)`, one label per pixel.
    PerPixelMean,
}

/// Deliberate backward-pass defects, used only to prove the gradient checker
/// catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Conv2dInputGrad,
}

pub const BN_EPSILON: f64 = 1e-5;

/// Batch statistics produced by a train-mode batch norm, for the caller to
/// fold into its running averages.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
        geom: PoolGeom,
    },
    GlobalAvgPool {
        x: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    FullyConnected {
        x: Var,
        w: Var,
        b: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    BiasAdd {
        x: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    Dot {
        x: Var,
        coef: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv2d_transpose",
            Op::MaxPool { .. } => "maxpool2d",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Relu { .. } => "relu",
            Op::Add { .. } => "add",
            Op::Concat { .. } => "concat_channels",
            Op::FullyConnected { .. } => "fully_connected",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BiasAdd { .. } => "bias_add",
            Op::Sum { .. } => "sum",
            Op::Dot { .. } => "dot",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Computation graph over one precision.
pub struct Graph<T: Float> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    fault: Option<Fault>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            fault: None,
        }
    }

    pub fn set_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert!(value.is_finite(), "non-finite output from {}", op.name());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Named trainable leaf.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Var {
        let v = self.leaf(value, true);
        self.params.push((name.to_string(), v));
        v
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of a leaf, or zeros if no gradient reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Smallest distance of any recorded relu input from zero and of any
    /// maxpool window maximum from its runner-up. Finite differences with a
    /// step below this margin never cross a kink.
    pub fn kink_margin(&self) -> T {
        let mut margin = T::infinity();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for &v in self.nodes[x.0].value.data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPool { x, geom, .. } => {
                    let plane = geom.h * geom.w;
                    for src in self.nodes[x.0].value.data().chunks(plane) {
                        margin = margin.min(maxpool_margin(src, geom));
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Piecewise-linear activation pattern: relu signs and maxpool argmaxes.
    /// Two evaluations with equal patterns lie on the same smooth piece.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => out.extend(
                    self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .map(|&v| u32::from(v > T::zero())),
                ),
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: Padding) -> Result<Var> {
        if stride < 1 {
            return Err(Error::arg("conv2d stride must be at least 1"));
        }
        let [n, cin, h, wd] = self.value(x).shape();
        let [cout, wcin, kh, kw] = self.value(w).shape();
        if cin != wcin {
            return Err(Error::dim(format!(
                "conv2d: input has {cin} channels, kernel expects {wcin}"
            )));
        }
        let geom = match padding {
            Padding::Same => {
                let (ho, pt) = same_padding(h, kh, stride);
                let (wo, pl) = same_padding(wd, kw, stride);
                if kh > h + 2 * pt + 1 || kw > wd + 2 * pl + 1 {
                    return Err(Error::dim("conv2d: kernel larger than padded input"));
                }
                ConvGeom {
                    cin,
                    h,
                    w: wd,
                    kh,
                    kw,
                    stride,
                    pad_top: pt,
                    pad_left: pl,
                    ho,
                    wo,
                }
            }
            Padding::Valid => {
                if kh > h || kw > wd {
                    return Err(Error::dim(format!(
                        "conv2d: kernel {kh}x{kw} larger than input {h}x{wd}"
                    )));
                }
                ConvGeom {
                    cin,
                    h,
                    w: wd,
                    kh,
                    kw,
                    stride,
                    pad_top: 0,
                    pad_left: 0,
                    ho: (h - kh) / stride + 1,
                    wo: (wd - kw) / stride + 1,
                }
            }
        };
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = Tensor::zeros([n, cout, geom.ho, geom.wo]);
        let per_out = cout * geom.col_cols();
        let k = geom.col_rows();
        let scratch = if geom.is_pointwise() { 0 } else { k * geom.col_cols() };
        for_each_sample(out.data_mut(), per_out, scratch, |i, dst, col| {
            let src = xv.sample(i);
            if geom.is_pointwise() {
                T::gemm(false, false, cout, geom.col_cols(), k, wv.data(), src, T::zero(), dst);
            } else {
                im2col(src, &geom, col);
                T::gemm(false, false, cout, geom.col_cols(), k, wv.data(), col, T::zero(), dst);
            }
        });
        Ok(self.push(out, Op::Conv2d { x, w, geom }, &[x, w]))
    }

    /// Adjoint of a valid-padded strided correlation: output spatial size is
    /// `(H-1)·stride + k`, i.e. exactly `H·stride` when `k = stride`.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        if stride < 1 {
            return Err(Error::arg("conv2d_transpose stride must be at least 1"));
        }
        let [n, cin, h, wd] = self.value(x).shape();
        let [wcin, cout, kh, kw] = self.value(w).shape();
        if cin != wcin {
            return Err(Error::dim(format!(
                "conv2d_transpose: input has {cin} channels, kernel expects {wcin}"
            )));
        }
        if h == 0 || wd == 0 {
            return Err(Error::dim("conv2d_transpose: empty input"));
        }
        // geometry of the forward correlation this op is the adjoint of
        let geom = ConvGeom {
            cin: cout,
            h: (h - 1) * stride + kh,
            w: (wd - 1) * stride + kw,
            kh,
            kw,
            stride,
            pad_top: 0,
            pad_left: 0,
            ho: h,
            wo: wd,
        };
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = Tensor::zeros([n, cout, geom.h, geom.w]);
        let per_out = cout * geom.h * geom.w;
        let rows = geom.col_rows();
        for_each_sample(out.data_mut(), per_out, rows * h * wd, |i, dst, col| {
            T::gemm(true, false, rows, h * wd, cin, wv.data(), xv.sample(i), T::zero(), col);
            col2im_add(col, &geom, dst);
        });
        Ok(self.push(out, Op::ConvTranspose2d { x, w, geom }, &[x, w]))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize, padding: Padding) -> Result<Var> {
        if k < 1 || stride < 1 {
            return Err(Error::arg("maxpool2d window and stride must be at least 1"));
        }
        let [n, c, h, w] = self.value(x).shape();
        let (ho, wo, pt, pl) = match padding {
            Padding::Same => {
                let (ho, pt) = same_padding(h, k, stride);
                let (wo, pl) = same_padding(w, k, stride);
                (ho, wo, pt, pl)
            }
            Padding::Valid => {
                if k > h || k > w {
                    return Err(Error::dim(format!(
                        "maxpool2d: window {k} larger than input {h}x{w}"
                    )));
                }
                ((h - k) / stride + 1, (w - k) / stride + 1, 0, 0)
            }
        };
        let geom = PoolGeom {
            h,
            w,
            k,
            stride,
            pad_top: pt,
            pad_left: pl,
            ho,
            wo,
        };
        let xv = self.value(x);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        let mut argmax = vec![0u32; out.len()];
        let planes = xv
            .data()
            .chunks(h * w)
            .zip(out.data_mut().chunks_mut(ho * wo))
            .zip(argmax.chunks_mut(ho * wo));
        for (p, ((src, dst), arg)) in planes.enumerate() {
            if !maxpool_plane(src, &geom, dst, arg, (p * h * w) as u32) {
                return Err(Error::dim("maxpool2d: window lies entirely in padding"));
            }
        }
        Ok(self.push(out, Op::MaxPool { x, argmax, geom }, &[x]))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if h == 0 || w == 0 {
            return Err(Error::dim("global_avg_pool: empty spatial extent"));
        }
        let hw = h * w;
        let inv = T::one() / T::from_usize(hw).unwrap();
        let xv = self.value(x);
        let data: Vec<T> = xv
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::from_vec([n, c, 1, 1], data)?;
        Ok(self.push(out, Op::GlobalAvgPool { x }, &[x]))
    }

    /// Batch normalization. In train mode returns the batch statistics so the
    /// owner of the running averages can update them.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        mode: BnMode,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let [n, c, h, w] = self.value(x).shape();
        if self.value(gamma).len() != c
            || self.value(beta).len() != c
            || running_mean.len() != c
            || running_var.len() != c
        {
            return Err(Error::dim(format!(
                "batch_norm: state vectors do not match {c} channels"
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let eps = T::from_f64_lossy(BN_EPSILON);
        let xv = self.value(x);
        let (mean, var) = match mode {
            BnMode::Train => {
                if count == 0 {
                    return Err(Error::dim("batch_norm: empty batch"));
                }
                let inv_count = T::one() / T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        s += lane_sum(&xv.data()[off..off + hw]);
                    }
                    let m = s * inv_count;
                    let mut sq = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        let plane = &xv.data()[off..off + hw];
                        sq += lane_sum2(plane, plane, |v, _| (v - m) * (v - m));
                    }
                    mean[ch] = m;
                    var[ch] = sq * inv_count;
                }
                (mean, var)
            }
            BnMode::Eval => (running_mean.to_vec(), running_var.to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut out = Tensor::zeros([n, c, h, w]);
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                let scale = g[ch] * inv_std[ch];
                let shift = bt[ch] - mean[ch] * scale;
                for (o, &v) in out.data_mut()[off..off + hw]
                    .iter_mut()
                    .zip(&xv.data()[off..off + hw])
                {
                    *o = v * scale + shift;
                }
            }
        }
        let train = mode == BnMode::Train;
        let stats = train.then(|| BatchStats {
            mean: mean.clone(),
            var,
        });
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        );
        Ok((v, stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu { x }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!(
                "add: shapes {:?} and {:?} differ",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::from_vec(av.shape(), data)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::arg("concat_channels: empty input list"));
        };
        let [n, _, h, w] = self.value(first).shape();
        let mut c_total = 0;
        for &v in xs {
            let [vn, vc, vh, vw] = self.value(v).shape();
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::dim(format!(
                    "concat_channels: shape {:?} incompatible with N={n}, H={h}, W={w}",
                    self.value(v).shape()
                )));
            }
            c_total += vc;
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * c_total * hw);
        for b in 0..n {
            for &v in xs {
                data.extend_from_slice(self.value(v).sample(b));
            }
        }
        let out = Tensor::from_vec([n, c_total, h, w], data)?;
        Ok(self.push(out, Op::Concat { xs: xs.to_vec() }, xs))
    }

    /// `y = x·W + b` with `x: (N,C,1,1)`, `W: (C,K,1,1)` read as a `C×K`
    /// matrix and `b: (1,K,1,1)`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [n, c, h, wd] = self.value(x).shape();
        if h != 1 || wd != 1 {
            return Err(Error::dim(format!(
                "fully_connected: spatial dims must be 1x1, got {h}x{wd}"
            )));
        }
        let [wc, k, wh, ww] = self.value(w).shape();
        if wc != c || wh != 1 || ww != 1 {
            return Err(Error::dim(format!(
                "fully_connected: weight {:?} does not map {c} inputs",
                self.value(w).shape()
            )));
        }
        if self.value(b).len() != k {
            return Err(Error::dim("fully_connected: bias length mismatch"));
        }
        let mut out = Tensor::zeros([n, k, 1, 1]);
        for row in out.data_mut().chunks_mut(k) {
            row.copy_from_slice(self.value(b).data());
        }
        T::gemm(
            false,
            false,
            n,
            k,
            c,
            self.value(x).data(),
            self.value(w).data(),
            T::one(),
            out.data_mut(),
        );
        Ok(self.push(out, Op::FullyConnected { x, w, b }, &[x, w, b]))
    }

    /// Mean softmax cross-entropy over samples or pixels. Labels are ordered
    /// `(n, h, w)` row-major.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        reduction: Reduction,
    ) -> Result<Var> {
        let [n, k, h, w] = self.value(logits).shape();
        if reduction == Reduction::PerSampleMean && (h != 1 || w != 1) {
            return Err(Error::dim(
                "softmax_cross_entropy: per-sample reduction needs (N,K,1,1) logits",
            ));
        }
        let hw = h * w;
        let count = n * hw;
        if labels.len() != count {
            return Err(Error::dim(format!(
                "softmax_cross_entropy: {} labels for {count} positions",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::arg(format!(
                "softmax_cross_entropy: label {bad} outside [0,{k})"
            )));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = T::zero();
        for b in 0..n {
            let base = b * k * hw;
            for p in 0..hw {
                let at = |j: usize| base + j * hw + p;
                let mut mx = T::neg_infinity();
                for j in 0..k {
                    mx = mx.max(lv[at(j)]);
                }
                let mut z = T::zero();
                for j in 0..k {
                    let e = (lv[at(j)] - mx).exp();
                    probs[at(j)] = e;
                    z += e;
                }
                let inv_z = T::one() / z;
                for j in 0..k {
                    probs[at(j)] *= inv_z;
                }
                let label = labels[b * hw + p];
                total += z.ln() + mx - lv[at(label)];
            }
        }
        let loss = total / T::from_usize(count.max(1)).unwrap();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            &[logits],
        ))
    }

    /// Adds a per-channel bias `b: (1,C,1,1)` to `x: (N,C,H,W)`.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if self.value(b).len() != c {
            return Err(Error::dim(format!("bias_add: bias length {} for {c} channels", self.value(b).len())));
        }
        let hw = h * w;
        let mut out = self.value(x).clone();
        let bv = self.value(b).data();
        for (i, plane) in out.data_mut().chunks_mut(hw.max(1)).enumerate().take(n * c) {
            let bias = bv[i % c];
            for v in plane {
                *v += bias;
            }
        }
        Ok(self.push(out, Op::BiasAdd { x, b }, &[x, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// `Σ coef_i · x_i` against fixed coefficients.
    pub fn dot(&mut self, x: Var, coef: Vec<T>) -> Result<Var> {
        if coef.len() != self.value(x).len() {
            return Err(Error::dim("dot: coefficient length mismatch"));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(&coef)
            .map(|(&a, &b)| a * b)
            .sum::<T>();
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, coef }, &[x]))
    }

    /// Zeroes every accumulated gradient.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Seeds `d loss/d loss = 1` and sweeps the tape in reverse, summing
    /// gradients into every node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::arg(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        {
            let node = &mut self.nodes[loss.0];
            let g = node.grad.get_or_insert_with(|| Tensor::zeros([1, 1, 1, 1]));
            g.data_mut()[0] += T::one();
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            // intermediate gradients are consumed; only leaves keep theirs
            let Some(gout) = self.nodes[i].grad.take() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at_mut(i);
            backprop_node(before, &rest[0], gout, self.fault);
        }
        Ok(())
    }
}

/// Runs `f` with the gradient buffer of `v` (allocated as zeros on first
/// use) while the rest of the tape stays readable.
fn with_grad<T: Float>(nodes: &mut [Node<T>], v: Var, f: impl FnOnce(&[Node<T>], &mut [T])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let shape = nodes[v.0].value.shape();
    let mut g = nodes[v.0].grad.take().unwrap_or_else(|| Tensor::zeros(shape));
    f(nodes, g.data_mut());
    nodes[v.0].grad = Some(g);
}

/// Adds an owned gradient into `v`, moving it in when `v` has none yet.
fn accumulate<T: Float>(nodes: &mut [Node<T>], v: Var, g: Tensor<T>) {
    let node = &mut nodes[v.0];
    if !node.requires_grad {
        return;
    }
    match &mut node.grad {
        Some(existing) => {
            for (d, &s) in existing.data_mut().iter_mut().zip(g.data()) {
                *d += s;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn backprop_node<T: Float>(nodes: &mut [Node<T>], node: &Node<T>, mut gout: Tensor<T>, fault: Option<Fault>) {
    match &node.op {
        Op::Leaf => {}
        Op::Conv2d { x, w, geom } => {
            let n = gout.n();
            let cout = gout.c();
            let cols = geom.col_cols();
            let k = geom.col_rows();
            let per_in = geom.cin * geom.h * geom.w;
            let per_out = cout * cols;
            with_grad(nodes, *w, |nodes, gw| {
                let xval = nodes[x.0].value.data();
                let mut col = vec![T::zero(); if geom.is_pointwise() { 0 } else { k * cols }];
                for b in 0..n {
                    let src = &xval[b * per_in..(b + 1) * per_in];
                    let g = &gout.data()[b * per_out..(b + 1) * per_out];
                    if geom.is_pointwise() {
                        T::gemm(false, true, cout, k, cols, g, src, T::one(), gw);
                    } else {
                        im2col(src, geom, &mut col);
                        T::gemm(false, true, cout, k, cols, g, &col, T::one(), gw);
                    }
                }
            });
            with_grad(nodes, *x, |nodes, gx| {
                let wval = nodes[w.0].value.data();
                let scratch = if geom.is_pointwise() { 0 } else { k * cols };
                for_each_sample(gx, per_in, scratch, |b, dst, col| {
                    let g = &gout.data()[b * per_out..(b + 1) * per_out];
                    if geom.is_pointwise() {
                        T::gemm(true, false, k, cols, cout, wval, g, T::one(), dst);
                    } else {
                        T::gemm(true, false, k, cols, cout, wval, g, T::zero(), col);
                        col2im_add(col, geom, dst);
                    }
                });
                if fault == Some(Fault::Conv2dInputGrad) {
                    for v in gx.iter_mut() {
                        *v *= T::from_f64_lossy(1.01);
                    }
                }
            });
        }
        Op::ConvTranspose2d { x, w, geom } => {
            // geom describes the correlation whose adjoint the forward pass was
            let n = gout.n();
            let hw = geom.col_cols();
            let rows = geom.col_rows();
            let per_out = geom.cin * geom.h * geom.w;
            let cin = nodes[x.0].value.c();
            let per_in = cin * hw;
            with_grad(nodes, *w, |nodes, gw| {
                let xval = nodes[x.0].value.data();
                let mut col = vec![T::zero(); rows * hw];
                for b in 0..n {
                    im2col(&gout.data()[b * per_out..(b + 1) * per_out], geom, &mut col);
                    T::gemm(false, true, cin, rows, hw, &xval[b * per_in..(b + 1) * per_in], &col, T::one(), gw);
                }
            });
            with_grad(nodes, *x, |nodes, gx| {
                let wval = nodes[w.0].value.data();
                for_each_sample(gx, per_in, rows * hw, |b, dst, col| {
                    im2col(&gout.data()[b * per_out..(b + 1) * per_out], geom, col);
                    T::gemm(false, false, cin, hw, rows, wval, col, T::one(), dst);
                });
            });
        }
        Op::MaxPool { x, argmax, .. } => {
            with_grad(nodes, *x, |_, gx| {
                for (&idx, &g) in argmax.iter().zip(gout.data()) {
                    gx[idx as usize] += g;
                }
            });
        }
        Op::GlobalAvgPool { x } => {
            let [_, _, h, w] = nodes[x.0].value.shape();
            let hw = h * w;
            let inv = T::one() / T::from_usize(hw).unwrap();
            with_grad(nodes, *x, |_, gx| {
                for (plane, &g) in gx.chunks_mut(hw).zip(gout.data()) {
                    let share = g * inv;
                    for v in plane {
                        *v += share;
                    }
                }
            });
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            mean,
            inv_std,
            train,
        } => {
            let [n, c, h, w] = nodes[x.0].value.shape();
            let hw = h * w;
            let count = T::from_usize(n * hw).unwrap();
            // per-channel Σdy and Σdy·x̂
            let mut sum_dy = vec![T::zero(); c];
            let mut sum_dy_xhat = vec![T::zero(); c];
            {
                let xv = nodes[x.0].value.data();
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        let (m, s) = (mean[ch], inv_std[ch]);
                        let gp = &gout.data()[off..off + hw];
                        sum_dy[ch] += lane_sum(gp);
                        sum_dy_xhat[ch] += lane_sum2(gp, &xv[off..off + hw], |g, v| g * (v - m)) * s;
                    }
                }
            }
            if nodes[x.0].requires_grad {
                let xv = nodes[x.0].value.data();
                let gvals = nodes[gamma.0].value.data();
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        let (m, s, gm) = (mean[ch], inv_std[ch], gvals[ch]);
                        let g = &mut gout.data_mut()[off..off + hw];
                        if *train {
                            let k = gm * s / count;
                            let (sdy, sdx) = (sum_dy[ch], sum_dy_xhat[ch]);
                            for (gv, &v) in g.iter_mut().zip(&xv[off..off + hw]) {
                                let xhat = (v - m) * s;
                                *gv = k * (count * *gv - sdy - xhat * sdx);
                            }
                        } else {
                            let k = gm * s;
                            for gv in g.iter_mut() {
                                *gv *= k;
                            }
                        }
                    }
                }
            }
            with_grad(nodes, *gamma, |_, gg| {
                for (dst, &v) in gg.iter_mut().zip(&sum_dy_xhat) {
                    *dst += v;
                }
            });
            with_grad(nodes, *beta, |_, gb| {
                for (dst, &v) in gb.iter_mut().zip(&sum_dy) {
                    *dst += v;
                }
            });
            accumulate(nodes, *x, gout);
        }
        Op::Relu { x } => {
            // output > 0 exactly where input > 0
            for (g, &y) in gout.data_mut().iter_mut().zip(node.value.data()) {
                *g = if y > T::zero() { *g } else { T::zero() };
            }
            accumulate(nodes, *x, gout);
        }
        Op::Add { a, b } => {
            if nodes[b.0].requires_grad {
                accumulate(nodes, *a, gout.clone());
            }
            accumulate(nodes, *b, gout);
        }
        Op::Concat { xs } => {
            let [n, c_total, h, w] = gout.shape();
            let hw = h * w;
            let mut c_off = 0;
            for v in xs {
                let c = nodes[v.0].value.c();
                with_grad(nodes, *v, |_, gv| {
                    for b in 0..n {
                        let src = &gout.data()[(b * c_total + c_off) * hw..(b * c_total + c_off + c) * hw];
                        for (dst, &g) in gv[b * c * hw..(b + 1) * c * hw].iter_mut().zip(src) {
                            *dst += g;
                        }
                    }
                });
                c_off += c;
            }
        }
        Op::FullyConnected { x, w, b } => {
            let [n, k, _, _] = gout.shape();
            let c = nodes[x.0].value.c();
            with_grad(nodes, *x, |nodes, gx| {
                T::gemm(false, true, n, c, k, gout.data(), nodes[w.0].value.data(), T::one(), gx);
            });
            with_grad(nodes, *w, |nodes, gw| {
                T::gemm(true, false, c, k, n, nodes[x.0].value.data(), gout.data(), T::one(), gw);
            });
            with_grad(nodes, *b, |_, gb| {
                for row in gout.data().chunks(k) {
                    for (dst, &g) in gb.iter_mut().zip(row) {
                        *dst += g;
                    }
                }
            });
        }
        Op::SoftmaxCrossEntropy {
            logits,
            probs,
            labels,
        } => {
            let [n, k, h, w] = nodes[logits.0].value.shape();
            let hw = h * w;
            let scale = gout.item() / T::from_usize((n * hw).max(1)).unwrap();
            with_grad(nodes, *logits, |_, gl| {
                for (dst, &p) in gl.iter_mut().zip(probs) {
                    *dst += p * scale;
                }
                for b in 0..n {
                    for p in 0..hw {
                        let label = labels[b * hw + p];
                        gl[(b * k + label) * hw + p] -= scale;
                    }
                }
            });
        }
        Op::BiasAdd { x, b } => {
            let [_, c, h, w] = gout.shape();
            let hw = h * w;
            with_grad(nodes, *b, |_, gb| {
                for (i, plane) in gout.data().chunks(hw.max(1)).enumerate() {
                    gb[i % c] += plane.iter().copied().sum::<T>();
                }
            });
            accumulate(nodes, *x, gout);
        }
        Op::Sum { x } => {
            let g = gout.item();
            with_grad(nodes, *x, |_, gx| {
                for dst in gx {
                    *dst += g;
                }
            });
        }
        Op::Dot { x, coef } => {
            let g = gout.item();
            with_grad(nodes, *x, |_, gx| {
                for (dst, &c) in gx.iter_mut().zip(coef) {
                    *dst += g * c;
                }
            });
        }
    }
}

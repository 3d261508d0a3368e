//! Layer descriptors. Each descriptor both initializes its parameters and
//! emits its forward pass, so names can never drift between the two.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::model::Session;
use super::params::{Partition, RunningStats};
use crate::engine::{Float, Padding, Tensor, Var};
use crate::error::{Error, Result};

fn he_normal<T: Float, R: Rng + ?Sized>(shape: [usize; 4], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}

/// Convolution with optional batch norm, ReLU and bias (bias only without BN).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvUnit {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub bn: bool,
    pub relu: bool,
}

impl ConvUnit {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, (kh, kw): (usize, usize)) -> Self {
        ConvUnit {
            name: name.into(),
            cin,
            cout,
            kh,
            kw,
            stride: 1,
            bn: true,
            relu: true,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn linear(mut self) -> Self {
        self.relu = false;
        self
    }

    /// Plain conv with a bias term, no normalization or activation.
    pub fn head(mut self) -> Self {
        self.bn = false;
        self.relu = false;
        self
    }

    pub(crate) fn init<T: Float, R: Rng + ?Sized>(&self, part: &mut Partition<T>, rng: &mut R) -> Result<()> {
        let w = he_normal([self.cout, self.cin, self.kh, self.kw], self.cin * self.kh * self.kw, rng);
        part.insert(format!("{}.w", self.name), w)?;
        if self.bn {
            part.insert(format!("{}.bn.gamma", self.name), Tensor::full([1, self.cout, 1, 1], T::one()))?;
            part.insert(format!("{}.bn.beta", self.name), Tensor::zeros([1, self.cout, 1, 1]))?;
            part.running.insert(format!("{}.bn", self.name), RunningStats::new(self.cout));
        } else {
            part.insert(format!("{}.b", self.name), Tensor::zeros([1, self.cout, 1, 1]))?;
        }
        Ok(())
    }

    pub(crate) fn forward<T: Float>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(&format!("{}.w", self.name))?;
        let mut y = s.g.conv2d(x, w, self.stride, Padding::Same)?;
        if self.bn {
            y = s.batch_norm(&format!("{}.bn", self.name), y)?;
        } else {
            let b = s.param(&format!("{}.b", self.name))?;
            y = s.g.bias_add(y, b)?;
        }
        if self.relu {
            y = s.g.relu(y);
        }
        Ok(y)
    }
}

/// `k×k` conv, or `1×k` then `k×1` when factorized. Only the last conv of
/// the chain takes `last_relu`.
fn spatial_chain(name: &str, cin: usize, cout: usize, k: usize, factorized: bool, last_relu: bool) -> Vec<ConvUnit> {
    let mut chain = if factorized && k > 1 {
        vec![
            ConvUnit::new(format!("{name}_1x{k}"), cin, cout, (1, k)),
            ConvUnit::new(format!("{name}_{k}x1"), cout, cout, (k, 1)),
        ]
    } else {
        vec![ConvUnit::new(name, cin, cout, (k, k))]
    };
    if !last_relu {
        let last = chain.pop().expect("non-empty").linear();
        chain.push(last);
    }
    chain
}

/// Four-branch residual inception block mapping `C → C` channels.
///
/// Branches (each `C/4` wide): 1×1; 1×1 → 3×3; 1×1 → 5×5; 1×1 → 3×3 maxpool.
/// Their concat passes a 3×3 merge conv and is added to a 1×1 projection of
/// the input; ReLU follows the add. The factorized variant splits every
/// `k×k` conv into `1×k` then `k×1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InceptionBlock {
    pub prefix: String,
    pub channels: usize,
    pub factorized: bool,
}

impl InceptionBlock {
    pub fn new(prefix: impl Into<String>, channels: usize, factorized: bool) -> Result<Self> {
        if channels == 0 || channels % 4 != 0 {
            return Err(Error::config(format!(
                "inception block needs channels divisible by 4, got {channels}"
            )));
        }
        Ok(InceptionBlock {
            prefix: prefix.into(),
            channels,
            factorized,
        })
    }

    fn quarter(&self) -> usize {
        self.channels / 4
    }

    pub fn branch1(&self) -> Vec<ConvUnit> {
        vec![ConvUnit::new(format!("{}.b1", self.prefix), self.channels, self.quarter(), (1, 1))]
    }

    pub fn branch3(&self) -> Vec<ConvUnit> {
        let p = &self.prefix;
        let mut v = vec![ConvUnit::new(format!("{p}.b2_reduce"), self.channels, self.quarter(), (1, 1))];
        v.extend(spatial_chain(&format!("{p}.b2_conv"), self.quarter(), self.quarter(), 3, self.factorized, true));
        v
    }

    pub fn branch5(&self) -> Vec<ConvUnit> {
        let p = &self.prefix;
        let mut v = vec![ConvUnit::new(format!("{p}.b3_reduce"), self.channels, self.quarter(), (1, 1))];
        v.extend(spatial_chain(&format!("{p}.b3_conv"), self.quarter(), self.quarter(), 5, self.factorized, true));
        v
    }

    /// Conv feeding the 3×3 stride-1 maxpool.
    pub fn branch_pool(&self) -> ConvUnit {
        ConvUnit::new(format!("{}.b4_conv", self.prefix), self.channels, self.quarter(), (1, 1))
    }

    pub fn merge(&self) -> Vec<ConvUnit> {
        spatial_chain(&format!("{}.merge", self.prefix), self.channels, self.channels, 3, self.factorized, false)
    }

    pub fn shortcut(&self) -> ConvUnit {
        ConvUnit::new(format!("{}.shortcut", self.prefix), self.channels, self.channels, (1, 1)).linear()
    }

    pub fn units(&self) -> Vec<ConvUnit> {
        let mut v = self.branch1();
        v.extend(self.branch3());
        v.extend(self.branch5());
        v.push(self.branch_pool());
        v.extend(self.merge());
        v.push(self.shortcut());
        v
    }

    pub(crate) fn init<T: Float, R: Rng + ?Sized>(&self, part: &mut Partition<T>, rng: &mut R) -> Result<()> {
        for u in self.units() {
            u.init(part, rng)?;
        }
        Ok(())
    }

    pub(crate) fn forward<T: Float>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let c = s.g.value(x).c();
        if c != self.channels {
            return Err(Error::dim(format!(
                "{}: expects {} channels, got {c}",
                self.prefix, self.channels
            )));
        }
        let chain = |s: &mut Session<'_, T>, units: Vec<ConvUnit>| -> Result<Var> {
            units.iter().try_fold(x, |acc, u| u.forward(s, acc))
        };
        let b1 = chain(s, self.branch1())?;
        let b2 = chain(s, self.branch3())?;
        let b3 = chain(s, self.branch5())?;
        let b4 = self.branch_pool().forward(s, x)?;
        let b4 = s.g.maxpool2d(b4, 3, 1, Padding::Same)?;
        let cat = s.g.concat_channels(&[b1, b2, b3, b4])?;
        let merged = self.merge().iter().try_fold(cat, |acc, u| u.forward(s, acc))?;
        let short = self.shortcut().forward(s, x)?;
        let sum = s.g.add(merged, short)?;
        Ok(s.g.relu(sum))
    }
}

/// Learnable parameter count of one inception block (weights plus BN affine).
pub fn inception_param_count(channels: usize, factorized: bool) -> Result<usize> {
    let block = InceptionBlock::new("x", channels, factorized)?;
    let mut part = Partition::<f32>::default();
    block.init(&mut part, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
    Ok(part.param_count())
}

/// 2×2 stride-2 transposed conv halving the channel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct UpUnit {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
}

impl UpUnit {
    pub fn init<T: Float, R: Rng + ?Sized>(&self, part: &mut Partition<T>, rng: &mut R) -> Result<()> {
        // each output pixel sees exactly one tap per input channel
        let w = he_normal([self.cin, self.cout, 2, 2], self.cin, rng);
        part.insert(format!("{}.w", self.name), w)
    }

    pub fn forward<T: Float>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(&format!("{}.w", self.name))?;
        s.g.conv2d_transpose(x, w, 2)
    }
}

/// Fully connected layer on a `(N,C,1,1)` tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DenseUnit {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
}

impl DenseUnit {
    pub fn init<T: Float, R: Rng + ?Sized>(&self, part: &mut Partition<T>, rng: &mut R) -> Result<()> {
        part.insert(format!("{}.w", self.name), he_normal([self.cin, self.cout, 1, 1], self.cin, rng))?;
        part.insert(format!("{}.b", self.name), Tensor::zeros([1, self.cout, 1, 1]))
    }

    pub fn forward<T: Float>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(&format!("{}.w", self.name))?;
        let b = s.param(&format!("{}.b", self.name))?;
        s.g.fully_connected(x, w, b)
    }
}

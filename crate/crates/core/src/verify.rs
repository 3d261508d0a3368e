//! The gradient-check battery: every differentiable op on three random
//! shapes, then the whole joint model at the tiny configuration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::arch::{build_model, ArchConfig, Session};
use crate::engine::{grad_check, BnMode, Fault, GradCheckOptions, Graph, Padding, Reduction, Tensor, Var};
use crate::error::Result;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn randn(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Scalar probe `⟨y, c⟩` with a fixed random `c`, so every output element
/// carries a distinct weight.
fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let coef = (0..g.value(y).len()).map(|_| rng.sample(StandardNormal)).collect();
    g.dot(y, coef)
}

type OpFn = fn(&mut Graph<f64>, &[Var], u64) -> Result<Var>;

struct OpCase {
    name: &'static str,
    shapes: [Vec<[usize; 4]>; 3],
    f: OpFn,
}

fn labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "conv2d",
            shapes: [
                vec![[2, 3, 6, 6], [4, 3, 3, 3]],
                vec![[1, 2, 7, 5], [3, 2, 3, 3]],
                vec![[2, 4, 5, 5], [2, 4, 1, 3]],
            ],
            f: |g, v, s| {
                let stride = 1 + (s as usize % 2);
                let pad = if s % 3 == 2 { Padding::Valid } else { Padding::Same };
                let y = g.conv2d(v[0], v[1], stride, pad)?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "conv2d_transpose",
            shapes: [
                vec![[2, 3, 3, 3], [3, 2, 2, 2]],
                vec![[1, 4, 2, 5], [4, 3, 2, 2]],
                vec![[2, 2, 4, 4], [2, 2, 2, 2]],
            ],
            f: |g, v, s| {
                let y = g.conv2d_transpose(v[0], v[1], 2)?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "maxpool2d",
            shapes: [vec![[2, 3, 6, 6]], vec![[1, 2, 9, 9]], vec![[2, 2, 5, 7]]],
            f: |g, v, s| {
                let y = match s % 3 {
                    0 => g.maxpool2d(v[0], 2, 2, Padding::Valid)?,
                    1 => g.maxpool2d(v[0], 3, 3, Padding::Valid)?,
                    _ => g.maxpool2d(v[0], 3, 1, Padding::Same)?,
                };
                probe(g, y, s)
            },
        },
        OpCase {
            name: "global_avg_pool",
            shapes: [vec![[2, 3, 4, 4]], vec![[3, 2, 5, 5]], vec![[1, 4, 3, 7]]],
            f: |g, v, s| {
                let y = g.global_avg_pool(v[0])?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "batch_norm",
            shapes: [
                vec![[4, 3, 3, 3], [1, 3, 1, 1], [1, 3, 1, 1]],
                vec![[2, 2, 4, 4], [1, 2, 1, 1], [1, 2, 1, 1]],
                vec![[8, 4, 2, 2], [1, 4, 1, 1], [1, 4, 1, 1]],
            ],
            f: |g, v, s| {
                let c = g.value(v[0]).c();
                let (mean, var) = (vec![0.0; c], vec![1.0; c]);
                let (y, _) = g.batch_norm(v[0], v[1], v[2], &mean, &var, BnMode::Train)?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "relu",
            shapes: [vec![[2, 3, 4, 4]], vec![[1, 5, 3, 3]], vec![[3, 2, 2, 6]]],
            f: |g, v, s| {
                let y = g.relu(v[0]);
                probe(g, y, s)
            },
        },
        OpCase {
            name: "add",
            shapes: [
                vec![[2, 3, 4, 4], [2, 3, 4, 4]],
                vec![[1, 2, 5, 5], [1, 2, 5, 5]],
                vec![[3, 1, 2, 2], [3, 1, 2, 2]],
            ],
            f: |g, v, s| {
                let y = g.add(v[0], v[1])?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "concat_channels",
            shapes: [
                vec![[2, 3, 4, 4], [2, 1, 4, 4]],
                vec![[1, 2, 3, 3], [1, 4, 3, 3]],
                vec![[2, 1, 2, 5], [2, 2, 2, 5]],
            ],
            f: |g, v, s| {
                let y = g.concat_channels(&[v[0], v[1], v[0]])?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "fully_connected",
            shapes: [
                vec![[2, 4, 1, 1], [4, 3, 1, 1], [1, 3, 1, 1]],
                vec![[5, 2, 1, 1], [2, 6, 1, 1], [1, 6, 1, 1]],
                vec![[1, 7, 1, 1], [7, 2, 1, 1], [1, 2, 1, 1]],
            ],
            f: |g, v, s| {
                let y = g.fully_connected(v[0], v[1], v[2])?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "softmax_cross_entropy",
            shapes: [vec![[4, 5, 1, 1]], vec![[2, 3, 4, 4]], vec![[3, 6, 2, 3]]],
            f: |g, v, s| {
                let [n, k, h, w] = g.value(v[0]).shape();
                let reduction = if h * w == 1 {
                    Reduction::PerSampleMean
                } else {
                    Reduction::PerPixelMean
                };
                g.softmax_cross_entropy(v[0], &labels(n * h * w, k, s), reduction)
            },
        },
        OpCase {
            name: "bias_add",
            shapes: [
                vec![[2, 3, 4, 4], [1, 3, 1, 1]],
                vec![[1, 2, 5, 5], [1, 2, 1, 1]],
                vec![[3, 4, 2, 2], [1, 4, 1, 1]],
            ],
            f: |g, v, s| {
                let y = g.bias_add(v[0], v[1])?;
                probe(g, y, s)
            },
        },
        OpCase {
            name: "sum",
            shapes: [vec![[2, 3, 4, 4]], vec![[1, 1, 5, 5]], vec![[3, 2, 2, 2]]],
            f: |g, v, _| Ok(g.sum(v[0])),
        },
        OpCase {
            name: "dot",
            shapes: [vec![[2, 3, 4, 4]], vec![[1, 1, 5, 5]], vec![[3, 2, 2, 2]]],
            f: |g, v, s| probe(g, v[0], s),
        },
    ]
}

fn check_op(case: &OpCase, fault: Option<Fault>, opts: GradCheckOptions) -> Result<CheckRow> {
    let mut row = CheckRow {
        name: case.name,
        max_rel_error: 0.0,
        tolerance: OP_TOLERANCE,
        checked: 0,
    };
    for (i, shapes) in case.shapes.iter().enumerate() {
        let seed = opts.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Tensor<f64>> = shapes.iter().map(|&s| randn(s, &mut rng)).collect();
        let f = case.f;
        let report = grad_check(
            |g, v| {
                g.set_fault(fault);
                f(g, v, i as u64)
            },
            &params,
            GradCheckOptions { seed, ..opts },
        )?;
        row.max_rel_error = row.max_rel_error.max(report.max_rel_error);
        row.checked += report.checked;
    }
    Ok(row)
}

/// Combined classifier and segmentation loss of the tiny joint model, every
/// parameter probed.
pub fn check_joint_model(fault: Option<Fault>, opts: GradCheckOptions) -> Result<CheckRow> {
    let arch = ArchConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let model = build_model::<f64, _>(&arch, &mut rng)?;
    let names = model.param_names();
    let params: Vec<Tensor<f64>> = names.iter().map(|n| model.param(n).cloned()).collect::<Result<_>>()?;
    let n = 2;
    let x = randn([n, 3, arch.input_hw, arch.input_hw], &mut rng);
    let grades = labels(n, arch.num_grades, opts.seed + 1);
    let pixels = labels(n * arch.input_hw * arch.input_hw, arch.num_seg_classes, opts.seed + 2);
    let report = grad_check(
        |g, vars| {
            g.set_fault(fault);
            let bound: BTreeMap<String, Var> = names.iter().cloned().zip(vars.iter().copied()).collect();
            let mut s = Session::with_vars(g, &model, BnMode::Train, bound);
            let input = s.g.input(x.clone());
            let taps = s.trunk(input)?;
            let grade = s.classifier(&taps)?;
            let seg = s.decoder(&taps)?;
            let clf_loss = g.softmax_cross_entropy(grade, &grades, Reduction::PerSampleMean)?;
            let seg_loss = g.softmax_cross_entropy(seg, &pixels, Reduction::PerPixelMean)?;
            g.add(clf_loss, seg_loss)
        },
        &params,
        opts,
    )?;
    Ok(CheckRow {
        name: "joint_model",
        max_rel_error: report.max_rel_error,
        tolerance: MODEL_TOLERANCE,
        checked: report.checked,
    })
}

/// One row per differentiable op, then the joint model.
pub fn gradcheck_suite(fault: Option<Fault>) -> Result<Vec<CheckRow>> {
    let opts = GradCheckOptions::default();
    let mut rows = op_cases()
        .iter()
        .map(|case| check_op(case, fault, opts))
        .collect::<Result<Vec<_>>>()?;
    rows.push(check_joint_model(fault, opts)?);
    Ok(rows)
}

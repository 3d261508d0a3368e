use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::engine::{BnMode, Graph, Reduction, Tensor, BN_EPSILON};
use crate::error::Error;

fn randn(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

fn model(cfg: &ArchConfig, seed: u64) -> ModelParams<f64> {
    build_model(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Model whose trunk partition holds only `block`, for running it alone.
fn block_host(block: &InceptionBlock, seed: u64) -> ModelParams<f64> {
    let mut host = model(&ArchConfig::tiny(), 0);
    host.trunk = Partition::default();
    block.init(&mut host.trunk, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    host
}

// ---- shapes and sizes ----

#[test]
fn default_model_shapes() {
    let cfg = ArchConfig::default();
    let m: ModelParams<f32> = build_model(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let out = forward_joint(&m, Tensor::zeros([2, 3, 64, 64]), BnMode::Eval).unwrap();
    assert_eq!(out.grade_logits.shape(), [2, 5, 1, 1]);
    assert_eq!(out.seg_logits.shape(), [2, 6, 64, 64]);
    assert_eq!(
        out.tap_shapes,
        vec![(0, [2, 16, 64, 64]), (1, [2, 32, 32, 32]), (2, [2, 64, 16, 16])]
    );
    assert_eq!(out.bottleneck_shape, [2, 128, 8, 8]);
    assert!(out.bn_updates.is_empty());
}

#[test]
fn wrong_input_shape_is_a_dimension_error() {
    let m = model(&ArchConfig::tiny(), 0);
    let r = forward_joint(&m, Tensor::zeros([1, 3, 9, 9]), BnMode::Eval);
    assert!(matches!(r, Err(Error::Dimension(_))));
}

/// Weights plus BN gamma/beta of one `cin → cout` conv of size `kh×kw`.
fn conv_bn(cin: usize, cout: usize, kh: usize, kw: usize) -> usize {
    cin * cout * kh * kw + 2 * cout
}

fn block_count_oracle(c: usize, factorized: bool) -> usize {
    let q = c / 4;
    let spatial = |cin: usize, cout: usize, k: usize| match factorized {
        true => conv_bn(cin, cout, 1, k) + conv_bn(cout, cout, k, 1),
        false => conv_bn(cin, cout, k, k),
    };
    4 * conv_bn(c, q, 1, 1) + spatial(q, q, 3) + spatial(q, q, 5) + spatial(c, c, 3) + conv_bn(c, c, 1, 1)
}

#[test]
fn inception_parameter_counts() {
    assert_eq!(inception_param_count(16, false).unwrap(), 3472);
    for c in [4, 8, 16, 32, 64, 128] {
        assert_eq!(inception_param_count(c, false).unwrap(), block_count_oracle(c, false));
        assert_eq!(inception_param_count(c, true).unwrap(), block_count_oracle(c, true));
        assert!(inception_param_count(c, true).unwrap() < inception_param_count(c, false).unwrap());
    }
    assert!(matches!(inception_param_count(6, false), Err(Error::Config(_))));
}

#[test]
fn partitions_are_disjoint_and_prefixed() {
    let m = model(&ArchConfig::default(), 0);
    for p in PartitionId::ALL {
        let part = m.partition(p);
        assert!(!part.params.is_empty());
        assert!(part.params.keys().all(|n| PartitionId::of(n) == Some(p)), "{p:?}");
        assert!(part.running.keys().all(|n| PartitionId::of(n) == Some(p)));
    }
    let names = m.param_names();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), names.len());
    assert_eq!(m.param_count(), PartitionId::ALL.iter().map(|&p| m.partition(p).param_count()).sum::<usize>());
}

#[test]
fn construction_is_deterministic() {
    let cfg = ArchConfig::default();
    assert_eq!(model(&cfg, 4), model(&cfg, 4));
    assert_ne!(model(&cfg, 4).trunk, model(&cfg, 5).trunk);
    assert_eq!(model(&cfg, 4).param_names(), model(&cfg, 5).param_names());
}

#[test]
fn one_level_model_runs() {
    let cfg = ArchConfig {
        input_hw: 16,
        stem_channels: 8,
        levels: vec![Level { channels: 8, blocks: 2 }],
        bottleneck_channels: 16,
        ..ArchConfig::default()
    };
    let m = model(&cfg, 0);
    let out = forward_joint(&m, randn([2, 3, 16, 16], 1), BnMode::Train).unwrap();
    assert_eq!(out.seg_logits.shape(), [2, 6, 16, 16]);
    assert_eq!(out.grade_logits.shape(), [2, 5, 1, 1]);
    assert_eq!(out.bottleneck_shape, [2, 16, 8, 8]);
    assert!(out.seg_logits.data().iter().all(|v| v.is_finite()));
}

#[test]
fn invalid_configs_name_the_field() {
    let mut cfg = ArchConfig::default();
    cfg.input_hw = 60;
    assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("arch.input_hw")));
    let mut cfg = ArchConfig::default();
    cfg.stem_channels = 8;
    assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("arch.stem_channels")));
    let mut cfg = ArchConfig::default();
    cfg.levels.clear();
    assert!(cfg.validate().is_err());
}

// ---- inception block behaviour ----

fn run_block(host: &ModelParams<f64>, block: &InceptionBlock, x: Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let mut s = Session::new(&mut g, host, BnMode::Eval);
    let xv = s.g.input(x);
    let y = block.forward(&mut s, xv).unwrap();
    g.value(y).clone()
}

fn support(t: &Tensor<f64>) -> Vec<(usize, usize)> {
    let [n, c, h, w] = t.shape();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (0..n * c).any(|k| t.data()[(k * h + y) * w + x] != 0.0) {
                out.push((y, x));
            }
        }
    }
    out
}

#[test]
fn five_branch_reaches_two_pixels_either_way() {
    for factorized in [false, true] {
        let block = InceptionBlock::new("m.x", 8, factorized).unwrap();
        let host = block_host(&block, 3);
        let mut x = Tensor::zeros([1, 8, 11, 11]);
        for c in 0..8 {
            x.data_mut()[c * 121 + 5 * 11 + 5] = 1.0 + c as f64;
        }
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &host, BnMode::Eval);
        let xv = s.g.input(x.clone());
        let y = block.branch5().iter().try_fold(xv, |acc, u| u.forward(&mut s, acc)).unwrap();
        let sup = support(g.value(y));
        assert!(!sup.is_empty());
        assert!(sup.iter().all(|&(y, x)| y.abs_diff(5) <= 2 && x.abs_diff(5) <= 2), "{sup:?}");
        // the whole block adds the 3×3 merge on top
        let full = support(&run_block(&host, &block, x));
        assert!(full.iter().all(|&(y, x)| y.abs_diff(5) <= 3 && x.abs_diff(5) <= 3), "{full:?}");
        assert!(full.iter().any(|&(y, x)| y.abs_diff(5) == 3 || x.abs_diff(5) == 3));
    }
}

#[test]
fn zeroed_merge_gamma_leaves_only_the_shortcut() {
    let block = InceptionBlock::new("m.x", 8, false).unwrap();
    let mut host = block_host(&block, 5);
    let gamma = host.param_mut("m.x.merge.bn.gamma").unwrap();
    gamma.data_mut().iter_mut().for_each(|v| *v = 0.0);
    let x = randn([2, 8, 5, 5], 6);
    let y = run_block(&host, &block, x.clone());
    // oracle: relu(bn_eval(W·x)) with identity running stats
    let w = host.param("m.x.shortcut.w").unwrap().data();
    let g = host.param("m.x.shortcut.bn.gamma").unwrap().data();
    let b = host.param("m.x.shortcut.bn.beta").unwrap().data();
    let scale = 1.0 / (1.0 + BN_EPSILON).sqrt();
    let plane = 25;
    for n in 0..2 {
        for o in 0..8 {
            for p in 0..plane {
                let z: f64 = (0..8).map(|i| w[o * 8 + i] * x.data()[(n * 8 + i) * plane + p]).sum();
                let want = (z * scale * g[o] + b[o]).max(0.0);
                let got = y.data()[(n * 8 + o) * plane + p];
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

// ---- attention gating ----

fn plan_row(plan: &[PagEntry]) -> Vec<(bool, Option<usize>)> {
    plan.iter().map(|e| (e.included, e.pool)).collect()
}

#[test]
fn pag_selection_table() {
    let taps = [(64, 64), (32, 32), (16, 16)];
    let p16 = pag_plan(&taps, (16, 16)).unwrap();
    assert_eq!(plan_row(&p16), vec![(true, Some(4)), (true, Some(2)), (true, None)]);
    assert_eq!(p16.iter().map(|e| e.ratio).collect::<Vec<_>>(), vec![4.0, 2.0, 1.0]);
    let p32 = pag_plan(&taps, (32, 32)).unwrap();
    assert_eq!(plan_row(&p32), vec![(true, Some(2)), (true, None), (false, None)]);
    assert_eq!(p32[2].ratio, 0.5);
    let p64 = pag_plan(&taps, (64, 64)).unwrap();
    assert_eq!(plan_row(&p64), vec![(true, None), (false, None), (false, None)]);
}

#[test]
fn pag_rejects_fractional_and_empty_sizes() {
    assert!(matches!(pag_plan(&[(48, 48)], (32, 32)), Err(Error::Config(_))));
    assert!(matches!(pag_plan(&[(0, 4)], (4, 4)), Err(Error::Dimension(_))));
    assert!(matches!(pag_plan(&[(4, 4)], (0, 4)), Err(Error::Dimension(_))));
    // the shorter side decides
    assert_eq!(plan_row(&pag_plan(&[(64, 32)], (16, 16)).unwrap()), vec![(true, Some(2))]);
}

proptest! {
    #[test]
    fn pag_plan_pools_to_the_decoder_size(exps in proptest::collection::vec(0u32..7, 1..5), u in 0u32..7) {
        let taps: Vec<(usize, usize)> = exps.iter().map(|&e| (1 << e, 1 << e)).collect();
        let u_side = 1usize << u;
        let plan = pag_plan(&taps, (u_side, u_side)).unwrap();
        for (e, &(h, _)) in plan.iter().zip(&taps) {
            prop_assert_eq!(e.included, h >= u_side);
            if e.included {
                prop_assert_eq!(h / e.pool.unwrap_or(1), u_side);
            } else {
                prop_assert!(e.pool.is_none());
            }
        }
    }
}

#[test]
fn pag_select_pools_taps_to_stage_size() {
    let mut g = Graph::<f64>::new();
    let taps = EncoderTaps {
        taps: vec![
            (0, g.input(randn([2, 4, 16, 16], 1))),
            (1, g.input(randn([2, 8, 8, 8], 2))),
            (2, g.input(randn([2, 8, 4, 4], 3))),
        ],
        bottleneck: g.input(randn([2, 8, 2, 2], 4)),
    };
    let u = g.input(randn([2, 6, 8, 8], 5));
    let sel = pag_select(&mut g, &taps, u).unwrap();
    assert_eq!(sel.iter().map(|&(l, _)| l).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(g.value(sel[0].1).shape(), [2, 4, 8, 8]);
    assert_eq!(g.value(sel[1].1).shape(), [2, 8, 8, 8]);
    // the identity tap is passed through untouched
    assert_eq!(sel[1].1, taps.taps[1].1);
}

#[test]
fn pag_merge_keeps_shape_and_routes_gradient() {
    let merge = ConvUnit::new("s.probe", 16, 4, (1, 1));
    let mut host = model(&ArchConfig::tiny(), 0);
    merge.init(&mut host.decoder, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut g = Graph::<f64>::new();
    let mut s = Session::new(&mut g, &host, BnMode::Train);
    let u = s.g.leaf(randn([2, 4, 4, 4], 1), true);
    let t0 = s.g.leaf(randn([2, 4, 8, 8], 2), true);
    let t1 = s.g.leaf(randn([2, 8, 4, 4], 3), true);
    let taps = EncoderTaps {
        taps: vec![(0, t0), (1, t1)],
        bottleneck: u,
    };
    let sel = pag_select(s.g, &taps, u).unwrap();
    let y = pag_merge(&mut s, u, &sel, &merge).unwrap();
    assert_eq!(s.g.value(y).shape(), [2, 4, 4, 4]);
    let probe = s.g.sum(y);
    drop(s);
    g.backward(probe).unwrap();
    for v in [u, t0, t1] {
        assert!(g.grad(v).unwrap().data().iter().any(|&d| d != 0.0));
    }
}

#[test]
fn pag_off_drops_the_taps() {
    let cfg = ArchConfig {
        pag_fusion: PagFusion::Off,
        ..ArchConfig::tiny()
    };
    let on = model(&ArchConfig::tiny(), 0);
    let off = model(&cfg, 0);
    let w_on = on.param("s.merge0.w").unwrap().shape();
    let w_off = off.param("s.merge0.w").unwrap().shape();
    assert_eq!(w_on[1], w_off[1] + 4);
    assert_eq!(on.param("s.merge1.w").unwrap().shape()[1], off.param("s.merge1.w").unwrap().shape()[1] + 12);
    let out = forward_joint(&off, randn([1, 3, 8, 8], 0), BnMode::Eval).unwrap();
    assert_eq!(out.seg_logits.shape(), [1, 3, 8, 8]);
}

// ---- partition independence ----

fn head_outputs(m: &ModelParams<f64>, x: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let out = forward_joint(m, x.clone(), BnMode::Eval).unwrap();
    (out.grade_logits, out.seg_logits)
}

fn nudge(m: &ModelParams<f64>, prefix: &str) -> ModelParams<f64> {
    let mut m = m.clone();
    let name = m.param_names().into_iter().find(|n| n.starts_with(prefix) && n.ends_with(".w")).unwrap();
    m.param_mut(&name).unwrap().data_mut().iter_mut().for_each(|v| *v *= 1.5);
    m
}

#[test]
fn each_head_depends_only_on_its_partitions() {
    let m = model(&ArchConfig::tiny(), 2);
    let x = randn([2, 3, 8, 8], 9);
    let (g0, s0) = head_outputs(&m, &x);
    let (g, s) = head_outputs(&nudge(&m, "c."), &x);
    assert_ne!(g, g0);
    assert_eq!(s, s0);
    let (g, s) = head_outputs(&nudge(&m, "s."), &x);
    assert_eq!(g, g0);
    assert_ne!(s, s0);
    let (g, s) = head_outputs(&nudge(&m, "m."), &x);
    assert_ne!(g, g0);
    assert_ne!(s, s0);
}

#[test]
fn cross_gradients_are_exactly_zero() {
    let m = model(&ArchConfig::tiny(), 1);
    let mut g = Graph::<f64>::new();
    let mut s = Session::new(&mut g, &m, BnMode::Train);
    let x = s.g.input(randn([2, 3, 8, 8], 1));
    let taps = s.trunk(x).unwrap();
    let grade = s.classifier(&taps).unwrap();
    let seg = s.decoder(&taps).unwrap();
    let record = s.finish();
    let clf_loss = g.softmax_cross_entropy(grade, &[0, 2], Reduction::PerSampleMean).unwrap();
    let labels: Vec<usize> = (0..128).map(|i| i % 3).collect();
    let seg_loss = g.softmax_cross_entropy(seg, &labels, Reduction::PerPixelMean).unwrap();
    for (loss, foreign, own) in [(clf_loss, "s.", "c."), (seg_loss, "c.", "s.")] {
        g.zero_grad();
        g.backward(loss).unwrap();
        for (name, &v) in &record.vars {
            let grad = g.grad_or_zeros(v);
            let zero = grad.data().iter().all(|&d| d == 0.0);
            if name.starts_with(foreign) {
                assert!(zero, "{name} leaks");
            }
            if name.starts_with(own) && name.ends_with(".w") {
                assert!(!zero, "{name} unreached");
            }
        }
    }
}

#[test]
fn tiny_model_passes_gradient_check() {
    let row = crate::verify::check_joint_model(None, crate::engine::GradCheckOptions::default()).unwrap();
    assert!(row.passed(), "{row:?}");
    assert!(row.checked > 500);
}

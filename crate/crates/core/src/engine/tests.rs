use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Direct nested-loop correlation with explicit padding offsets.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, same: bool) -> Tensor<f64> {
    let [n, cin, h, wd] = x.shape();
    let [cout, _, kh, kw] = w.shape();
    let (ho, wo, pt, pl) = if same {
        let ho = h.div_ceil(stride);
        let wo = wd.div_ceil(stride);
        let ph = ((ho - 1) * stride + kh).saturating_sub(h);
        let pw = ((wo - 1) * stride + kw).saturating_sub(wd);
        (ho, wo, ph / 2, pw / 2)
    } else {
        ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
    };
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pt as isize;
                                let ix = (ox * stride + kx) as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += x.at(b, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                            }
                        }
                    }
                    let o = out.offset(b, co, oy, ox);
                    out.data_mut()[o] = s;
                }
            }
        }
    }
    out
}

fn naive_maxpool(x: &Tensor<f64>, k: usize, stride: usize) -> Tensor<f64> {
    let [n, c, h, w] = x.shape();
    let (ho, wo) = ((h - k) / stride + 1, (w - k) / stride + 1);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut m = f64::NEG_INFINITY;
                    for ky in 0..k {
                        for kx in 0..k {
                            m = m.max(x.at(b, ch, oy * stride + ky, ox * stride + kx));
                        }
                    }
                    let o = out.offset(b, ch, oy, ox);
                    out.data_mut()[o] = m;
                }
            }
        }
    }
    out
}

fn inner(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn conv_same_padding_shape() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros([1, 3, 64, 64]));
    let w = g.input(Tensor::zeros([16, 3, 3, 3]));
    let y = g.conv2d(x, w, 1, Padding::Same).unwrap();
    assert_eq!(g.value(y).shape(), [1, 16, 64, 64]);
}

#[test]
fn conv_identity_kernel() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full([1, 1, 3, 3], 1.0));
    let w = g.input(Tensor::full([1, 1, 1, 1], 1.0));
    let y = g.conv2d(x, w, 1, Padding::Same).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn conv_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xt = rand_tensor(&mut rng, [2, 3, 8, 8]);
    let wt = rand_tensor(&mut rng, [4, 3, 3, 3]);
    let mut g = Graph::new();
    let x = g.input(xt.clone());
    let w = g.input(wt.clone());
    let y = g.conv2d(x, w, 2, Padding::Same).unwrap();
    let expect = naive_conv(&xt, &wt, 2, true);
    assert_eq!(g.value(y).shape(), [2, 4, 4, 4]);
    assert!(max_abs_diff(g.value(y), &expect) < 1e-12);
}

#[test]
fn conv_matches_oracle_over_small_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=2 {
        for c in [1, 4] {
            for hw in [1, 2, 5, 8, 9] {
                for (kh, kw) in [(1, 1), (3, 3), (1, 5), (5, 1), (2, 2)] {
                    for stride in [1, 2, 3] {
                        for same in [true, false] {
                            if !same && (kh > hw || kw > hw) {
                                continue;
                            }
                            let xt = rand_tensor(&mut rng, [n, c, hw, hw]);
                            let wt = rand_tensor(&mut rng, [3, c, kh, kw]);
                            let mut g = Graph::new();
                            let x = g.input(xt.clone());
                            let w = g.input(wt.clone());
                            let pad = if same { Padding::Same } else { Padding::Valid };
                            let Ok(y) = g.conv2d(x, w, stride, pad) else {
                                continue;
                            };
                            let expect = naive_conv(&xt, &wt, stride, same);
                            assert!(
                                max_abs_diff(g.value(y), &expect) < 1e-12,
                                "n={n} c={c} hw={hw} k={kh}x{kw} s={stride} same={same}"
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn conv_rejects_channel_mismatch_and_zero_stride() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([1, 3, 4, 4]));
    let w = g.input(Tensor::zeros([2, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, w, 1, Padding::Same), Err(Error::Dimension(_))));
    let w = g.input(Tensor::zeros([2, 3, 3, 3]));
    assert!(matches!(g.conv2d(x, w, 0, Padding::Same), Err(Error::Argument(_))));
    assert!(matches!(g.conv2d_transpose(x, w, 0), Err(Error::Argument(_))));
}

#[test]
fn transpose_doubles_resolution() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros([1, 64, 16, 16]));
    let w = g.input(Tensor::zeros([64, 32, 2, 2]));
    let y = g.conv2d_transpose(x, w, 2).unwrap();
    assert_eq!(g.value(y).shape(), [1, 32, 32, 32]);
}

#[test]
fn transpose_stamps_delta() {
    let mut xt = Tensor::<f64>::zeros([1, 1, 3, 3]);
    let o = xt.offset(0, 0, 1, 2);
    xt.data_mut()[o] = 1.0;
    let mut g = Graph::new();
    let x = g.input(xt);
    let w = g.input(Tensor::full([1, 1, 2, 2], 1.0));
    let y = g.conv2d_transpose(x, w, 2).unwrap();
    let out = g.value(y);
    for yy in 0..6 {
        for xx in 0..6 {
            let expect = if (2..4).contains(&yy) && (4..6).contains(&xx) { 1.0 } else { 0.0 };
            assert_eq!(out.at(0, 0, yy, xx), expect, "({yy},{xx})");
        }
    }
}

#[test]
fn transpose_is_adjoint_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for stride in [1, 2] {
        for k in [1, 2, 3] {
            for hw in [4, 7, 8] {
                let wt = rand_tensor(&mut rng, [5, 3, k, k]);
                let at = rand_tensor(&mut rng, [2, 3, hw, hw]);
                let mut g = Graph::new();
                let a = g.input(at.clone());
                let w = g.input(wt.clone());
                let fwd = g.conv2d(a, w, stride, Padding::Valid).unwrap();
                let yt = rand_tensor(&mut rng, g.value(fwd).shape());
                let y = g.input(yt.clone());
                let back = g.conv2d_transpose(y, w, stride).unwrap();
                // transpose output can be shorter than `a` when (hw-k) % stride != 0
                let bv = g.value(back);
                let mut rhs = 0.0;
                for b in 0..2 {
                    for c in 0..3 {
                        for i in 0..bv.h() {
                            for j in 0..bv.w() {
                                rhs += at.at(b, c, i, j) * bv.at(b, c, i, j);
                            }
                        }
                    }
                }
                let lhs = inner(g.value(fwd), &yt);
                assert!((lhs - rhs).abs() < 1e-10, "s={stride} k={k} hw={hw}: {lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn maxpool_halving_and_hand_case() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([1, 16, 64, 64]));
    let y = g.maxpool2d(x, 2, 2, Padding::Valid).unwrap();
    assert_eq!(g.value(y).shape(), [1, 16, 32, 32]);

    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true);
    let y = g.maxpool2d(x, 2, 2, Padding::Valid).unwrap();
    assert_eq!(g.value(y).item(), 4.0);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn maxpool_ties_route_to_first_index() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full([1, 1, 2, 2], 5.0), true);
    let y = g.maxpool2d(x, 2, 2, Padding::Valid).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn maxpool_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xt = rand_tensor(&mut rng, [1, 4, 9, 9]);
    let mut g = Graph::new();
    let x = g.input(xt.clone());
    let y = g.maxpool2d(x, 3, 3, Padding::Valid).unwrap();
    assert_eq!(g.value(y), &naive_maxpool(&xt, 3, 3));
    for (k, s) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
        for hw in [3, 5, 9] {
            let xt = rand_tensor(&mut rng, [2, 4, hw, hw]);
            let mut g = Graph::new();
            let x = g.input(xt.clone());
            let y = g.maxpool2d(x, k, s, Padding::Valid).unwrap();
            assert_eq!(g.value(y), &naive_maxpool(&xt, k, s));
        }
    }
}

#[test]
fn maxpool_same_stride_one_preserves_shape() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([2, 3, 7, 5]));
    let y = g.maxpool2d(x, 3, 1, Padding::Same).unwrap();
    assert_eq!(g.value(y).shape(), [2, 3, 7, 5]);
    let too_big = g.maxpool2d(x, 6, 1, Padding::Valid);
    assert!(matches!(too_big, Err(Error::Dimension(_))));
}

#[test]
fn global_avg_pool_cases() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full([2, 3, 4, 5], 7.0));
    let y = g.global_avg_pool(x).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 7.0));

    let x = g.input(Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.global_avg_pool(x).unwrap();
    assert_eq!(g.value(y).item(), 2.5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xt = rand_tensor(&mut rng, [3, 8, 5, 5]);
    let x = g.input(xt.clone());
    let y = g.global_avg_pool(x).unwrap();
    for b in 0..3 {
        for c in 0..8 {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    s += xt.at(b, c, i, j);
                }
            }
            assert!((g.value(y).at(b, c, 0, 0) - s / 25.0).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_norm_train_normalizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xt = Tensor::from_fn([4, 3, 3, 3], |_| rng.random_range(-3.0..5.0));
    let mut g = Graph::<f64>::new();
    let x = g.input(xt);
    let gamma = g.input(Tensor::full([1, 3, 1, 1], 1.0));
    let beta = g.input(Tensor::zeros([1, 3, 1, 1]));
    let (y, stats) = g
        .batch_norm(x, gamma, beta, &[0.0; 3], &[1.0; 3], BnMode::Train)
        .unwrap();
    assert!(stats.is_some());
    let yv = g.value(y);
    for c in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|b| (0..9).map(move |p| (b, p)))
            .map(|(b, p)| yv.at(b, c, p / 3, p % 3))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-4, "var {v}");
    }
}

#[test]
fn batch_norm_eval_identity_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xt = rand_tensor(&mut rng, [2, 2, 3, 3]);
    let mut g = Graph::<f64>::new();
    let x = g.input(xt.clone());
    let gamma = g.input(Tensor::full([1, 2, 1, 1], 1.0));
    let beta = g.input(Tensor::zeros([1, 2, 1, 1]));
    let (y, stats) = g
        .batch_norm(x, gamma, beta, &[0.0; 2], &[1.0; 2], BnMode::Eval)
        .unwrap();
    assert!(stats.is_none());
    let scale = 1.0 / (1.0 + BN_EPSILON).sqrt();
    for (a, b) in g.value(y).data().iter().zip(xt.data()) {
        assert!((a - b * scale).abs() < 1e-12);
    }
    let bad = g.batch_norm(x, gamma, beta, &[0.0; 3], &[1.0; 3], BnMode::Eval);
    assert!(matches!(bad, Err(Error::Dimension(_))));
}

#[test]
fn relu_add_concat() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_vec([1, 1, 1, 2], vec![-2.0, 3.0]).unwrap());
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 3.0]);
    let z = g.input(Tensor::zeros([1, 1, 1, 2]));
    let s = g.add(x, z).unwrap();
    assert_eq!(g.value(s), g.value(x));
    let other = g.input(Tensor::zeros([1, 2, 1, 2]));
    assert!(matches!(g.add(x, other), Err(Error::Dimension(_))));
}

#[test]
fn concat_backward_lands_in_one_input() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::zeros([1, 16, 8, 8]), true);
    let b = g.leaf(Tensor::zeros([1, 32, 8, 8]), true);
    let c = g.concat_channels(&[a, b]).unwrap();
    assert_eq!(g.value(c).shape(), [1, 48, 8, 8]);
    // one-hot output gradient at channel 20, pixel (3,5) -> b channel 4
    let mut coef = vec![0.0; 48 * 64];
    coef[20 * 64 + 3 * 8 + 5] = 1.0;
    let l = g.dot(c, coef).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad_or_zeros(a).data().iter().all(|&v| v == 0.0));
    let gb = g.grad(b).unwrap();
    let hits: Vec<usize> = (0..gb.len()).filter(|&i| gb.data()[i] != 0.0).collect();
    assert_eq!(hits, vec![4 * 64 + 3 * 8 + 5]);
    let bad = g.leaf(Tensor::zeros([1, 1, 4, 4]), false);
    assert!(matches!(g.concat_channels(&[a, bad]), Err(Error::Dimension(_))));
}

#[test]
fn fully_connected_cases() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_vec([1, 2, 1, 1], vec![1.0, 2.0]).unwrap());
    // C×K = 2×3
    let w = g.input(Tensor::from_vec([2, 3, 1, 1], vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap());
    let b = g.input(Tensor::zeros([1, 3, 1, 1]));
    let y = g.fully_connected(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);

    let eye = g.input(Tensor::from_vec([2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let b2 = g.input(Tensor::zeros([1, 2, 1, 1]));
    let y = g.fully_connected(x, eye, b2).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let spatial = g.input(Tensor::zeros([1, 2, 2, 1]));
    assert!(matches!(g.fully_connected(spatial, eye, b2), Err(Error::Dimension(_))));
}

#[test]
fn cross_entropy_uniform_is_ln_k() {
    for k in [2usize, 5, 6] {
        let mut g = Graph::<f64>::new();
        let l = g.input(Tensor::full([3, k, 1, 1], 0.7));
        let loss = g
            .softmax_cross_entropy(l, &[0, 1, k - 1], Reduction::PerSampleMean)
            .unwrap();
        assert!((g.value(loss).item() - (k as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_saturated_and_errors() {
    let mut g = Graph::<f64>::new();
    let l = g.input(Tensor::from_vec([1, 3, 1, 1], vec![0.0, 1e6, 0.0]).unwrap());
    let loss = g.softmax_cross_entropy(l, &[1], Reduction::PerSampleMean).unwrap();
    assert!(g.value(loss).item().abs() < 1e-12);
    assert!(matches!(
        g.softmax_cross_entropy(l, &[3], Reduction::PerSampleMean),
        Err(Error::Argument(_))
    ));
    let px = g.input(Tensor::zeros([1, 3, 2, 2]));
    assert!(g.softmax_cross_entropy(px, &[0; 4], Reduction::PerSampleMean).is_err());
    assert!(g.softmax_cross_entropy(px, &[0; 4], Reduction::PerPixelMean).is_ok());
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, k, h, w) = (2, 5, 3, 2);
    let lt = Tensor::from_fn([n, k, h, w], |_| rng.random_range(-4.0..4.0));
    let labels: Vec<usize> = (0..n * h * w).map(|_| rng.random_range(0..k)).collect();
    let mut g = Graph::<f64>::new();
    let l = g.leaf(lt.clone(), true);
    let loss = g.softmax_cross_entropy(l, &labels, Reduction::PerPixelMean).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(l).unwrap();
    let count = (n * h * w) as f64;
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let z: f64 = (0..k).map(|c| lt.at(b, c, i, j).exp()).sum();
                for c in 0..k {
                    let p = lt.at(b, c, i, j).exp() / z;
                    let onehot = if labels[(b * h + i) * w + j] == c { 1.0 } else { 0.0 };
                    let expect = (p - onehot) / count;
                    assert!((grad.at(b, c, i, j) - expect).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn backward_linear_and_fanout() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full([1, 2, 2, 2], 3.0), true);
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));

    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full([1, 2, 2, 2], 3.0), true);
    let d = g.add(x, x).unwrap();
    let s = g.sum(d);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 2.0));
    assert!(matches!(g.backward(d), Err(Error::Argument(_))));
}

#[test]
fn gradcheck_exact_for_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, [1, 3, 4, 4]);
    let coef: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = grad_check(
        |g, p| g.dot(p[0], coef.clone()),
        &[x],
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-10);
    assert_eq!(report.checked, 48);
}

#[test]
fn gradcheck_conv_relu_ce_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_tensor(&mut rng, [2, 3, 6, 6]);
    let w = rand_tensor(&mut rng, [4, 3, 3, 3]);
    let labels: Vec<usize> = (0..2 * 36).map(|_| rng.random_range(0..4)).collect();
    let report = grad_check(
        |g, p| {
            let y = g.conv2d(p[0], p[1], 1, Padding::Same)?;
            let r = g.relu(y);
            g.softmax_cross_entropy(r, &labels, Reduction::PerPixelMean)
        },
        &[x, w],
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn injected_conv_fault_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, [1, 2, 5, 5]);
    let w = rand_tensor(&mut rng, [2, 2, 3, 3]);
    let coef: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = grad_check(
        |g, p| {
            g.set_fault(Some(Fault::Conv2dInputGrad));
            let y = g.conv2d(p[0], p[1], 1, Padding::Same)?;
            g.dot(y, coef.clone())
        },
        &[x, w],
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-4);
}

#[test]
fn f32_and_f64_agree_on_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xt = rand_tensor(&mut rng, [1, 4, 8, 8]);
    let wt = rand_tensor(&mut rng, [4, 4, 3, 3]);
    let mut g64 = Graph::new();
    let x = g64.input(xt.clone());
    let w = g64.input(wt.clone());
    let y64 = g64.conv2d(x, w, 1, Padding::Same).unwrap();
    let mut g32 = Graph::<f32>::new();
    let x = g32.input(xt.cast());
    let w = g32.input(wt.cast());
    let y32 = g32.conv2d(x, w, 1, Padding::Same).unwrap();
    let diff = max_abs_diff(g64.value(y64), &g32.value(y32).cast());
    assert!(diff < 1e-5);
}

#[test]
fn parallel_kernels_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let xt: Tensor<f32> = rand_tensor(&mut rng, [5, 4, 9, 9]).cast();
    let wt: Tensor<f32> = rand_tensor(&mut rng, [6, 4, 3, 3]).cast();
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(xt.clone(), true);
        let w = g.leaf(wt.clone(), true);
        let y = g.conv2d(x, w, 2, Padding::Same).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        (g.value(y).clone(), g.grad_or_zeros(x), g.grad_or_zeros(w))
    };
    let single = run();
    set_threads(3);
    let multi = run();
    set_threads(1);
    assert_eq!(single, multi);
}

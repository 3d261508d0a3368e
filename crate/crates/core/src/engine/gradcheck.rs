//! Central finite-difference gradient verification in 64-bit.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates probed per parameter; smaller parameters are probed fully.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-4,
            coords_per_param: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |numeric|)` over probed coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±eps probe changed the relu/maxpool pattern.
    pub skipped: usize,
}

struct Eval {
    loss: f64,
    pattern: Vec<u32>,
}

fn evaluate<F>(f: &mut F, params: &[Tensor<f64>]) -> Result<(Graph<f64>, Var, Vec<Var>)>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params
        .iter()
        .enumerate()
        .map(|(i, p)| g.param(&format!("p{i}"), p.clone()))
        .collect();
    let loss = f(&mut g, &vars)?;
    Ok((g, loss, vars))
}

fn probe<F>(f: &mut F, params: &[Tensor<f64>]) -> Result<Eval>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (g, loss, _) = evaluate(f, params)?;
    Ok(Eval {
        loss: g.value(loss).item(),
        pattern: g.activation_pattern(),
    })
}

/// Compares the tape's gradients of the scalar built by `f` against central
/// differences on a random subsample of every parameter's coordinates.
///
/// A coordinate whose perturbation moves any relu input across zero or any
/// maxpool argmax is replaced by another draw; the function is not
/// differentiable there.
pub fn grad_check<F>(mut f: F, params: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (mut g, loss, vars) = evaluate(&mut f, params)?;
    if g.value(loss).len() != 1 {
        return Err(Error::arg("grad_check: function must return a scalar"));
    }
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
    let base_pattern = g.activation_pattern();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        let len = p.len();
        // candidate order: a random permutation, consumed until enough coordinates pass
        let order = sample(&mut rng, len, len);
        let want = opts.coords_per_param.min(len);
        let mut done = 0;
        for idx in order.iter() {
            if done == want {
                break;
            }
            let orig = p.data()[idx];
            work[pi].data_mut()[idx] = orig + opts.eps;
            let plus = probe(&mut f, &work)?;
            work[pi].data_mut()[idx] = orig - opts.eps;
            let minus = probe(&mut f, &work)?;
            work[pi].data_mut()[idx] = orig;
            if plus.pattern != base_pattern || minus.pattern != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * opts.eps);
            let err = (analytic[pi].data()[idx] - numeric).abs() / numeric.abs().max(1.0);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
            done += 1;
        }
    }
    Ok(report)
}

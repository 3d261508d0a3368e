use std::collections::BTreeMap;

use super::optim::{nesterov_step, Agent, Agents};
use super::Mode;
use crate::arch::{ModelParams, Session};
use crate::engine::{BnMode, Float, Graph, Reduction, Tensor};
use crate::error::{Error, Result};

/// Standardized images and labels: one grade per image for the classifier,
/// one class id per pixel (`(n, h, w)` order) for the segmenter.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundLosses {
    pub clf: Option<f64>,
    pub seg: Option<f64>,
}

/// Train-mode loss and gradients of one agent's objective over the
/// parameters it reaches, plus the batch-norm statistics of the pass.
pub fn agent_gradients<T: Float>(
    model: &ModelParams<T>,
    batch: &Batch<T>,
    agent: Agent,
) -> Result<(f64, BTreeMap<String, Tensor<T>>, Vec<(String, crate::engine::BatchStats<T>)>)> {
    let mut g = Graph::new();
    let mut s = Session::new(&mut g, model, BnMode::Train);
    let x = s.g.input(batch.images.clone());
    let taps = s.trunk(x)?;
    let (logits, reduction) = match agent {
        Agent::Classifier => (s.classifier(&taps)?, Reduction::PerSampleMean),
        Agent::Segmenter => (s.decoder(&taps)?, Reduction::PerPixelMean),
    };
    let record = s.finish();
    let loss = g.softmax_cross_entropy(logits, &batch.labels, reduction)?;
    g.backward(loss)?;
    let grads = record
        .vars
        .iter()
        .filter_map(|(name, &v)| g.grad(v).map(|t| (name.clone(), t.clone())))
        .collect();
    Ok((g.value(loss).item().to_f64_lossy(), grads, record.bn_updates))
}

fn agent_step<T: Float>(
    model: &mut ModelParams<T>,
    batch: &Batch<T>,
    agents: &mut Agents<T>,
    agent: Agent,
    lr: f64,
) -> Result<f64> {
    let (loss, grads, bn) = agent_gradients(model, batch, agent)?;
    nesterov_step(model, &grads, agents.get_mut(agent), lr)?;
    model.apply_bn_updates(&bn)?;
    Ok(loss)
}

/// One round: the classifier agent steps on `clf`, then the segmentation
/// agent steps on `seg` with the updated trunk. Modes skip one of the two.
pub fn cooperative_round<T: Float>(
    model: &mut ModelParams<T>,
    clf: Option<&Batch<T>>,
    seg: Option<&Batch<T>>,
    agents: &mut Agents<T>,
    (clf_lr, seg_lr): (f64, f64),
    mode: Mode,
) -> Result<RoundLosses> {
    let mut losses = RoundLosses::default();
    if mode.trains_classifier() {
        let batch = clf.ok_or_else(|| Error::arg("classifier step needs a classifier batch"))?;
        losses.clf = Some(agent_step(model, batch, agents, Agent::Classifier, clf_lr)?);
    }
    if mode.trains_segmenter() {
        let batch = seg.ok_or_else(|| Error::arg("segmentation step needs a segmentation batch"))?;
        losses.seg = Some(agent_step(model, batch, agents, Agent::Segmenter, seg_lr)?);
    }
    Ok(losses)
}

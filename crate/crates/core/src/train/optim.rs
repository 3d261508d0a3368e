use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arch::{ModelParams, PartitionId};
use crate::engine::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agent {
    Classifier,
    Segmenter,
}

impl Agent {
    /// The partitions this agent's loss reaches.
    pub fn partitions(self) -> [PartitionId; 2] {
        match self {
            Agent::Classifier => [PartitionId::Trunk, PartitionId::Classifier],
            Agent::Segmenter => [PartitionId::Trunk, PartitionId::Decoder],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Agent::Classifier => "clf",
            Agent::Segmenter => "seg",
        }
    }
}

/// Momentum buffers of one agent, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub agent: Agent,
    pub base_lr: f64,
    pub momentum: f64,
    pub step: u64,
    pub velocity: BTreeMap<String, Vec<T>>,
}

impl<T: Float> OptimizerState<T> {
    /// Zero velocity for every parameter the agent reaches.
    pub fn new(model: &ModelParams<T>, agent: Agent, base_lr: f64, momentum: f64) -> Self {
        let velocity = agent
            .partitions()
            .iter()
            .flat_map(|&p| model.partition(p).params.iter())
            .map(|(name, t)| (name.clone(), vec![T::zero(); t.len()]))
            .collect();
        OptimizerState {
            agent,
            base_lr,
            momentum,
            step: 0,
            velocity,
        }
    }
}

/// The two agents; each holds its own trunk velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Agents<T> {
    pub clf: OptimizerState<T>,
    pub seg: OptimizerState<T>,
}

impl<T: Float> Agents<T> {
    pub fn new(model: &ModelParams<T>, clf_lr: f64, seg_lr: f64, momentum: f64) -> Self {
        Agents {
            clf: OptimizerState::new(model, Agent::Classifier, clf_lr, momentum),
            seg: OptimizerState::new(model, Agent::Segmenter, seg_lr, momentum),
        }
    }

    pub fn get_mut(&mut self, agent: Agent) -> &mut OptimizerState<T> {
        match agent {
            Agent::Classifier => &mut self.clf,
            Agent::Segmenter => &mut self.seg,
        }
    }
}

/// `v ← μv − lr·g; θ ← θ + μv − lr·g` over every parameter in `state`.
/// Nothing is updated unless every gradient is present with the right shape.
pub fn nesterov_step<T: Float>(
    model: &mut ModelParams<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    for name in state.velocity.keys() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Consistency(format!("no gradient for {name}")))?;
        if g.shape() != model.param(name)?.shape() {
            return Err(Error::Consistency(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                g.shape(),
                model.param(name)?.shape()
            )));
        }
    }
    let mu = T::from_f64_lossy(state.momentum);
    let lr = T::from_f64_lossy(lr);
    for (name, v) in state.velocity.iter_mut() {
        let g = grads[name].data();
        let theta = model.param_mut(name)?.data_mut();
        for ((t, v), &g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = mu * *v - lr * g;
            *t += mu * *v - lr * g;
        }
    }
    state.step += 1;
    Ok(())
}

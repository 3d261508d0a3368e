use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{BatchStats, Float, Tensor};
use crate::error::{Error, Result};

/// Running-average momentum for batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.9;

/// Which of the three disjoint parameter sets a name belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartitionId {
    /// Shared trunk.
    Trunk,
    /// Classifier head.
    Classifier,
    /// Segmentation decoder.
    Decoder,
}

impl PartitionId {
    pub const ALL: [PartitionId; 3] = [PartitionId::Trunk, PartitionId::Classifier, PartitionId::Decoder];

    pub fn prefix(self) -> &'static str {
        match self {
            PartitionId::Trunk => "m.",
            PartitionId::Classifier => "c.",
            PartitionId::Decoder => "s.",
        }
    }

    pub fn of(name: &str) -> Option<PartitionId> {
        Self::ALL.into_iter().find(|p| name.starts_with(p.prefix()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Float> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// `r ← momentum·r + (1 − momentum)·batch`.
    pub fn update(&mut self, batch: &BatchStats<T>, momentum: f64) {
        let m = T::from_f64_lossy(momentum);
        let rest = T::one() - m;
        for (r, &b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = m * *r + rest * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&batch.var) {
            *r = m * *r + rest * b;
        }
    }
}

/// One named parameter registry plus the batch-norm running statistics of
/// the layers it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub params: BTreeMap<String, Tensor<T>>,
    pub running: BTreeMap<String, RunningStats<T>>,
}

impl<T> Default for Partition<T> {
    fn default() -> Self {
        Partition {
            params: BTreeMap::new(),
            running: BTreeMap::new(),
        }
    }
}

impl<T: Float> Partition<T> {
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub(crate) fn insert(&mut self, name: String, t: Tensor<T>) -> Result<()> {
        if self.params.insert(name.clone(), t).is_some() {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        Ok(())
    }
}

/// The trunk, classifier and decoder parameter sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub cfg: super::ArchConfig,
    pub trunk: Partition<T>,
    pub classifier: Partition<T>,
    pub decoder: Partition<T>,
}

impl<T: Float> ModelParams<T> {
    pub fn partition(&self, id: PartitionId) -> &Partition<T> {
        match id {
            PartitionId::Trunk => &self.trunk,
            PartitionId::Classifier => &self.classifier,
            PartitionId::Decoder => &self.decoder,
        }
    }

    pub fn partition_mut(&mut self, id: PartitionId) -> &mut Partition<T> {
        match id {
            PartitionId::Trunk => &mut self.trunk,
            PartitionId::Classifier => &mut self.classifier,
            PartitionId::Decoder => &mut self.decoder,
        }
    }

    pub(crate) fn for_name(&self, name: &str) -> Result<&Partition<T>> {
        PartitionId::of(name)
            .map(|p| self.partition(p))
            .ok_or_else(|| Error::Consistency(format!("parameter {name} has no partition prefix")))
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.for_name(name)?
            .params
            .get(name)
            .ok_or_else(|| Error::Consistency(format!("unknown parameter {name}")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let id = PartitionId::of(name)
            .ok_or_else(|| Error::Consistency(format!("parameter {name} has no partition prefix")))?;
        self.partition_mut(id)
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Consistency(format!("unknown parameter {name}")))
    }

    pub fn running(&self, name: &str) -> Result<&RunningStats<T>> {
        self.for_name(name)?
            .running
            .get(name)
            .ok_or_else(|| Error::Consistency(format!("unknown batch-norm state {name}")))
    }

    pub fn param_count(&self) -> usize {
        PartitionId::ALL.iter().map(|&p| self.partition(p).param_count()).sum()
    }

    /// Every parameter name in partition order, then lexicographic.
    pub fn param_names(&self) -> Vec<String> {
        PartitionId::ALL
            .iter()
            .flat_map(|&p| self.partition(p).params.keys().cloned())
            .collect()
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn apply_bn_updates(&mut self, updates: &[(String, BatchStats<T>)]) -> Result<()> {
        for (name, stats) in updates {
            let id = PartitionId::of(name)
                .ok_or_else(|| Error::Consistency(format!("batch-norm {name} has no partition")))?;
            let rs = self
                .partition_mut(id)
                .running
                .get_mut(name)
                .ok_or_else(|| Error::Consistency(format!("unknown batch-norm state {name}")))?;
            rs.update(stats, BN_MOMENTUM);
        }
        Ok(())
    }

    /// Precision conversion of every tensor and statistic.
    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        let conv = |p: &Partition<T>| Partition {
            params: p.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            running: p
                .running
                .iter()
                .map(|(k, r)| {
                    let c = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect();
                    (k.clone(), RunningStats { mean: c(&r.mean), var: c(&r.var) })
                })
                .collect(),
        };
        ModelParams {
            cfg: self.cfg.clone(),
            trunk: conv(&self.trunk),
            classifier: conv(&self.classifier),
            decoder: conv(&self.decoder),
        }
    }
}

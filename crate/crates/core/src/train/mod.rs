//! Cooperative training: a classifier agent and a segmentation agent, each
//! with its own Nesterov optimizer over the shared trunk plus its private
//! head, stepping in turn every round.

mod augment;
mod optim;
mod round;
mod run;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment, randomize_labels, standardize, Augmentation, Task};
pub use optim::{nesterov_step, Agent, Agents, OptimizerState};
pub use round::{agent_gradients, cooperative_round, Batch, RoundLosses};
pub use run::{evaluate, prepare_eval_set, train, EvalSet, ExperimentReport, Metrics, ReportRow, TrainOutcome, REPORT_HEADER};

/// Which agents take steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "cli", derive(clap::ValueEnum))]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Joint,
    SegOnly,
    ClfOnly,
}

impl Mode {
    pub fn trains_classifier(self) -> bool {
        self != Mode::SegOnly
    }

    pub fn trains_segmenter(self) -> bool {
        self != Mode::ClfOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seg_lr: f64,
    /// Classifier learning rate over segmentation learning rate.
    pub lr_ratio: f64,
    pub clf_batch: usize,
    /// Classifier batch over segmentation batch.
    pub batch_ratio: usize,
    pub rounds: usize,
    pub poly_power: f64,
    pub momentum: f64,
    pub random_label_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Validation every this many rounds (and after the last one).
    pub eval_interval: usize,
    /// Intermediate checkpoints every this many rounds; 0 keeps only the final one.
    pub checkpoint_interval: usize,
    pub eval_batch: usize,
    /// Validation images whose predicted masks are dumped at every evaluation.
    pub mask_dumps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seg_lr: 1e-3,
            lr_ratio: 30.0,
            clf_batch: 32,
            batch_ratio: 8,
            rounds: 3000,
            poly_power: 0.9,
            momentum: 0.9,
            random_label_fraction: 0.0,
            seed: 0,
            mode: Mode::Joint,
            eval_interval: 250,
            checkpoint_interval: 0,
            eval_batch: 25,
            mask_dumps: 8,
        }
    }
}

impl TrainConfig {
    pub fn seg_batch(&self) -> usize {
        self.clf_batch / self.batch_ratio.max(1)
    }

    pub fn clf_lr(&self) -> f64 {
        self.lr_ratio * self.seg_lr
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.seg_lr) || !finite_nonneg(self.lr_ratio) {
            return Err(Error::config("train.seg_lr and train.lr_ratio must be finite and non-negative"));
        }
        if self.batch_ratio == 0 || self.clf_batch == 0 || self.clf_batch % self.batch_ratio != 0 {
            return Err(Error::config(format!(
                "train.clf_batch = {} must be a positive multiple of train.batch_ratio = {}",
                self.clf_batch, self.batch_ratio
            )));
        }
        if !finite_nonneg(self.poly_power) {
            return Err(Error::config("train.poly_power must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("train.momentum = {} is outside [0,1)", self.momentum)));
        }
        if !(0.0..=1.0).contains(&self.random_label_fraction) {
            return Err(Error::config(format!(
                "train.random_label_fraction = {} is outside [0,1]",
                self.random_label_fraction
            )));
        }
        if self.eval_interval == 0 || self.eval_batch == 0 {
            return Err(Error::config("train.eval_interval and train.eval_batch must be positive"));
        }
        Ok(())
    }
}

/// `lr0 · (1 − step/total)^power`.
pub fn poly_lr(step: usize, total: usize, lr0: f64, power: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::arg("poly_lr: total steps must be positive"));
    }
    if step > total {
        return Err(Error::arg(format!("poly_lr: step {step} beyond total {total}")));
    }
    Ok(lr0 * (1.0 - step as f64 / total as f64).powf(power))
}

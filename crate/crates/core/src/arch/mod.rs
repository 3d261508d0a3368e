//! Residual inception blocks, partial attention gating and the joint model:
//! a shared trunk feeding a classifier head and an upsampling decoder.

mod layers;
mod model;
mod pag;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{inception_param_count, ConvUnit, InceptionBlock};
pub use model::{build_model, forward_joint, EncoderTaps, JointOutput, Session, SessionRecord};
pub use pag::{pag_merge, pag_plan, pag_select, PagEntry};
pub use params::{ModelParams, Partition, PartitionId, RunningStats, BN_MOMENTUM};

/// Channel width and block count of one encoder level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub channels: usize,
    pub blocks: usize,
}

/// How pooled encoder taps are fused into an upsampled decoder tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PagFusion {
    /// Channel concat followed by a 1×1 conv, BN and ReLU.
    #[default]
    Concat,
    /// Ablation: taps ignored, the 1×1 conv sees only the upsampled tensor.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub input_hw: usize,
    pub stem_channels: usize,
    pub levels: Vec<Level>,
    pub bottleneck_channels: usize,
    pub num_seg_classes: usize,
    pub num_grades: usize,
    pub clf_head_blocks: usize,
    pub pag_fusion: PagFusion,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_hw: 64,
            stem_channels: 16,
            levels: vec![
                Level { channels: 16, blocks: 1 },
                Level { channels: 32, blocks: 1 },
                Level { channels: 64, blocks: 1 },
            ],
            bottleneck_channels: 128,
            num_seg_classes: 6,
            num_grades: 5,
            clf_head_blocks: 1,
            pag_fusion: PagFusion::Concat,
        }
    }
}

impl ArchConfig {
    /// Small configuration used for full-model gradient checks.
    pub fn tiny() -> Self {
        ArchConfig {
            input_hw: 8,
            stem_channels: 4,
            levels: vec![Level { channels: 4, blocks: 1 }, Level { channels: 8, blocks: 1 }],
            bottleneck_channels: 8,
            num_seg_classes: 3,
            num_grades: 3,
            clf_head_blocks: 1,
            pag_fusion: PagFusion::Concat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("arch.levels must list at least one level"));
        }
        let mut channels: Vec<(&str, usize)> = vec![
            ("arch.stem_channels", self.stem_channels),
            ("arch.bottleneck_channels", self.bottleneck_channels),
        ];
        channels.extend(self.levels.iter().map(|l| ("arch.levels[].channels", l.channels)));
        for (field, c) in channels {
            if c == 0 || c % 4 != 0 {
                return Err(Error::config(format!("{field} = {c} is not a positive multiple of 4")));
            }
        }
        if self.stem_channels != self.levels[0].channels {
            return Err(Error::config(format!(
                "arch.stem_channels = {} must equal arch.levels[0].channels = {}",
                self.stem_channels, self.levels[0].channels
            )));
        }
        let factor = 1usize << self.levels.len();
        if self.input_hw == 0 || self.input_hw % factor != 0 {
            return Err(Error::config(format!(
                "arch.input_hw = {} is not divisible by 2^{} (one halving per level)",
                self.input_hw,
                self.levels.len()
            )));
        }
        if self.bottleneck_channels % factor != 0 {
            return Err(Error::config(format!(
                "arch.bottleneck_channels = {} cannot be halved {} times by the decoder",
                self.bottleneck_channels,
                self.levels.len()
            )));
        }
        if self.num_seg_classes < 2 || self.num_grades < 2 {
            return Err(Error::config("arch.num_seg_classes and arch.num_grades must be at least 2"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

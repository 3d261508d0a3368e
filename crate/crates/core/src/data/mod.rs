//! Procedural retina-like benchmark: a fundus disc with class-styled lesion
//! blobs, the matching per-pixel mask, and a severity grade derived from the
//! lesion counts.

mod io;
mod render;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{encode_pgm8, load_dataset, save_dataset};
pub use render::{generate_layout, generate_sample, Layout, Lesion};

/// Background plus five lesion/artifact classes.
pub const NUM_SEG_CLASSES: usize = 6;
pub const NUM_GRADES: usize = 5;
/// Extra border stored around the network input for the crop augmentation.
pub const CROP_MARGIN: usize = 8;

/// How many blobs of one class a sample gets and what they look like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LesionStyle {
    /// Probability that the class is absent from a sample.
    pub absent_prob: f64,
    /// Count drawn uniformly from `1..=max_count` when present.
    pub max_count: usize,
    /// Blob radius range in pixels (arc length for artifacts).
    pub radius: (f64, f64),
    /// Opacity range of the blob's color over the fundus.
    pub intensity: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_val: usize,
    /// Network input side; samples are stored at `size + 8`.
    pub size: usize,
    pub seed: u64,
    pub num_seg_classes: usize,
    pub num_grades: usize,
    /// Styles for classes 1..=5 in order.
    pub lesions: [LesionStyle; 5],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_train: 2000,
            n_val: 500,
            size: 64,
            seed: 0,
            num_seg_classes: NUM_SEG_CLASSES,
            num_grades: NUM_GRADES,
            lesions: [
                // bright yellow dots
                LesionStyle {
                    absent_prob: 0.6,
                    max_count: 3,
                    radius: (2.0, 4.0),
                    intensity: (0.75, 0.95),
                },
                // dark red irregular blobs
                LesionStyle {
                    absent_prob: 0.75,
                    max_count: 2,
                    radius: (4.0, 8.0),
                    intensity: (0.7, 0.9),
                },
                // small red dots
                LesionStyle {
                    absent_prob: 0.5,
                    max_count: 5,
                    radius: (1.0, 2.0),
                    intensity: (0.75, 0.95),
                },
                // fuzzy pale blobs
                LesionStyle {
                    absent_prob: 0.75,
                    max_count: 2,
                    radius: (5.0, 9.0),
                    intensity: (0.5, 0.75),
                },
                // bright streak artifacts
                LesionStyle {
                    absent_prob: 0.6,
                    max_count: 2,
                    radius: (12.0, 30.0),
                    intensity: (0.6, 0.85),
                },
            ],
        }
    }
}

impl DataConfig {
    /// Side length of stored images and masks.
    pub fn stored_side(&self) -> usize {
        self.size + CROP_MARGIN
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::config("data.n_train and data.n_val must be at least 1"));
        }
        if self.size < 16 {
            return Err(Error::config(format!("data.size = {} is below 16", self.size)));
        }
        if self.num_seg_classes != NUM_SEG_CLASSES {
            return Err(Error::config(format!(
                "data.num_seg_classes = {} but the generator draws {NUM_SEG_CLASSES} classes",
                self.num_seg_classes
            )));
        }
        if self.num_grades != NUM_GRADES {
            return Err(Error::config(format!(
                "data.num_grades = {} but the grading rule yields {NUM_GRADES} grades",
                self.num_grades
            )));
        }
        for (i, s) in self.lesions.iter().enumerate() {
            let ok = (0.0..=1.0).contains(&s.absent_prob)
                && s.radius.0 > 0.0
                && s.radius.0 <= s.radius.1
                && (0.0..=1.0).contains(&s.intensity.0)
                && s.intensity.0 <= s.intensity.1
                && s.intensity.1 <= 1.0;
            if !ok {
                return Err(Error::config(format!("data.lesions[{i}] has an invalid range")));
            }
        }
        Ok(())
    }
}

/// One stored sample: `3×side×side` RGB in `[0,1]` (planar), a `side×side`
/// class-id mask, and the grade.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub side: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
    pub grade: u8,
    pub corrupted: bool,
}

/// Severity grade from lesion counts of classes 1..=5. Artifacts (class 5)
/// do not count.
pub fn grade_from_lesions(counts: [usize; 5]) -> u8 {
    let [c1, c2, c3, c4, _] = counts;
    match c3 + 2 * c1 + 3 * c2 + 3 * c4 {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=9 => 3,
        _ => 4,
    }
}

/// Generator indices of the two splits; validation follows training.
pub fn split_indices(cfg: &DataConfig) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    (0..cfg.n_train, cfg.n_train..cfg.n_train + cfg.n_val)
}

/// Renders a range of generator indices, in parallel over the engine's
/// thread budget.
pub fn generate_range(cfg: &DataConfig, range: std::ops::Range<usize>) -> Vec<Sample> {
    let indices: Vec<usize> = range.collect();
    let threads = crate::engine::threads().min(indices.len()).max(1);
    if threads == 1 {
        return indices.iter().map(|&i| generate_sample(cfg, cfg.seed, i)).collect();
    }
    let per = indices.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = indices
            .chunks(per)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|&i| generate_sample(cfg, cfg.seed, i)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generator thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests;

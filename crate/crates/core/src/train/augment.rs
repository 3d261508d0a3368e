use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Sample;
use crate::error::{Error, Result};

/// Largest zero-padded shift, in pixels, along each axis.
const MAX_SHIFT: i32 = 4;
const HUE_TURN: f64 = 0.1;
const SCALE_RANGE: (f64, f64) = (0.8, 1.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Clf,
    Seg,
}

/// One drawn transform. Geometry (crop, flips, shift) is shared by image
/// and mask; the photometric part touches the image only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    /// Top-left corner of the crop in the stored image.
    pub crop: (usize, usize),
    pub flip_h: bool,
    pub flip_v: bool,
    /// Content moves down/right by this much; vacated pixels are zero.
    pub shift: (isize, isize),
    /// Hue rotation in turns.
    pub hue: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Augmentation {
    /// Center crop of a stored image with an 8-pixel margin, nothing else.
    pub fn identity() -> Self {
        Augmentation {
            crop: (4, 4),
            flip_h: false,
            flip_v: false,
            shift: (0, 0),
            hue: 0.0,
            contrast: 1.0,
            saturation: 1.0,
        }
    }

    pub fn draw(rng: &mut impl Rng, task: Task, margin: usize) -> Self {
        let mut a = Augmentation {
            crop: (rng.random_range(0..=margin), rng.random_range(0..=margin)),
            flip_h: rng.random_bool(0.5),
            flip_v: rng.random_bool(0.5),
            shift: (
                rng.random_range(-MAX_SHIFT..=MAX_SHIFT) as isize,
                rng.random_range(-MAX_SHIFT..=MAX_SHIFT) as isize,
            ),
            ..Augmentation::identity()
        };
        if task == Task::Clf {
            let log_range = (SCALE_RANGE.0.ln(), SCALE_RANGE.1.ln());
            a.hue = rng.random_range(-HUE_TURN..=HUE_TURN);
            a.contrast = rng.random_range(log_range.0..=log_range.1).exp();
            a.saturation = rng.random_range(log_range.0..=log_range.1).exp();
        }
        a
    }

    /// Stored-image pixel that lands on output pixel `(y, x)`, or `None` in
    /// the zero padding.
    pub fn source(&self, y: usize, x: usize, out: usize) -> Option<(usize, usize)> {
        let sy = y as isize - self.shift.0;
        let sx = x as isize - self.shift.1;
        let n = out as isize;
        if !(0..n).contains(&sy) || !(0..n).contains(&sx) {
            return None;
        }
        let fy = if self.flip_v { n - 1 - sy } else { sy };
        let fx = if self.flip_h { n - 1 - sx } else { sx };
        Some((fy as usize + self.crop.0, fx as usize + self.crop.1))
    }

    /// `(3×out×out image, out×out mask)`.
    pub fn apply(&self, s: &Sample, out: usize) -> Result<(Vec<f32>, Vec<u8>)> {
        if self.crop.0 + out > s.side || self.crop.1 + out > s.side {
            return Err(Error::arg(format!(
                "crop of {out} px at {:?} does not fit a {} px image",
                self.crop, s.side
            )));
        }
        let (plane_in, plane) = (s.side * s.side, out * out);
        let mut image = vec![0f32; 3 * plane];
        let mut mask = vec![0u8; plane];
        for y in 0..out {
            for x in 0..out {
                let Some((sy, sx)) = self.source(y, x, out) else {
                    continue;
                };
                let (p, q) = (y * out + x, sy * s.side + sx);
                mask[p] = s.mask[q];
                for c in 0..3 {
                    image[c * plane + p] = s.image[c * plane_in + q];
                }
            }
        }
        if self.hue != 0.0 || self.contrast != 1.0 || self.saturation != 1.0 {
            self.photometric(&mut image, plane);
        }
        Ok((image, mask))
    }

    fn photometric(&self, image: &mut [f32], plane: usize) {
        let mean = image.iter().map(|&v| f64::from(v)).sum::<f64>() / image.len() as f64;
        for p in 0..plane {
            let rgb = [0, 1, 2].map(|c| f64::from(image[c * plane + p]));
            let (h, s, v) = rgb_to_hsv(rgb);
            let rgb = hsv_to_rgb((h + self.hue).rem_euclid(1.0), (s * self.saturation).min(1.0), v);
            for c in 0..3 {
                let jittered = (rgb[c] - mean) * self.contrast + mean;
                image[c * plane + p] = jittered.clamp(0.0, 1.0) as f32;
            }
        }
    }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0).rem_euclid(6.0);
        v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
    };
    [f(5.0), f(3.0), f(1.0)]
}

/// Draws a transform for `task` and applies it.
pub fn augment(s: &Sample, rng: &mut impl Rng, task: Task, out: usize) -> Result<(Vec<f32>, Vec<u8>)> {
    if out > s.side {
        return Err(Error::arg(format!("crop of {out} px exceeds a {} px image", s.side)));
    }
    Augmentation::draw(rng, task, s.side - out).apply(s, out)
}

/// `(x − mean) / max(std, 1e-6)` over every value of one image.
pub fn standardize(image: &mut [f32]) {
    if image.is_empty() {
        return;
    }
    let n = image.len() as f64;
    let mean = image.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = image.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / var.sqrt().max(1e-6);
    for v in image {
        *v = ((f64::from(*v) - mean) * scale) as f32;
    }
}

/// Replaces the grade of exactly `round(p·n)` samples, picked by `seed`, with
/// a uniform draw over all grades (possibly the true one) and flags them.
/// Masks are left alone.
pub fn randomize_labels(samples: &mut [Sample], p: f64, seed: u64, num_grades: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("random label fraction {p} is outside [0,1]")));
    }
    if num_grades == 0 {
        return Err(Error::arg("random labels need at least one grade"));
    }
    let n = samples.len();
    let m = (p * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6c61_6265_6c73);
    let mut picked = sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    for i in picked {
        samples[i].grade = rng.random_range(0..num_grades) as u8;
        samples[i].corrupted = true;
    }
    Ok(())
}

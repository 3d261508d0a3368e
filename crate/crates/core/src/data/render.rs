use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{grade_from_lesions, DataConfig, LesionStyle, Sample};

const NOISE_SIGMA: f64 = 0.02;
const BACKGROUND: [f64; 3] = [0.03, 0.02, 0.02];
const FUNDUS: [f64; 3] = [0.80, 0.42, 0.20];
const COLORS: [[f64; 3]; 5] = [
    [1.00, 0.90, 0.30],
    [0.32, 0.03, 0.03],
    [0.62, 0.06, 0.05],
    [0.96, 0.93, 0.80],
    [1.00, 1.00, 0.96],
];

/// One drawn blob: its class and the pixels (row-major, stored side) it marks.
#[derive(Debug, Clone, PartialEq)]
pub struct Lesion {
    pub class: u8,
    pub footprint: Vec<usize>,
}

/// Generative content of a sample before pixels are painted.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub side: usize,
    pub center: (f64, f64),
    pub radius: f64,
    pub counts: [usize; 5],
    /// In draw order: class 1 blobs first, artifacts last.
    pub lesions: Vec<Lesion>,
}

impl Layout {
    pub fn inside_disc(&self, y: usize, x: usize) -> bool {
        let (dy, dx) = (y as f64 + 0.5 - self.center.0, x as f64 + 0.5 - self.center.1);
        dy * dy + dx * dx <= self.radius * self.radius
    }
}

struct Blob {
    class: u8,
    /// `(pixel, alpha)`; alpha already scaled by the blob's intensity.
    pixels: Vec<(usize, f64)>,
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_count(style: &LesionStyle, rng: &mut impl Rng) -> usize {
    if style.max_count == 0 || rng.random::<f64>() < style.absent_prob {
        0
    } else {
        rng.random_range(1..=style.max_count)
    }
}

fn uniform(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    }
}

/// Visits pixels in the clipped box around `(cy, cx)` that lie in the disc.
fn for_box(layout: &Layout, cy: f64, cx: f64, reach: f64, mut f: impl FnMut(usize, f64, f64)) {
    let side = layout.side as f64;
    let y0 = (cy - reach - 1.0).floor().clamp(0.0, side) as usize;
    let y1 = (cy + reach + 1.0).ceil().clamp(0.0, side) as usize;
    let x0 = (cx - reach - 1.0).floor().clamp(0.0, side) as usize;
    let x1 = (cx + reach + 1.0).ceil().clamp(0.0, side) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if layout.inside_disc(y, x) {
                f(y * layout.side + x, y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            }
        }
    }
}

/// Blob center whose disc of radius `r` stays inside the fundus.
fn place(layout: &Layout, r: f64, rng: &mut impl Rng) -> (f64, f64) {
    let reach = (layout.radius - r - 1.0).max(0.0);
    let rho = reach * rng.random::<f64>().sqrt();
    let phi = rng.random::<f64>() * TAU;
    (layout.center.0 + rho * phi.sin(), layout.center.1 + rho * phi.cos())
}

fn draw_blob(layout: &Layout, class: u8, style: &LesionStyle, rng: &mut impl Rng) -> Blob {
    let r = uniform(style.radius, rng);
    let alpha = uniform(style.intensity, rng);
    let mut pixels = Vec::new();
    match class {
        1 | 3 => {
            let (cy, cx) = place(layout, r, rng);
            for_box(layout, cy, cx, r, |p, dy, dx| {
                if dy * dy + dx * dx <= r * r {
                    pixels.push((p, alpha));
                }
            });
        }
        2 => {
            // star-shaped outline with two random harmonics
            let (cy, cx) = place(layout, r * 1.5, rng);
            let (p1, p2) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
            let (a1, a2) = (rng.random_range(0.1..0.3), rng.random_range(0.05..0.2));
            for_box(layout, cy, cx, r * 1.5, |p, dy, dx| {
                let th = dy.atan2(dx);
                let edge = r * (1.0 + a1 * (3.0 * th + p1).sin() + a2 * (5.0 * th + p2).sin());
                if (dy * dy + dx * dx).sqrt() <= edge {
                    pixels.push((p, alpha));
                }
            });
        }
        4 => {
            let (cy, cx) = place(layout, r, rng);
            for_box(layout, cy, cx, r, |p, dy, dx| {
                let d = (dy * dy + dx * dx).sqrt() / r;
                if d <= 0.85 {
                    pixels.push((p, alpha * (1.0 - d * d)));
                }
            });
        }
        _ => {
            // thin arc of a circle, `r` is its length
            let bend = rng.random_range(15.0..40.0);
            let (ay, ax) = place(layout, 0.0, rng);
            let start = rng.random::<f64>() * TAU;
            let span = r / bend;
            let (cy, cx) = (ay - bend * start.sin(), ax - bend * start.cos());
            for_box(layout, cy, cx, bend + 1.0, |p, dy, dx| {
                let d = (dy * dy + dx * dx).sqrt();
                if (d - bend).abs() > 1.0 {
                    return;
                }
                let th = (dy.atan2(dx) - start).rem_euclid(TAU);
                if th <= span {
                    pixels.push((p, alpha));
                }
            });
        }
    }
    Blob { class, pixels }
}

fn draw(cfg: &DataConfig, rng: &mut ChaCha8Rng) -> (Layout, Vec<Blob>) {
    let side = cfg.stored_side();
    let s = side as f64;
    let center = (s / 2.0 + rng.random_range(-2.0..=2.0), s / 2.0 + rng.random_range(-2.0..=2.0));
    let radius = s * rng.random_range(0.40..=0.44);
    let mut layout = Layout {
        side,
        center,
        radius,
        counts: [0; 5],
        lesions: Vec::new(),
    };
    for (k, style) in cfg.lesions.iter().enumerate() {
        layout.counts[k] = draw_count(style, rng);
    }
    let mut blobs = Vec::new();
    for (k, style) in cfg.lesions.iter().enumerate() {
        for _ in 0..layout.counts[k] {
            blobs.push(draw_blob(&layout, k as u8 + 1, style, rng));
        }
    }
    layout.lesions = blobs
        .iter()
        .map(|b| Lesion {
            class: b.class,
            footprint: b.pixels.iter().map(|&(p, _)| p).collect(),
        })
        .collect();
    (layout, blobs)
}

/// Lesion layout of sample `index`, without rendering pixels.
pub fn generate_layout(cfg: &DataConfig, seed: u64, index: usize) -> Layout {
    draw(cfg, &mut rng_for(seed, index)).0
}

/// Renders sample `index`; a pure function of `(cfg, seed, index)`.
pub fn generate_sample(cfg: &DataConfig, seed: u64, index: usize) -> Sample {
    let mut rng = rng_for(seed, index);
    let (layout, blobs) = draw(cfg, &mut rng);
    let side = layout.side;
    let plane = side * side;
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.05..=0.05));
    let mut img = vec![0f64; 3 * plane];
    for y in 0..side {
        for x in 0..side {
            let p = y * side + x;
            let rgb = if layout.inside_disc(y, x) {
                let (dy, dx) = (y as f64 + 0.5 - layout.center.0, x as f64 + 0.5 - layout.center.1);
                let t = (dy * dy + dx * dx) / (layout.radius * layout.radius);
                let b = 0.55 + 0.45 * (1.0 - t);
                std::array::from_fn(|c| (FUNDUS[c] + tint[c]) * b)
            } else {
                BACKGROUND
            };
            for c in 0..3 {
                img[c * plane + p] = rgb[c];
            }
        }
    }
    let mut mask = vec![0u8; plane];
    for blob in &blobs {
        let color = COLORS[blob.class as usize - 1];
        for &(p, a) in &blob.pixels {
            for c in 0..3 {
                let v = &mut img[c * plane + p];
                *v = (1.0 - a) * *v + a * color[c];
            }
            mask[p] = blob.class;
        }
    }
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let image = img
        .into_iter()
        .map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32)
        .collect();
    Sample {
        index,
        side,
        image,
        mask,
        grade: grade_from_lesions(layout.counts),
        corrupted: false,
    }
}

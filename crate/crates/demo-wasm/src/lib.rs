//! Browser bindings for three pieces of the library: the synthetic fundus
//! renderer, the poly learning-rate schedule and the attention-gate
//! selection rule.
//!
//! Each binding wraps a plain function returning `Result<_, String>`, so
//! everything except the error conversion also runs natively.

use coopseg::arch::pag_plan;
use coopseg::data::{generate_sample, DataConfig, NUM_SEG_CLASSES};
use coopseg::train::poly_lr;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Overlay colors per segmentation class; background is left unpainted.
const PALETTE: [[u8; 3]; NUM_SEG_CLASSES] = [
    [0, 0, 0],
    [255, 230, 0],
    [200, 0, 40],
    [255, 60, 160],
    [80, 200, 255],
    [60, 255, 90],
];
const OVERLAY_ALPHA: f64 = 0.6;
const MAX_SIZE: u32 = 256;
const MAX_CURVE_POINTS: u32 = 100_000;

/// One rendered sample as canvas-ready RGBA buffers.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct RenderedSample {
    side: u32,
    rgba: Vec<u8>,
    overlay: Vec<u8>,
    grade: u8,
    counts: Vec<u32>,
}

#[wasm_bindgen]
impl RenderedSample {
    #[wasm_bindgen(getter)]
    pub fn side(&self) -> u32 {
        self.side
    }

    /// The image, `side × side × 4` bytes.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// The image with lesion classes painted over it.
    #[wasm_bindgen(getter)]
    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn grade(&self) -> u8 {
        self.grade
    }

    /// Drawn lesion count per class 1..=5.
    #[wasm_bindgen(getter)]
    pub fn counts(&self) -> Vec<u32> {
        self.counts.clone()
    }
}

pub fn render(seed: u32, index: u32, size: u32) -> Result<RenderedSample, String> {
    if !(16..=MAX_SIZE).contains(&size) {
        return Err(format!("size {size} is outside 16..={MAX_SIZE}"));
    }
    let cfg = DataConfig {
        size: size as usize,
        ..DataConfig::default()
    };
    let s = generate_sample(&cfg, u64::from(seed), index as usize);
    let plane = s.side * s.side;
    let mut rgba = Vec::with_capacity(4 * plane);
    let mut overlay = Vec::with_capacity(4 * plane);
    let mut counts = vec![0u32; NUM_SEG_CLASSES - 1];
    for p in 0..plane {
        let rgb = [0, 1, 2].map(|c| (f64::from(s.image[c * plane + p]) * 255.0).round());
        let class = usize::from(s.mask[p]);
        let painted = match class {
            0 => rgb,
            _ => [0, 1, 2].map(|c| rgb[c] * (1.0 - OVERLAY_ALPHA) + f64::from(PALETTE[class][c]) * OVERLAY_ALPHA),
        };
        rgba.extend(rgb.iter().map(|&v| v as u8).chain([255]));
        overlay.extend(painted.iter().map(|&v| v.round() as u8).chain([255]));
    }
    let layout = coopseg::data::generate_layout(&cfg, u64::from(seed), index as usize);
    for (slot, &n) in counts.iter_mut().zip(&layout.counts) {
        *slot = n as u32;
    }
    Ok(RenderedSample {
        side: s.side as u32,
        rgba,
        overlay,
        grade: s.grade,
        counts,
    })
}

/// Learning rate before each of `total` rounds, plus the final value.
pub fn lr_curve(total: u32, lr0: f64, power: f64) -> Result<Vec<f64>, String> {
    if total > MAX_CURVE_POINTS {
        return Err(format!("total {total} exceeds {MAX_CURVE_POINTS}"));
    }
    if !lr0.is_finite() || !power.is_finite() || power < 0.0 {
        return Err("lr0 and power must be finite, power non-negative".into());
    }
    (0..=total as usize)
        .map(|step| poly_lr(step, total as usize, lr0, power).map_err(|e| e.to_string()))
        .collect()
}

/// JSON rows `{u, entries: [{level, tap, ratio, included, pool}]}`, one per
/// decoder size; `pool` is null for identity or excluded taps.
pub fn selection_table(taps: &[u32], sizes: &[u32]) -> Result<String, String> {
    let tap_hw: Vec<(usize, usize)> = taps.iter().map(|&t| (t as usize, t as usize)).collect();
    let mut rows = Vec::new();
    for &u in sizes {
        let plan = pag_plan(&tap_hw, (u as usize, u as usize)).map_err(|e| e.to_string())?;
        let entries: Vec<_> = plan
            .iter()
            .map(|e| {
                json!({
                    "level": e.level,
                    "tap": taps[e.level],
                    "ratio": e.ratio,
                    "included": e.included,
                    "pool": e.pool,
                })
            })
            .collect();
        rows.push(json!({ "u": u, "entries": entries }));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}

#[wasm_bindgen]
pub fn render_sample(seed: u32, index: u32, size: u32) -> Result<RenderedSample, JsError> {
    render(seed, index, size).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn poly_lr_curve(total: u32, lr0: f64, power: f64) -> Result<Vec<f64>, JsError> {
    lr_curve(total, lr0, power).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn pag_table(taps: Vec<u32>, sizes: Vec<u32>) -> Result<String, JsError> {
    selection_table(&taps, &sizes).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_matches_the_library_sample() {
        let r = render(3, 7, 64).unwrap();
        let s = generate_sample(&DataConfig::default(), 3, 7);
        assert_eq!(r.side, 72);
        assert_eq!(r.rgba.len(), 72 * 72 * 4);
        assert_eq!(r.grade, s.grade);
        assert_eq!(r.rgba[3], 255);
        let plane = 72 * 72;
        for p in (0..plane).step_by(97) {
            assert_eq!(r.rgba[4 * p], (s.image[p] * 255.0).round() as u8);
            if s.mask[p] == 0 {
                assert_eq!(r.overlay[4 * p..4 * p + 4], r.rgba[4 * p..4 * p + 4]);
            }
        }
        assert_eq!(render(3, 7, 64).unwrap().overlay, r.overlay);
    }

    #[test]
    fn render_rejects_odd_sizes() {
        assert!(render(0, 0, 8).is_err());
        assert!(render(0, 0, 1024).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let c = lr_curve(10, 0.1, 0.9).unwrap();
        assert_eq!(c.len(), 11);
        assert_eq!(c[0], 0.1);
        assert_eq!(c[10], 0.0);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
        assert!(lr_curve(0, 0.1, 0.9).is_err());
        assert!(lr_curve(10, 0.1, -1.0).is_err());
    }

    #[test]
    fn selection_table_rows() {
        let t: serde_json::Value = serde_json::from_str(&selection_table(&[64, 32, 16], &[16, 32, 64]).unwrap()).unwrap();
        let included = |row: usize| -> Vec<bool> {
            t[row]["entries"].as_array().unwrap().iter().map(|e| e["included"].as_bool().unwrap()).collect()
        };
        assert_eq!(included(0), vec![true, true, true]);
        assert_eq!(included(1), vec![true, true, false]);
        assert_eq!(included(2), vec![true, false, false]);
        assert_eq!(t[0]["entries"][0]["pool"], 4);
        assert!(t[0]["entries"][2]["pool"].is_null());
        assert!(selection_table(&[48], &[32]).is_err());
    }
}

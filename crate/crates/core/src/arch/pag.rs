//! Partial attention gating: pick the encoder taps whose resolution is at
//! least the decoder stage's, max-pool them down to it and fuse.

use super::layers::ConvUnit;
use super::model::{EncoderTaps, Session};
use crate::engine::{Float, Graph, Padding, Var};
use crate::error::{Error, Result};

/// Selection decision for one encoder tap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PagEntry {
    pub level: usize,
    /// `min(h_E, w_E) / min(h_U, w_U)`.
    pub ratio: f64,
    pub included: bool,
    /// Maxpool window and stride; `None` means identity (ratio 1) or excluded.
    pub pool: Option<usize>,
}

/// Evaluates the selection switch for taps of the given `(h, w)` sizes
/// against an upsampled tensor of size `u_hw`.
pub fn pag_plan(taps: &[(usize, usize)], u_hw: (usize, usize)) -> Result<Vec<PagEntry>> {
    let u_min = u_hw.0.min(u_hw.1);
    if u_min == 0 {
        return Err(Error::dim("pag_select: upsampled tensor has empty spatial extent"));
    }
    taps.iter()
        .enumerate()
        .map(|(level, &(h, w))| {
            let e_min = h.min(w);
            if e_min == 0 {
                return Err(Error::dim(format!("pag_select: tap {level} has empty spatial extent")));
            }
            let ratio = e_min as f64 / u_min as f64;
            if e_min < u_min {
                return Ok(PagEntry {
                    level,
                    ratio,
                    included: false,
                    pool: None,
                });
            }
            if e_min % u_min != 0 {
                return Err(Error::config(format!(
                    "pag_select: tap {level} ratio {e_min}/{u_min} is not an integer"
                )));
            }
            let a = e_min / u_min;
            Ok(PagEntry {
                level,
                ratio,
                included: true,
                pool: (a > 1).then_some(a),
            })
        })
        .collect()
}

/// Returns `(level, pooled tap)` for every selected tap; all pooled maps share
/// `u`'s spatial size.
pub fn pag_select<T: Float>(g: &mut Graph<T>, taps: &EncoderTaps, u: Var) -> Result<Vec<(usize, Var)>> {
    let sizes: Vec<(usize, usize)> = taps
        .taps
        .iter()
        .map(|&(_, v)| (g.value(v).h(), g.value(v).w()))
        .collect();
    let [_, _, uh, uw] = g.value(u).shape();
    let plan = pag_plan(&sizes, (uh, uw))?;
    let mut out = Vec::new();
    for entry in plan.into_iter().filter(|e| e.included) {
        let (level, tap) = taps.taps[entry.level];
        let pooled = match entry.pool {
            Some(a) => g.maxpool2d(tap, a, a, Padding::Valid)?,
            None => tap,
        };
        let [_, _, ph, pw] = g.value(pooled).shape();
        if (ph, pw) != (uh, uw) {
            return Err(Error::dim(format!(
                "pag_select: tap {level} pools to {ph}x{pw}, decoder stage is {uh}x{uw}"
            )));
        }
        out.push((level, pooled));
    }
    Ok(out)
}

/// Concatenates `u` with the pooled taps and maps back to `u`'s channel count
/// through `merge` (a 1×1 conv, BN, ReLU).
pub fn pag_merge<T: Float>(
    s: &mut Session<'_, T>,
    u: Var,
    selected: &[(usize, Var)],
    merge: &ConvUnit,
) -> Result<Var> {
    let [n, _, h, w] = s.g.value(u).shape();
    let mut parts = vec![u];
    for &(level, v) in selected {
        let [vn, _, vh, vw] = s.g.value(v).shape();
        if (vn, vh, vw) != (n, h, w) {
            return Err(Error::dim(format!(
                "pag_merge: tap {level} is {vn}x{vh}x{vw}, expected {n}x{h}x{w}"
            )));
        }
        parts.push(v);
    }
    let cat = if parts.len() == 1 { u } else { s.g.concat_channels(&parts)? };
    merge.forward(s, cat)
}

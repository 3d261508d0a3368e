//! Raw kernels behind the graph ops. Everything here works on flat slices in
//! NCHW order; shape validation happens in the graph layer.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::tensor::Float;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Caps the number of worker threads op kernels may use. Results do not
/// depend on this value: work is split over batch items that write disjoint
/// output ranges, and every reduction runs sequentially.
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Runs `f(i, chunk_i, scratch)` for each `per`-sized chunk of `out`,
/// possibly on several threads. Each worker owns one zeroed scratch buffer of
/// `scratch_len` elements, reused across its chunks.
pub(crate) fn for_each_sample<T: Float>(
    out: &mut [T],
    per: usize,
    scratch_len: usize,
    f: impl Fn(usize, &mut [T], &mut [T]) + Sync,
) {
    if per == 0 {
        return;
    }
    let count = out.len() / per;
    let threads = threads().min(count);
    if threads <= 1 {
        let mut scratch = vec![T::zero(); scratch_len];
        for (i, chunk) in out.chunks_mut(per).enumerate() {
            f(i, chunk, &mut scratch);
        }
        return;
    }
    let per_thread = count.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, block) in out.chunks_mut(per_thread * per).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let mut scratch = vec![T::zero(); scratch_len];
                for (j, chunk) in block.chunks_mut(per).enumerate() {
                    f(t * per_thread + j, chunk, &mut scratch);
                }
            });
        }
    });
}

/// Sum with eight interleaved accumulators, combined in a fixed order.
#[inline]
pub(crate) fn lane_sum<T: Float>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for &v in tail {
        s += v;
    }
    s
}

/// `Σ f(a_i, b_i)` with the same accumulation pattern as [`lane_sum`].
#[inline]
pub(crate) fn lane_sum2<T: Float>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> T {
    let mut acc = [T::zero(); 8];
    let n = a.len().min(b.len());
    let full = n / 8 * 8;
    for (ca, cb) in a[..full].chunks_exact(8).zip(b[..full].chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += f(ca[i], cb[i]);
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for i in full..n {
        s += f(a[i], b[i]);
    }
    s
}

/// Same-padding split along one axis: output `ceil(size/stride)`, odd padding
/// puts the extra pixel on the bottom/right.
pub(crate) fn same_padding(size: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(size);
    (out, total / 2)
}

/// Geometry of a strided 2-D correlation over one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    /// 1×1, stride 1, unpadded: the input already is its own column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }

    #[inline]
    fn src(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(pad)?;
        (pos < limit).then_some(pos)
    }
}

/// Unfolds one sample into a `(cin·kh·kw) × (ho·wo)` column matrix.
pub(crate) fn im2col<T: Float>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.col_cols();
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    match g.src(oy, ky, g.pad_top, g.h) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * g.w..(iy + 1) * g.w];
                            if g.stride == 1 {
                                // contiguous run with zero fringes
                                let lo = g.pad_left.saturating_sub(kx).min(g.wo);
                                let hi = (g.w + g.pad_left).saturating_sub(kx).clamp(lo, g.wo);
                                line[..lo].fill(T::zero());
                                if hi > lo {
                                    let start = lo + kx - g.pad_left;
                                    line[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                                }
                                line[hi..].fill(T::zero());
                            } else {
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match g.src(ox, kx, g.pad_left, g.w) {
                                        Some(ix) => src[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a column matrix into `x`.
pub(crate) fn col2im_add<T: Float>(col: &[T], g: &ConvGeom, x: &mut [T]) {
    let cols = g.col_cols();
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ky, g.pad_top, g.h) else {
                        continue;
                    };
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let line = &src[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let lo = g.pad_left.saturating_sub(kx).min(g.wo);
                        let hi = (g.w + g.pad_left).saturating_sub(kx).clamp(lo, g.wo);
                        if hi > lo {
                            let start = lo + kx - g.pad_left;
                            for (d, &v) in dst[start..start + hi - lo].iter_mut().zip(&line[lo..hi]) {
                                *d += v;
                            }
                        }
                    } else {
                        for (ox, &v) in line.iter().enumerate() {
                            if let Some(ix) = g.src(ox, kx, g.pad_left, g.w) {
                                dst[ix] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Window geometry of a max-pool over one plane.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub ho: usize,
    pub wo: usize,
}

impl PoolGeom {
    /// Clipped input range `[lo, hi)` covered by output index `o`.
    #[inline]
    fn range(&self, o: usize, pad: usize, limit: usize) -> (usize, usize) {
        let start = o * self.stride;
        let lo = start.saturating_sub(pad);
        let hi = (start + self.k).saturating_sub(pad).min(limit);
        (lo, hi)
    }

    /// Visits every window as `(output index, rows, cols)`.
    #[inline]
    pub fn windows(&self) -> impl Iterator<Item = (usize, (usize, usize), (usize, usize))> + '_ {
        (0..self.ho).flat_map(move |oy| {
            let rows = self.range(oy, self.pad_top, self.h);
            (0..self.wo).map(move |ox| (oy * self.wo + ox, rows, self.range(ox, self.pad_left, self.w)))
        })
    }
}

/// Max over each window of one plane; ties keep the first element in
/// row-major scan order. Returns false if some window is empty.
pub(crate) fn maxpool_plane<T: Float>(src: &[T], g: &PoolGeom, out: &mut [T], argmax: &mut [u32], base: u32) -> bool {
    let cols: Vec<(usize, usize)> = (0..g.wo).map(|ox| g.range(ox, g.pad_left, g.w)).collect();
    if cols.iter().any(|&(lo, hi)| lo >= hi) {
        return false;
    }
    for oy in 0..g.ho {
        let (y0, y1) = g.range(oy, g.pad_top, g.h);
        if y0 >= y1 {
            return false;
        }
        let out_row = &mut out[oy * g.wo..(oy + 1) * g.wo];
        let arg_row = &mut argmax[oy * g.wo..(oy + 1) * g.wo];
        for (ox, &(x0, x1)) in cols.iter().enumerate() {
            let mut idx = y0 * g.w + x0;
            let mut best = src[idx];
            for iy in y0..y1 {
                let row = &src[iy * g.w + x0..iy * g.w + x1];
                for (j, &v) in row.iter().enumerate() {
                    if v > best {
                        best = v;
                        idx = iy * g.w + x0 + j;
                    }
                }
            }
            out_row[ox] = best;
            arg_row[ox] = base + idx as u32;
        }
    }
    true
}

/// Smallest gap between a window's maximum and its runner-up.
pub(crate) fn maxpool_margin<T: Float>(src: &[T], g: &PoolGeom) -> T {
    let mut margin = T::infinity();
    for (_, (y0, y1), (x0, x1)) in g.windows() {
        let mut best = T::neg_infinity();
        let mut second = T::neg_infinity();
        for iy in y0..y1 {
            for &v in &src[iy * g.w + x0..iy * g.w + x1] {
                if v > best {
                    second = best;
                    best = v;
                } else if v > second {
                    second = v;
                }
            }
        }
        if second.is_finite() {
            margin = margin.min(best - second);
        }
    }
    margin
}

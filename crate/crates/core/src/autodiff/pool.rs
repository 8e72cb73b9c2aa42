//! Spatial pyramid max pooling over `(C, D, H, W)` feature volumes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cell boundaries `round(i * len / bins)` for `i = 0..=bins`.
pub fn cell_bounds(len: usize, bins: usize) -> Vec<usize> {
    (0..=bins)
        .map(|i| ((i * len) as f64 / bins as f64).round() as usize)
        .collect()
}

/// Output width per channel: the sum of squared bin counts.
pub fn spp_width(bins: &[usize]) -> usize {
    bins.iter().map(|b| b * b).sum()
}

/// Forward pass returning the pooled vector and, for each output element,
/// the flat input index it was taken from.
///
/// The temporal axis is collapsed by max first; then each `b` in `bins`
/// splits the H×W plane into a `b`×`b` grid. Per channel the output is the
/// concatenation of the grids in `bins` order, cells in row-major order.
pub fn spp_forward(input: &Tensor, bins: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::dim("spp_pool", format!("expected (C,D,H,W), got {:?}", s)));
    }
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    if bins.is_empty() || bins.contains(&0) {
        return Err(Error::param("spp_pool", format!("bins {:?}", bins)));
    }
    let bmax = *bins.iter().max().unwrap();
    if h < bmax || w < bmax || d == 0 {
        return Err(Error::dim("spp_pool", format!("bin {} exceeds spatial dims {}x{}", bmax, h, w)));
    }
    let x = input.data();
    let per = spp_width(bins);
    let mut out = Vec::with_capacity(c * per);
    let mut arg = Vec::with_capacity(c * per);
    for ch in 0..c {
        for &b in bins {
            let rows = cell_bounds(h, b);
            let cols = cell_bounds(w, b);
            for i in 0..b {
                for j in 0..b {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for t in 0..d {
                        for y in rows[i]..rows[i + 1] {
                            let row = ((ch * d + t) * h + y) * w;
                            for xx in cols[j]..cols[j + 1] {
                                let v = x[row + xx];
                                if v > best || best_idx == usize::MAX {
                                    best = v;
                                    best_idx = row + xx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::from_vec(out), arg))
}

//! Dense TV-L1 optical flow (duality-based solver, coarse-to-fine warping).
//!
//! Minimizes `Σ |∇u₁| + |∇u₂| + λ |I₁(x + u) − I₀(x)|`. Each warp linearizes
//! the brightness residual around the current flow, then alternates a
//! pointwise thresholding step on the data term with a projected dual step
//! on the total variation term.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Horizontal (`u`) and vertical (`v`) displacement in pixels, each `(H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Tensor,
    pub v: Tensor,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField { u: Tensor::zeros([h, w]), v: Tensor::zeros([h, w]) }
    }

    pub fn constant(h: usize, w: usize, u: f64, v: f64) -> Self {
        FlowField { u: Tensor::full([h, w], u), v: Tensor::full([h, w], v) }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u.shape()[0], self.u.shape()[1])
    }

    /// Per-pixel displacement length.
    pub fn magnitude(&self) -> Tensor {
        self.u.zip_map(&self.v, |a, b| a.hypot(b))
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitude().sum() / self.u.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvL1Params {
    /// Weight of the data attachment term, for intensities on a 0–255 scale.
    pub lambda: f64,
    pub theta: f64,
    pub tau: f64,
    pub warps: usize,
    pub max_iters_per_warp: usize,
    pub pyramid_scale: f64,
    /// `None` builds levels until the smaller side would drop below 16.
    pub pyramid_levels: Option<usize>,
    pub stop_eps: f64,
}

impl Default for TvL1Params {
    fn default() -> Self {
        TvL1Params {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps: 5,
            max_iters_per_warp: 300,
            pyramid_scale: 0.5,
            pyramid_levels: None,
            stop_eps: 0.01,
        }
    }
}

impl TvL1Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::param("tv_l1", d));
        if !(self.tau > 0.0 && self.tau <= 0.25) {
            return bad(format!("tau {} must lie in (0, 0.25]", self.tau));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!("pyramid_scale {} must lie in (0, 1)", self.pyramid_scale));
        }
        if self.lambda <= 0.0 || self.theta <= 0.0 || self.stop_eps < 0.0 {
            return bad("lambda and theta must be positive, stop_eps nonnegative".into());
        }
        if self.warps == 0 || self.max_iters_per_warp == 0 || self.pyramid_levels == Some(0) {
            return bad("warps, iterations and levels must be at least 1".into());
        }
        Ok(())
    }
}

/// Intensity scale the solver works in; `lambda` is tuned for 8-bit images.
const INTENSITY_SCALE: f64 = 255.0;
const PRESMOOTH_SIGMA: f64 = 0.8;
const GRAD_IS_ZERO: f64 = 1e-10;

#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    d: Vec<f64>,
}

impl Plane {
    fn zeros(w: usize, h: usize) -> Self {
        Plane { w, h, d: vec![0.0; w * h] }
    }

    fn from_tensor(t: &Tensor) -> Self {
        Plane { h: t.shape()[0], w: t.shape()[1], d: t.data().to_vec() }
    }

    fn into_tensor(self) -> Tensor {
        Tensor::new([self.h, self.w], self.d).expect("plane dims")
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> f64 {
        self.d[y * self.w + x]
    }

    /// Bilinear sample with coordinates clamped to the image.
    #[inline]
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn gaussian(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let ks: f64 = k.iter().sum();
        let k: Vec<f64> = k.into_iter().map(|v| v / ks).collect();
        let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut tmp = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                tmp.d[y * self.w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * self.get(clampi(x as isize + j as isize - r, self.w), y))
                    .sum();
            }
        }
        let mut out = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                out.d[y * self.w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * tmp.get(x, clampi(y as isize + j as isize - r, self.h)))
                    .sum();
            }
        }
        out
    }

    /// Anti-aliased downsampling by `scale`.
    fn zoom_out(&self, scale: f64) -> Plane {
        let sigma = 0.6 * (1.0 / (scale * scale) - 1.0).sqrt();
        let smooth = self.gaussian(sigma);
        let nw = ((self.w as f64 * scale).round() as usize).max(1);
        let nh = ((self.h as f64 * scale).round() as usize).max(1);
        let (sx, sy) = (self.w as f64 / nw as f64, self.h as f64 / nh as f64);
        let mut out = Plane::zeros(nw, nh);
        for y in 0..nh {
            for x in 0..nw {
                out.d[y * nw + x] = smooth.sample(x as f64 * sx, y as f64 * sy);
            }
        }
        out
    }

    /// Bilinear resampling onto a `w`×`h` grid, values multiplied by `gain`.
    fn zoom_in(&self, w: usize, h: usize, gain: f64) -> Plane {
        let (sx, sy) = (self.w as f64 / w as f64, self.h as f64 / h as f64);
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                out.d[y * w + x] = gain * self.sample(x as f64 * sx, y as f64 * sy);
            }
        }
        out
    }

    /// Central differences, one-sided at the borders.
    fn centered_gradient(&self) -> (Plane, Plane) {
        let (w, h) = (self.w, self.h);
        let mut gx = Plane::zeros(w, h);
        let mut gy = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                gx.d[i] = match (x, w) {
                    (_, 1) => 0.0,
                    (0, _) => self.get(1, y) - self.get(0, y),
                    (x, w) if x == w - 1 => self.get(x, y) - self.get(x - 1, y),
                    (x, _) => 0.5 * (self.get(x + 1, y) - self.get(x - 1, y)),
                };
                gy.d[i] = match (y, h) {
                    (_, 1) => 0.0,
                    (0, _) => self.get(x, 1) - self.get(x, 0),
                    (y, h) if y == h - 1 => self.get(x, y) - self.get(x, y - 1),
                    (y, _) => 0.5 * (self.get(x, y + 1) - self.get(x, y - 1)),
                };
            }
        }
        (gx, gy)
    }

    /// Forward differences with zero at the far border.
    fn forward_gradient(&self) -> (Plane, Plane) {
        let (w, h) = (self.w, self.h);
        let mut gx = Plane::zeros(w, h);
        let mut gy = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    gx.d[i] = self.d[i + 1] - self.d[i];
                }
                if y + 1 < h {
                    gy.d[i] = self.d[i + w] - self.d[i];
                }
            }
        }
        (gx, gy)
    }
}

/// Negative adjoint of [`Plane::forward_gradient`].
fn divergence(p1: &Plane, p2: &Plane) -> Plane {
    let (w, h) = (p1.w, p1.h);
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = 0.0;
            if x + 1 < w {
                v += p1.d[i];
            }
            if x > 0 {
                v -= p1.d[i - 1];
            }
            if y + 1 < h {
                v += p2.d[i];
            }
            if y > 0 {
                v -= p2.d[i - w];
            }
            out.d[i] = v;
        }
    }
    out
}

fn warp_plane(img: &Plane, u: &Plane, v: &Plane) -> Plane {
    let mut out = Plane::zeros(img.w, img.h);
    for y in 0..img.h {
        for x in 0..img.w {
            let i = y * img.w + x;
            out.d[i] = img.sample(x as f64 + u.d[i], y as f64 + v.d[i]);
        }
    }
    out
}

/// Samples `img` at `(x + u, y + v)` bilinearly, clamping at the borders.
pub fn warp_image(img: &Tensor, flow: &FlowField) -> Result<Tensor> {
    if img.rank() != 2 || img.shape() != flow.u.shape() || img.shape() != flow.v.shape() {
        return Err(Error::dim(
            "warp_image",
            format!("image {:?}, flow {:?}/{:?}", img.shape(), flow.u.shape(), flow.v.shape()),
        ));
    }
    let p = Plane::from_tensor(img);
    Ok(warp_plane(&p, &Plane::from_tensor(&flow.u), &Plane::from_tensor(&flow.v)).into_tensor())
}

/// Pixels whose displaced position stays inside the image; elsewhere the
/// brightness residual carries no information and the data term is dropped.
fn inside_mask(w: usize, h: usize, u1: &Plane, u2: &Plane) -> Vec<bool> {
    (0..w * h)
        .map(|i| {
            let x = (i % w) as f64 + u1.d[i];
            let y = (i / w) as f64 + u2.d[i];
            x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64
        })
        .collect()
}

fn energy(i0: &Plane, i1: &Plane, u1: &Plane, u2: &Plane, lambda: f64) -> f64 {
    let (u1x, u1y) = u1.forward_gradient();
    let (u2x, u2y) = u2.forward_gradient();
    let w1 = warp_plane(i1, u1, u2);
    let inside = inside_mask(i0.w, i0.h, u1, u2);
    let tv: f64 = (0..i0.d.len()).map(|i| u1x.d[i].hypot(u1y.d[i]) + u2x.d[i].hypot(u2y.d[i])).sum();
    let da: f64 = (0..i0.d.len()).filter(|&i| inside[i]).map(|i| lambda * (w1.d[i] - i0.d[i]).abs()).sum();
    tv + da
}

struct LevelState {
    u1: Plane,
    u2: Plane,
    p: [Plane; 4],
}

fn solve_level(i0: &Plane, i1: &Plane, st: &mut LevelState, prm: &TvL1Params, mut trace: Option<&mut Vec<f64>>) {
    let n = i0.d.len();
    let l_t = prm.lambda * prm.theta;
    let taut = prm.tau / prm.theta;
    let (i1x, i1y) = i1.centered_gradient();
    let mut v1 = Plane::zeros(i0.w, i0.h);
    let mut v2 = Plane::zeros(i0.w, i0.h);
    let mut current = energy(i0, i1, &st.u1, &st.u2, prm.lambda);
    if let Some(t) = trace.as_deref_mut() {
        t.push(current);
    }
    for _ in 0..prm.warps {
        let saved = (st.u1.clone(), st.u2.clone(), st.p.clone());
        let i1w = warp_plane(i1, &st.u1, &st.u2);
        let i1wx = warp_plane(&i1x, &st.u1, &st.u2);
        let i1wy = warp_plane(&i1y, &st.u1, &st.u2);
        let inside = inside_mask(i0.w, i0.h, &st.u1, &st.u2);
        let grad: Vec<f64> = (0..n).map(|i| i1wx.d[i] * i1wx.d[i] + i1wy.d[i] * i1wy.d[i]).collect();
        let rho_c: Vec<f64> = (0..n)
            .map(|i| i1w.d[i] - i1wx.d[i] * st.u1.d[i] - i1wy.d[i] * st.u2.d[i] - i0.d[i])
            .collect();

        let mut iters = 0;
        let mut err = f64::INFINITY;
        while err > prm.stop_eps * prm.stop_eps && iters < prm.max_iters_per_warp {
            iters += 1;
            for i in 0..n {
                if !inside[i] {
                    v1.d[i] = st.u1.d[i];
                    v2.d[i] = st.u2.d[i];
                    continue;
                }
                let (gx, gy) = (i1wx.d[i], i1wy.d[i]);
                let rho = rho_c[i] + gx * st.u1.d[i] + gy * st.u2.d[i];
                let (d1, d2) = if rho < -l_t * grad[i] {
                    (l_t * gx, l_t * gy)
                } else if rho > l_t * grad[i] {
                    (-l_t * gx, -l_t * gy)
                } else if grad[i] < GRAD_IS_ZERO {
                    (0.0, 0.0)
                } else {
                    let f = -rho / grad[i];
                    (f * gx, f * gy)
                };
                v1.d[i] = st.u1.d[i] + d1;
                v2.d[i] = st.u2.d[i] + d2;
            }
            let div1 = divergence(&st.p[0], &st.p[1]);
            let div2 = divergence(&st.p[2], &st.p[3]);
            err = 0.0;
            for i in 0..n {
                let a = v1.d[i] + prm.theta * div1.d[i];
                let b = v2.d[i] + prm.theta * div2.d[i];
                err += (a - st.u1.d[i]).powi(2) + (b - st.u2.d[i]).powi(2);
                st.u1.d[i] = a;
                st.u2.d[i] = b;
            }
            err /= n as f64;
            let (u1x, u1y) = st.u1.forward_gradient();
            let (u2x, u2y) = st.u2.forward_gradient();
            for i in 0..n {
                let ng1 = 1.0 + taut * u1x.d[i].hypot(u1y.d[i]);
                let ng2 = 1.0 + taut * u2x.d[i].hypot(u2y.d[i]);
                st.p[0].d[i] = (st.p[0].d[i] + taut * u1x.d[i]) / ng1;
                st.p[1].d[i] = (st.p[1].d[i] + taut * u1y.d[i]) / ng1;
                st.p[2].d[i] = (st.p[2].d[i] + taut * u2x.d[i]) / ng2;
                st.p[3].d[i] = (st.p[3].d[i] + taut * u2y.d[i]) / ng2;
            }
        }
        let e = energy(i0, i1, &st.u1, &st.u2, prm.lambda);
        if e > current {
            // reject a warp that raises the objective; repeating it from the
            // same state would reproduce it, so this level is done
            (st.u1, st.u2, st.p) = saved;
            break;
        }
        current = e;
        if let Some(t) = trace.as_deref_mut() {
            t.push(current);
        }
    }
}

/// Flow estimate plus the objective after each accepted warp at the finest
/// level (first entry: before the first warp). A warp that would raise the
/// objective is rolled back and ends the warping at that level.
#[derive(Clone, Debug)]
pub struct TvL1Output {
    pub flow: FlowField,
    pub finest_energies: Vec<f64>,
}

fn check_frames(prev: &Tensor, next: &Tensor) -> Result<(usize, usize)> {
    if prev.rank() != 2 || prev.shape() != next.shape() {
        return Err(Error::dim("tv_l1", format!("frames {:?} vs {:?}", prev.shape(), next.shape())));
    }
    let (h, w) = (prev.shape()[0], prev.shape()[1]);
    if h < 8 || w < 8 {
        return Err(Error::dim("tv_l1", format!("frames {}x{} smaller than 8x8", h, w)));
    }
    Ok((h, w))
}

pub fn tv_l1(prev: &Tensor, next: &Tensor, params: &TvL1Params) -> Result<FlowField> {
    tv_l1_traced(prev, next, params).map(|o| o.flow)
}

/// [`tv_l1`] that also reports the finest-level energy after every warp.
pub fn tv_l1_traced(prev: &Tensor, next: &Tensor, params: &TvL1Params) -> Result<TvL1Output> {
    params.validate()?;
    let (h, w) = check_frames(prev, next)?;
    let prep = |t: &Tensor| {
        let mut p = Plane::from_tensor(t);
        p.d.iter_mut().for_each(|v| *v *= INTENSITY_SCALE);
        p.gaussian(PRESMOOTH_SIGMA)
    };
    let mut pyr0 = vec![prep(prev)];
    let mut pyr1 = vec![prep(next)];
    let max_levels = params.pyramid_levels.unwrap_or(usize::MAX);
    while pyr0.len() < max_levels {
        let last = pyr0.last().unwrap();
        let nw = (last.w as f64 * params.pyramid_scale).round() as usize;
        let nh = (last.h as f64 * params.pyramid_scale).round() as usize;
        let floor = if params.pyramid_levels.is_some() { 2 } else { 16 };
        if nw.min(nh) < floor {
            break;
        }
        let a = last.zoom_out(params.pyramid_scale);
        let b = pyr1.last().unwrap().zoom_out(params.pyramid_scale);
        pyr0.push(a);
        pyr1.push(b);
    }

    let coarse = pyr0.last().unwrap();
    let (cw, ch) = (coarse.w, coarse.h);
    let mut st = LevelState {
        u1: Plane::zeros(cw, ch),
        u2: Plane::zeros(cw, ch),
        p: std::array::from_fn(|_| Plane::zeros(cw, ch)),
    };
    let mut trace = Vec::new();
    for level in (0..pyr0.len()).rev() {
        let finest = level == 0;
        solve_level(&pyr0[level], &pyr1[level], &mut st, params, finest.then_some(&mut trace));
        if level > 0 {
            let (nw, nh) = (pyr0[level - 1].w, pyr0[level - 1].h);
            let gain_x = nw as f64 / st.u1.w as f64;
            let gain_y = nh as f64 / st.u1.h as f64;
            st = LevelState {
                u1: st.u1.zoom_in(nw, nh, gain_x),
                u2: st.u2.zoom_in(nw, nh, gain_y),
                p: std::array::from_fn(|k| st.p[k].zoom_in(nw, nh, 1.0)),
            };
        }
    }
    debug_assert_eq!((st.u1.w, st.u1.h), (w, h));
    Ok(TvL1Output {
        flow: FlowField { u: st.u1.into_tensor(), v: st.u2.into_tensor() },
        finest_energies: trace,
    })
}

/// ITU-R 601 luma of a `(H, W, 3)` frame.
pub fn luma(frame: &Tensor) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim("luma", format!("expected (H,W,3), got {:?}", s)));
    }
    let d = frame.data();
    Tensor::new(
        [s[0], s[1]],
        d.chunks(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect(),
    )
}

/// Flow between consecutive frames of a `(T, H, W, 3)` clip, stacked as a
/// `(T-1, H, W, 2)` tensor of raw pixel displacements.
pub fn flow_clip(frames: &Tensor, params: &TvL1Params) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(Error::dim("flow_clip", format!("expected (T,H,W,3), got {:?}", s)));
    }
    let (t, h, w) = (s[0], s[1], s[2]);
    if t < 2 {
        return Err(Error::dim("flow_clip", format!("need at least 2 frames, got {}", t)));
    }
    let grays = (0..t)
        .map(|i| luma(&frames.narrow0(i, 1)?.reshape([h, w, 3])?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity((t - 1) * h * w * 2);
    for pair in grays.windows(2) {
        let f = tv_l1(&pair[0], &pair[1], params)?;
        for (a, b) in f.u.data().iter().zip(f.v.data()) {
            out.push(*a);
            out.push(*b);
        }
    }
    Tensor::new([t - 1, h, w, 2], out)
}

/// Displacement bound applied before mapping flow into `[0, 1]`.
pub const FLOW_CLAMP: f64 = 20.0;

/// Clamps displacements to `±FLOW_CLAMP` and maps them affinely onto `[0, 1]`.
pub fn normalize_flow(flow: &Tensor) -> Tensor {
    flow.map(|v| (v.clamp(-FLOW_CLAMP, FLOW_CLAMP) + FLOW_CLAMP) / (2.0 * FLOW_CLAMP))
}

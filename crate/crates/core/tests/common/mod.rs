//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use flvae::data::VideoClip;
use flvae::flow::FlowField;
use flvae::rng;
use flvae::Tensor;
use rand::Rng;

pub fn random_tensor(r: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Direct 3D convolution: input `(C, D, H, W)`, weight `(O, C, kd, kh, kw)`.
pub fn naive_conv3d(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let (c, o) = (xs[0], ws[0]);
    let inp = [xs[1], xs[2], xs[3]];
    let k = [ws[2], ws[3], ws[4]];
    let out: Vec<usize> = (0..3).map(|a| (inp[a] + 2 * pad[a] - k[a]) / stride[a] + 1).collect();
    let mut y = Tensor::zeros([o, out[0], out[1], out[2]]);
    for oc in 0..o {
        for z in 0..out[0] {
            for yy in 0..out[1] {
                for xx in 0..out[2] {
                    let mut s = b.data()[oc];
                    for ic in 0..c {
                        for i in 0..k[0] {
                            for j in 0..k[1] {
                                for l in 0..k[2] {
                                    let p = [
                                        (z * stride[0] + i) as isize - pad[0] as isize,
                                        (yy * stride[1] + j) as isize - pad[1] as isize,
                                        (xx * stride[2] + l) as isize - pad[2] as isize,
                                    ];
                                    if (0..3).any(|a| p[a] < 0 || p[a] >= inp[a] as isize) {
                                        continue;
                                    }
                                    s += w.at(&[oc, ic, i, j, l]) * x.at(&[ic, p[0] as usize, p[1] as usize, p[2] as usize]);
                                }
                            }
                        }
                    }
                    let off = y.offset(&[oc, z, yy, xx]);
                    y.data_mut()[off] = s;
                }
            }
        }
    }
    y
}

/// Scatter form of the transposed convolution: every input element adds
/// `x · w` into the output positions its kernel taps reach.
/// Weight `(C_in, C_out, kd, kh, kw)`.
pub fn naive_deconv3d(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3], pad: [usize; 3], out: [usize; 3]) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let (c, o) = (xs[0], ws[1]);
    let k = [ws[2], ws[3], ws[4]];
    let mut y = Tensor::zeros([o, out[0], out[1], out[2]]);
    for oc in 0..o {
        for z in 0..out[0] {
            for yy in 0..out[1] {
                for xx in 0..out[2] {
                    let off = y.offset(&[oc, z, yy, xx]);
                    y.data_mut()[off] = b.data()[oc];
                }
            }
        }
    }
    for ic in 0..c {
        for z in 0..xs[1] {
            for yy in 0..xs[2] {
                for xx in 0..xs[3] {
                    let v = x.at(&[ic, z, yy, xx]);
                    for oc in 0..o {
                        for i in 0..k[0] {
                            for j in 0..k[1] {
                                for l in 0..k[2] {
                                    let p = [
                                        (z * stride[0] + i) as isize - pad[0] as isize,
                                        (yy * stride[1] + j) as isize - pad[1] as isize,
                                        (xx * stride[2] + l) as isize - pad[2] as isize,
                                    ];
                                    if (0..3).any(|a| p[a] < 0 || p[a] >= out[a] as isize) {
                                        continue;
                                    }
                                    let off = y.offset(&[oc, p[0] as usize, p[1] as usize, p[2] as usize]);
                                    y.data_mut()[off] += v * w.at(&[ic, oc, i, j, l]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Max over time, then per bin count `b` a `b×b` grid with edges
/// `round(i·len/b)`; channels outermost, grids in `bins` order.
pub fn naive_spp(x: &Tensor, bins: &[usize]) -> Tensor {
    let s = x.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let edge = |len: usize, b: usize, i: usize| ((i * len) as f64 / b as f64).round() as usize;
    let mut out = Vec::new();
    for ch in 0..c {
        for &b in bins {
            for i in 0..b {
                for j in 0..b {
                    let mut m = f64::NEG_INFINITY;
                    for t in 0..d {
                        for y in edge(h, b, i)..edge(h, b, i + 1) {
                            for xx in edge(w, b, j)..edge(w, b, j + 1) {
                                m = m.max(x.at(&[ch, t, y, xx]));
                            }
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor::from_vec(out)
}

pub fn naive_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    Tensor::from_vec(
        (0..m)
            .map(|i| b.data()[i] + (0..n).map(|j| w.at(&[i, j]) * x.data()[j]).sum::<f64>())
            .collect(),
    )
}

/// Per-frame blob statistics above the background level:
/// `[mass, centroid x, centroid y, spread x, spread y]`.
pub fn frame_stats(clip: &VideoClip, t: usize) -> [f64; 5] {
    let [_, h, w, _] = clip.dims();
    let f = clip.frame(t);
    let (mut m, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = (0..3).map(|c| f.at(&[y, x, c])).sum::<f64>() / 3.0;
            let v = (v - 0.1).max(0.0);
            m += v;
            sx += v * x as f64;
            sy += v * y as f64;
            sxx += v * (x * x) as f64;
            syy += v * (y * y) as f64;
        }
    }
    let (cx, cy) = (sx / m, sy / m);
    [m, cx, cy, (sxx / m - cx * cx).sqrt(), (syy / m - cy * cy).sqrt()]
}

/// Nearest-class-mean accuracy on standardized features.
pub fn nearest_mean_accuracy(train: &[(Vec<f64>, usize)], test: &[(Vec<f64>, usize)], n_classes: usize) -> f64 {
    let dim = train[0].0.len();
    let n = train.len() as f64;
    let mu: Vec<f64> = (0..dim).map(|d| train.iter().map(|s| s.0[d]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|d| (train.iter().map(|s| (s.0[d] - mu[d]).powi(2)).sum::<f64>() / n).sqrt().max(1e-9))
        .collect();
    let z = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().map(|(d, x)| (x - mu[d]) / sd[d]).collect() };
    let mut means = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (v, l) in train {
        for (m, x) in means[*l].iter_mut().zip(z(v)) {
            *m += x;
        }
        counts[*l] += 1;
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= (*c).max(1) as f64);
    }
    let correct = test
        .iter()
        .filter(|(v, l)| {
            let zv = z(v);
            let best = (0..n_classes)
                .min_by(|&a, &b| {
                    let da: f64 = means[a].iter().zip(&zv).map(|(m, x)| (m - x).powi(2)).sum();
                    let db: f64 = means[b].iter().zip(&zv).map(|(m, x)| (m - x).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            best == *l
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Features from the first `frames` frames, picking `pick` from each
/// frame's statistics.
pub fn clip_features(clip: &VideoClip, frames: usize, pick: &[usize]) -> Vec<f64> {
    (0..frames).flat_map(|t| {
        let s = frame_stats(clip, t);
        pick.iter().map(move |&i| s[i]).collect::<Vec<_>>()
    }).collect()
}

/// Random small conv problem with output extent at least one on every axis.
pub fn conv_case(seed: u64) -> (Tensor, Tensor, Tensor, [usize; 3], [usize; 3]) {
    let mut r = rng::rng(seed, &[1]);
    loop {
        let c = r.random_range(1..4);
        let o = r.random_range(1..4);
        let dims = [r.random_range(1..5), r.random_range(2..8), r.random_range(2..8)];
        let k = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
        let stride = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4)];
        let pad: [usize; 3] = std::array::from_fn(|a| r.random_range(0..k[a]));
        if (0..3).any(|a| dims[a] + 2 * pad[a] < k[a]) {
            continue;
        }
        let x = random_tensor(&mut r, &[c, dims[0], dims[1], dims[2]]);
        let w = random_tensor(&mut r, &[o, c, k[0], k[1], k[2]]);
        let b = random_tensor(&mut r, &[o]);
        return (x, w, b, stride, pad);
    }
}

/// Smooth textured pattern sampled at a sub-pixel offset `(dx, dy)`: frame
/// `next` shows the content of `prev` moved by `(dx, dy)`.
pub fn pattern(h: usize, w: usize, dx: f64, dy: f64) -> Tensor {
    Tensor::from_fn([h, w], |i| {
        let x = (i % w) as f64 - dx;
        let y = (i / w) as f64 - dy;
        let blobs = [(14.0, 16.0, 5.0), (30.0, 28.0, 6.0), (22.0, 36.0, 4.0), (36.0, 12.0, 4.5)];
        let g: f64 = blobs
            .iter()
            .map(|&(cx, cy, s)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        0.15 + 0.25 * (0.31 * x + 0.12 * y).sin() * (0.17 * y - 0.05 * x).cos() * 0.5 + 0.55 * g.min(1.0)
    })
}

pub fn mean_epe(f: &FlowField, gt: (f64, f64), border: usize) -> f64 {
    let (h, w) = f.dims();
    let mut s = 0.0;
    let mut n = 0;
    for y in border..h - border {
        for x in border..w - border {
            s += (f.u.at(&[y, x]) - gt.0).hypot(f.v.at(&[y, x]) - gt.1);
            n += 1;
        }
    }
    s / n as f64
}

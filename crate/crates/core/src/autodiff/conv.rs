//! Direct 3D convolution kernels over `(C, D, H, W)` volumes.
//!
//! All three products (forward, input gradient, weight gradient) go through
//! one unfolding of the receptive fields into a matrix and a GEMM. The input
//! gradient is also the transposed convolution.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride and zero padding along (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn new(stride: [usize; 3], padding: [usize; 3]) -> Self {
        ConvGeom { stride, padding }
    }

    pub fn unit() -> Self {
        ConvGeom { stride: [1; 3], padding: [0; 3] }
    }

    /// Output extent of a forward convolution, `None` when the kernel does
    /// not fit the padded input.
    pub fn conv_out(&self, input: [usize; 3], kernel: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.stride[a] == 0 || kernel[a] == 0 || padded < kernel[a] {
                return None;
            }
            out[a] = (padded - kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }

    /// Whether `output` is a valid transposed-convolution extent for
    /// `input`: it must map back to `input` under the forward convolution.
    pub fn deconv_consistent(&self, input: [usize; 3], kernel: [usize; 3], output: [usize; 3]) -> bool {
        self.conv_out(output, kernel) == Some(input)
    }
}

/// Weights `(out, in, kd, kh, kw)` and bias `(out)`.
///
/// A transposed convolution uses the same layout as the convolution it is
/// the adjoint of, so its weights read `(in, out, kd, kh, kw)` from the
/// transposed layer's point of view.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvKernel {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weight.shape();
        if ws.len() != 5 || ws.contains(&0) {
            return Err(Error::dim("conv kernel", format!("weight shape {:?}", ws)));
        }
        if bias.rank() != 1 {
            return Err(Error::dim("conv kernel", format!("bias shape {:?}", bias.shape())));
        }
        Ok(ConvKernel { weight, bias })
    }
}

pub(crate) fn dims3(shape: &[usize]) -> [usize; 3] {
    [shape[1], shape[2], shape[3]]
}

pub(crate) fn kdims(weight: &Tensor) -> [usize; 3] {
    let s = weight.shape();
    [s[2], s[3], s[4]]
}

/// Output indices `o` for which `o*stride + k - pad` lands in `[0, in_len)`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= in_len - 1
    let hi_num = in_len + pad;
    let hi = if hi_num <= k { 0 } else { ((hi_num - k - 1) / stride + 1).min(out_len) };
    (lo, hi.max(lo))
}

/// Unfolds `input` into a `(cin·kd·kh·kw, od·oh·ow)` row-major matrix whose
/// column `p` holds the receptive field of output position `p`; positions
/// falling in the zero padding stay 0.
fn im2col(x: &[f64], cin: usize, input: [usize; 3], output: [usize; 3], kernel: [usize; 3], geom: ConvGeom) -> Vec<f64> {
    let plane: usize = output.iter().product();
    let taps: usize = kernel.iter().product();
    let mut cols = vec![0.0; cin * taps * plane];
    for_each_tap(cin, input, output, kernel, geom, |row, src, step, dst, len| {
        let out = &mut cols[row * plane + dst..row * plane + dst + len];
        for (d, v) in out.iter_mut().zip(x[src..].iter().step_by(step)) {
            *d = *v;
        }
    });
    cols
}

/// Adjoint of [`im2col`]: accumulates columns back onto the input volume.
fn col2im(cols: &[f64], cin: usize, input: [usize; 3], output: [usize; 3], kernel: [usize; 3], geom: ConvGeom) -> Vec<f64> {
    let plane: usize = output.iter().product();
    let mut x = vec![0.0; cin * input.iter().product::<usize>()];
    for_each_tap(cin, input, output, kernel, geom, |row, src, step, dst, len| {
        let col = &cols[row * plane + dst..row * plane + dst + len];
        for (d, v) in x[src..].iter_mut().step_by(step).zip(col) {
            *d += *v;
        }
    });
    x
}

/// Visits every (channel, kernel tap, output row) of a convolution. The
/// callback receives the unfolded row index `c·taps + tap`, the first input
/// element and its stride along width, the first output position in the
/// output plane, and the run length.
#[inline]
fn for_each_tap(
    cin: usize,
    input: [usize; 3],
    output: [usize; 3],
    kernel: [usize; 3],
    geom: ConvGeom,
    mut f: impl FnMut(usize, usize, usize, usize, usize),
) {
    let [id, ih, iw] = input;
    let [od, oh, ow] = output;
    let [kd, kh, kw] = kernel;
    let [sd, sh, sw] = geom.stride;
    let [pd, ph, pw] = geom.padding;
    for c in 0..cin {
        let in_base = c * id * ih * iw;
        for a in 0..kd {
            let (d0, d1) = valid_range(a, pd, sd, id, od);
            for b in 0..kh {
                let (h0, h1) = valid_range(b, ph, sh, ih, oh);
                for e in 0..kw {
                    let (w0, w1) = valid_range(e, pw, sw, iw, ow);
                    let row = ((c * kd + a) * kh + b) * kw + e;
                    if w1 == w0 {
                        continue;
                    }
                    for z in d0..d1 {
                        let zi = z * sd + a - pd;
                        for y in h0..h1 {
                            let yi = y * sh + b - ph;
                            f(
                                row,
                                in_base + (zi * ih + yi) * iw + w0 * sw + e - pw,
                                sw,
                                (z * oh + y) * ow + w0,
                                w1 - w0,
                            );
                        }
                    }
                }
            }
        }
    }
}

/// `c (m×n) += a (m×k) · b (k×n)` with arbitrary element strides, so
/// transposed operands need no copies.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (isize, isize), b: &[f64], b_strides: (isize, isize), c: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller passes slices holding every element addressed by
    // the given shapes and strides; `c` is row-major m×n and does not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_input(op: &'static str, input: &Tensor, channels: usize) -> Result<[usize; 3]> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::dim(op, format!("expected (C,D,H,W) input, got {:?}", s)));
    }
    if s[0] != channels {
        return Err(Error::dim(op, format!("input has {} channels, kernel expects {}", s[0], channels)));
    }
    Ok(dims3(s))
}

/// Forward 3D convolution. `weight` is `(out, in, kd, kh, kw)`; `bias` is
/// optional so the pure linear map can be evaluated.
pub fn conv3d_forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, geom: ConvGeom) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 5 {
        return Err(Error::dim("conv3d", format!("weight shape {:?}", ws)));
    }
    let (cout, cin) = (ws[0], ws[1]);
    let idims = check_input("conv3d", input, cin)?;
    let k = kdims(weight);
    let odims = geom.conv_out(idims, k).ok_or_else(|| {
        Error::dim("conv3d", format!("kernel {:?} does not fit input {:?} with {:?}", k, idims, geom))
    })?;
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::dim("conv3d", format!("bias shape {:?}, expected [{}]", b.shape(), cout)));
        }
    }
    let plane = odims.iter().product::<usize>();
    let mut out = vec![0.0; cout * plane];
    if let Some(b) = bias {
        for (o, chunk) in out.chunks_mut(plane).enumerate() {
            chunk.fill(b.data()[o]);
        }
    }
    let taps = cin * k.iter().product::<usize>();
    let cols = im2col(input.data(), cin, idims, odims, k, geom);
    gemm(cout, taps, plane, weight.data(), (taps as isize, 1), &cols, (plane as isize, 1), &mut out);
    Tensor::new([cout, odims[0], odims[1], odims[2]], out)
}

/// Adjoint of the linear part of [`conv3d_forward`]: scatters `grad_out`
/// back onto an input of extent `in_dims`. This is the transposed
/// convolution.
pub fn conv3d_input_grad(grad_out: &Tensor, weight: &Tensor, in_dims: [usize; 3], geom: ConvGeom) -> Result<Tensor> {
    let ws = weight.shape();
    let (cout, cin) = (ws[0], ws[1]);
    let odims = check_input("conv3d transpose", grad_out, cout)?;
    let k = kdims(weight);
    if geom.conv_out(in_dims, k) != Some(odims) {
        return Err(Error::dim(
            "deconv3d",
            format!("output dims {:?} inconsistent with input {:?}, kernel {:?}, {:?}", in_dims, odims, k, geom),
        ));
    }
    let plane: usize = odims.iter().product();
    let taps = cin * k.iter().product::<usize>();
    let mut cols = vec![0.0; taps * plane];
    // cols = Wᵀ · grad_out
    gemm(taps, cout, plane, weight.data(), (1, taps as isize), grad_out.data(), (plane as isize, 1), &mut cols);
    let gin = col2im(&cols, cin, in_dims, odims, k, geom);
    Tensor::new([cin, in_dims[0], in_dims[1], in_dims[2]], gin)
}

/// Gradient of the convolution output with respect to its weights.
pub fn conv3d_weight_grad(input: &Tensor, grad_out: &Tensor, kernel: [usize; 3], geom: ConvGeom) -> Result<Tensor> {
    let cin = input.shape()[0];
    let cout = grad_out.shape()[0];
    let idims = dims3(input.shape());
    let odims = dims3(grad_out.shape());
    let plane: usize = odims.iter().product();
    let taps = cin * kernel.iter().product::<usize>();
    let cols = im2col(input.data(), cin, idims, odims, kernel, geom);
    let mut gw = vec![0.0; cout * taps];
    // gW = grad_out · colsᵀ
    gemm(cout, plane, taps, grad_out.data(), (plane as isize, 1), &cols, (1, plane as isize), &mut gw);
    Tensor::new([cout, cin, kernel[0], kernel[1], kernel[2]], gw)
}

/// Per-channel sum over the spatial extent; the bias gradient.
pub fn channel_sums(grad_out: &Tensor) -> Tensor {
    let c = grad_out.shape()[0];
    let plane = grad_out.len() / c.max(1);
    Tensor::from_vec(grad_out.data().chunks(plane.max(1)).map(|ch| ch.iter().sum()).collect())
}

/// Transposed convolution. `weight` is `(in, out, kd, kh, kw)`, bias `(out)`.
pub fn deconv3d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    geom: ConvGeom,
    out_dims: [usize; 3],
) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 5 {
        return Err(Error::dim("deconv3d", format!("weight shape {:?}", ws)));
    }
    check_input("deconv3d", input, ws[0])?;
    let mut out = conv3d_input_grad(input, weight, out_dims, geom)?;
    if let Some(b) = bias {
        if b.shape() != [ws[1]] {
            return Err(Error::dim("deconv3d", format!("bias shape {:?}, expected [{}]", b.shape(), ws[1])));
        }
        let plane = out_dims.iter().product::<usize>();
        for (o, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let bo = b.data()[o];
            chunk.iter_mut().for_each(|v| *v += bo);
        }
    }
    Ok(out)
}

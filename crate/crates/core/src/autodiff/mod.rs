//! Reverse-mode automatic differentiation on a recording tape.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward pass. [`Tape::backward`] walks the nodes in reverse
//! insertion order, which is a valid reverse topological order because a
//! node can only reference nodes created before it.
//!
//! ```
//! use flvae::autodiff::Tape;
//! use flvae::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
//! let y = tape.sum(tape.relu(x));
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 1.0]);
//! ```

pub mod conv;
pub mod pool;

use std::cell::RefCell;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use conv::{ConvGeom, ConvKernel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    HalfSumSquares(usize),
    Reshape(usize),
    Conv3d { x: usize, w: usize, b: usize, geom: ConvGeom },
    Deconv3d { x: usize, w: usize, b: usize, geom: ConvGeom },
    Affine { x: usize, w: usize, b: usize },
    Relu(usize),
    Sigmoid(usize),
    Dropout { x: usize, mask: Vec<f64> },
    Spp { x: usize, argmax: Vec<usize> },
    Concat { a: usize, b: usize, outer: usize, a_run: usize, b_run: usize },
    Narrow { x: usize, start: usize },
    Clamp { x: usize, lo: f64, hi: f64 },
    Softmax(usize),
    CrossEntropy { p: usize, label: usize },
    Mse { pred: usize, target: usize },
    KlStdNormal { mean: usize, logvar: usize },
    Reparam { mean: usize, logvar: usize, noise: Tensor },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. Not `Sync`: a tape belongs to a
/// single thread, and independent tapes share nothing.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value; panics on non-scalar tensors in debug builds.
    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

/// Gradients produced by one backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(self.shapes[v.id].clone()))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a vector.
pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hash of every piecewise choice made in the forward pass: relu input
    /// signs, pooling winners and clamp regions. Two evaluations with equal
    /// signatures lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let nodes = self.nodes.borrow();
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |v: u64| h = (h ^ v).wrapping_mul(0x0100_0000_01b3);
        for node in nodes.iter() {
            match &node.op {
                Op::Relu(x) => nodes[*x].value.data().iter().for_each(|v| mix((*v > 0.0) as u64)),
                Op::Spp { argmax, .. } => argmax.iter().for_each(|a| mix(*a as u64)),
                Op::Clamp { x, lo, hi } => nodes[*x].value.data().iter().for_each(|v| {
                    mix(if v < lo { 0 } else if v > hi { 2 } else { 1 })
                }),
                _ => {}
            }
        }
        h
    }

    /// Smallest distance of any relu input on the tape from the kink at zero.
    pub fn relu_margin(&self) -> f64 {
        let nodes = self.nodes.borrow();
        nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Relu(x) => Some(nodes[*x].value.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        debug_assert!(value.is_finite() || !requires_grad, "non-finite forward value from {:?}", op);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable input.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn add(&self, a: Var<'_>, b: Var<'_>) -> Result<Var<'_>> {
        let (va, vb) = (a.value(), b.value());
        same_shape("add", &va, &vb)?;
        let out = va.zip_map(&vb, |x, y| x + y);
        Ok(self.push(out, Op::Add(a.id, b.id), self.rg(a.id) || self.rg(b.id)))
    }

    pub fn scale(&self, a: Var<'_>, c: f64) -> Var<'_> {
        let out = a.value().map(|x| x * c);
        self.push(out, Op::Scale(a.id, c), self.rg(a.id))
    }

    pub fn sum(&self, a: Var<'_>) -> Var<'_> {
        let out = Tensor::scalar(a.value().sum());
        self.push(out, Op::Sum(a.id), self.rg(a.id))
    }

    /// `½ Σ x²`.
    pub fn half_sum_squares(&self, a: Var<'_>) -> Var<'_> {
        let out = Tensor::scalar(0.5 * a.value().sum_squares());
        self.push(out, Op::HalfSumSquares(a.id), self.rg(a.id))
    }

    pub fn reshape(&self, a: Var<'_>, shape: impl Into<Vec<usize>>) -> Result<Var<'_>> {
        let out = (*a.value()).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a.id), self.rg(a.id)))
    }

    pub fn conv3d(&self, x: Var<'_>, w: Var<'_>, b: Var<'_>, geom: ConvGeom) -> Result<Var<'_>> {
        let out = conv::conv3d_forward(&x.value(), &w.value(), Some(&b.value()), geom)?;
        let rg = self.rg(x.id) || self.rg(w.id) || self.rg(b.id);
        Ok(self.push(out, Op::Conv3d { x: x.id, w: w.id, b: b.id, geom }, rg))
    }

    /// Transposed convolution to an explicit output extent; `w` is
    /// `(in, out, kd, kh, kw)`.
    pub fn deconv3d(
        &self,
        x: Var<'_>,
        w: Var<'_>,
        b: Var<'_>,
        geom: ConvGeom,
        out_dims: [usize; 3],
    ) -> Result<Var<'_>> {
        let out = conv::deconv3d_forward(&x.value(), &w.value(), Some(&b.value()), geom, out_dims)?;
        let rg = self.rg(x.id) || self.rg(w.id) || self.rg(b.id);
        Ok(self.push(out, Op::Deconv3d { x: x.id, w: w.id, b: b.id, geom }, rg))
    }

    /// `weight · x + bias` for `weight` of shape `(m, n)` and `x` of `(n,)`.
    pub fn affine(&self, x: Var<'_>, w: Var<'_>, b: Var<'_>) -> Result<Var<'_>> {
        let (vx, vw, vb) = (x.value(), w.value(), b.value());
        let ws = vw.shape();
        if ws.len() != 2 || vx.shape() != [ws[1]] || vb.shape() != [ws[0]] {
            return Err(Error::dim(
                "affine",
                format!("weight {:?}, input {:?}, bias {:?}", ws, vx.shape(), vb.shape()),
            ));
        }
        let n = ws[1];
        let out: Vec<f64> = vw
            .data()
            .chunks(n)
            .zip(vb.data())
            .map(|(row, bi)| bi + row.iter().zip(vx.data()).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let rg = self.rg(x.id) || self.rg(w.id) || self.rg(b.id);
        Ok(self.push(Tensor::from_vec(out), Op::Affine { x: x.id, w: w.id, b: b.id }, rg))
    }

    pub fn activation(&self, x: Var<'_>, kind: Activation) -> Var<'_> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&self, x: Var<'_>) -> Var<'_> {
        let out = x.value().map(|v| v.max(0.0));
        self.push(out, Op::Relu(x.id), self.rg(x.id))
    }

    pub fn sigmoid(&self, x: Var<'_>) -> Var<'_> {
        let out = x.value().map(sigmoid);
        self.push(out, Op::Sigmoid(x.id), self.rg(x.id))
    }

    /// Inverted dropout: kept elements are scaled by `1/keep_prob` so that
    /// inference is the identity.
    pub fn dropout<'a>(&'a self, x: Var<'a>, keep_prob: f64, seed: u64, training: bool) -> Result<Var<'a>> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::param("dropout", format!("keep_prob {} outside (0, 1]", keep_prob)));
        }
        if !training || keep_prob == 1.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = 1.0 / keep_prob;
        let v = x.value();
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.random::<f64>() < keep_prob { inv } else { 0.0 })
            .collect();
        let out = Tensor::new(v.shape(), v.data().iter().zip(&mask).map(|(a, m)| a * m).collect())?;
        Ok(self.push(out, Op::Dropout { x: x.id, mask }, self.rg(x.id)))
    }

    pub fn spp_pool(&self, x: Var<'_>, bins: &[usize]) -> Result<Var<'_>> {
        let (out, argmax) = pool::spp_forward(&x.value(), bins)?;
        Ok(self.push(out, Op::Spp { x: x.id, argmax }, self.rg(x.id)))
    }

    pub fn concat(&self, a: Var<'_>, b: Var<'_>, axis: usize) -> Result<Var<'_>> {
        let (va, vb) = (a.value(), b.value());
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(Error::dim("concat", format!("{:?} vs {:?} on axis {}", sa, sb, axis)));
        }
        if (0..sa.len()).any(|i| i != axis && sa[i] != sb[i]) {
            return Err(Error::dim("concat", format!("{:?} vs {:?} on axis {}", sa, sb, axis)));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let (a_run, b_run) = (sa[axis] * inner, sb[axis] * inner);
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for o in 0..outer {
            data.extend_from_slice(&va.data()[o * a_run..(o + 1) * a_run]);
            data.extend_from_slice(&vb.data()[o * b_run..(o + 1) * b_run]);
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(a.id) || self.rg(b.id);
        Ok(self.push(out, Op::Concat { a: a.id, b: b.id, outer, a_run, b_run }, rg))
    }

    /// `len` elements of a vector starting at `start`.
    pub fn narrow(&self, x: Var<'_>, start: usize, len: usize) -> Result<Var<'_>> {
        let v = x.value();
        if v.rank() != 1 {
            return Err(Error::dim("narrow", format!("expected a vector, got {:?}", v.shape())));
        }
        let out = v.narrow0(start, len)?;
        Ok(self.push(out, Op::Narrow { x: x.id, start }, self.rg(x.id)))
    }

    pub fn clamp(&self, x: Var<'_>, lo: f64, hi: f64) -> Var<'_> {
        let out = x.value().map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { x: x.id, lo, hi }, self.rg(x.id))
    }

    pub fn softmax(&self, logits: Var<'_>) -> Result<Var<'_>> {
        let v = logits.value();
        if v.rank() != 1 || v.is_empty() {
            return Err(Error::dim("softmax", format!("expected a non-empty vector, got {:?}", v.shape())));
        }
        let out = Tensor::from_vec(softmax_vec(v.data()));
        Ok(self.push(out, Op::Softmax(logits.id), self.rg(logits.id)))
    }

    /// `-ln probs[label]`.
    pub fn cross_entropy(&self, probs: Var<'_>, label: usize) -> Result<Var<'_>> {
        let p = probs.value();
        if label >= p.len() {
            return Err(Error::param("cross_entropy", format!("label {} with {} classes", label, p.len())));
        }
        let out = Tensor::scalar(-p.data()[label].ln());
        Ok(self.push(out, Op::CrossEntropy { p: probs.id, label }, self.rg(probs.id)))
    }

    /// Mean of squared differences.
    pub fn mse(&self, pred: Var<'_>, target: Var<'_>) -> Result<Var<'_>> {
        let (p, t) = (pred.value(), target.value());
        same_shape("mse", &p, &t)?;
        let n = p.len().max(1) as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let rg = self.rg(pred.id) || self.rg(target.id);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { pred: pred.id, target: target.id }, rg))
    }

    /// `KL(N(mean, diag exp(logvar)) ‖ N(0, I))`.
    pub fn kl_std_normal(&self, mean: Var<'_>, logvar: Var<'_>) -> Result<Var<'_>> {
        let (m, lv) = (mean.value(), logvar.value());
        same_shape("kl_std_normal", &m, &lv)?;
        let kl = 0.5
            * m.data()
                .iter()
                .zip(lv.data())
                .map(|(mu, l)| mu * mu + l.exp() - l - 1.0)
                .sum::<f64>();
        let rg = self.rg(mean.id) || self.rg(logvar.id);
        Ok(self.push(Tensor::scalar(kl), Op::KlStdNormal { mean: mean.id, logvar: logvar.id }, rg))
    }

    /// `mean + exp(logvar / 2) ⊙ noise`; the noise is a constant.
    pub fn reparameterize(&self, mean: Var<'_>, logvar: Var<'_>, noise: Tensor) -> Result<Var<'_>> {
        let (m, lv) = (mean.value(), logvar.value());
        same_shape("reparameterize", &m, &lv)?;
        same_shape("reparameterize", &m, &noise)?;
        let z: Vec<f64> = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(noise.data())
            .map(|((mu, l), e)| mu + (0.5 * l).exp() * e)
            .collect();
        let rg = self.rg(mean.id) || self.rg(logvar.id);
        Ok(self.push(Tensor::from_vec(z), Op::Reparam { mean: mean.id, logvar: logvar.id, noise }, rg))
    }

    /// Accumulates gradients of the scalar `loss` into every node that
    /// requires them.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::dim("backward", format!("loss must be scalar, got {:?}", root.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                grads[id] = Some(g);
                continue;
            }
            let val = &node.value;
            let mut emit = |target: usize, t: Tensor| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    emit(*a, g.clone());
                    emit(*b, g.clone());
                }
                Op::Scale(a, c) => emit(*a, g.map(|v| v * c)),
                Op::Sum(a) => {
                    let gv = g.item();
                    emit(*a, Tensor::full(nodes[*a].value.shape(), gv));
                }
                Op::HalfSumSquares(a) => {
                    let gv = g.item();
                    emit(*a, nodes[*a].value.map(|v| v * gv));
                }
                Op::Reshape(a) => emit(*a, g.clone().reshape(nodes[*a].value.shape())?),
                Op::Conv3d { x, w, b, geom } => {
                    let (vx, vw) = (&nodes[*x].value, &nodes[*w].value);
                    if nodes[*x].requires_grad {
                        emit(*x, conv::conv3d_input_grad(&g, vw, conv::dims3(vx.shape()), *geom)?);
                    }
                    if nodes[*w].requires_grad {
                        emit(*w, conv::conv3d_weight_grad(vx, &g, conv::kdims(vw), *geom)?);
                    }
                    emit(*b, conv::channel_sums(&g));
                }
                Op::Deconv3d { x, w, b, geom } => {
                    let (vx, vw) = (&nodes[*x].value, &nodes[*w].value);
                    if nodes[*x].requires_grad {
                        emit(*x, conv::conv3d_forward(&g, vw, None, *geom)?);
                    }
                    if nodes[*w].requires_grad {
                        emit(*w, conv::conv3d_weight_grad(&g, vx, conv::kdims(vw), *geom)?);
                    }
                    emit(*b, conv::channel_sums(&g));
                }
                Op::Affine { x, w, b } => {
                    let (vx, vw) = (&nodes[*x].value, &nodes[*w].value);
                    let (m, n) = (vw.shape()[0], vw.shape()[1]);
                    if nodes[*x].requires_grad {
                        let mut gx = vec![0.0; n];
                        for (row, gi) in vw.data().chunks(n).zip(g.data()) {
                            for (acc, wij) in gx.iter_mut().zip(row) {
                                *acc += gi * wij;
                            }
                        }
                        emit(*x, Tensor::from_vec(gx));
                    }
                    if nodes[*w].requires_grad {
                        let gw = Tensor::from_fn([m, n], |k| g.data()[k / n] * vx.data()[k % n]);
                        emit(*w, gw);
                    }
                    emit(*b, g.clone());
                }
                Op::Relu(a) => {
                    let gx = g.zip_map(&nodes[*a].value, |gv, x| if x > 0.0 { gv } else { 0.0 });
                    emit(*a, gx);
                }
                Op::Sigmoid(a) => emit(*a, g.zip_map(val, |gv, s| gv * s * (1.0 - s))),
                Op::Dropout { x, mask } => {
                    let gx = Tensor::new(g.shape(), g.data().iter().zip(mask).map(|(a, m)| a * m).collect())?;
                    emit(*x, gx);
                }
                Op::Spp { x, argmax } => {
                    let mut gx = Tensor::zeros(nodes[*x].value.shape());
                    let d = gx.data_mut();
                    for (gi, &src) in g.data().iter().zip(argmax) {
                        d[src] += gi;
                    }
                    emit(*x, gx);
                }
                Op::Concat { a, b, outer, a_run, b_run } => {
                    let mut ga = Vec::with_capacity(outer * a_run);
                    let mut gb = Vec::with_capacity(outer * b_run);
                    let gd = g.data();
                    for o in 0..*outer {
                        let base = o * (a_run + b_run);
                        ga.extend_from_slice(&gd[base..base + a_run]);
                        gb.extend_from_slice(&gd[base + a_run..base + a_run + b_run]);
                    }
                    emit(*a, Tensor::new(nodes[*a].value.shape(), ga)?);
                    emit(*b, Tensor::new(nodes[*b].value.shape(), gb)?);
                }
                Op::Narrow { x, start } => {
                    let mut gx = Tensor::zeros(nodes[*x].value.shape());
                    gx.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                    emit(*x, gx);
                }
                Op::Clamp { x, lo, hi } => {
                    let gx = g.zip_map(&nodes[*x].value, |gv, v| if v >= *lo && v <= *hi { gv } else { 0.0 });
                    emit(*x, gx);
                }
                Op::Softmax(a) => {
                    let dot = g.dot(val);
                    emit(*a, g.zip_map(val, |gv, p| p * (gv - dot)));
                }
                Op::CrossEntropy { p, label } => {
                    let vp = &nodes[*p].value;
                    let mut gp = Tensor::zeros(vp.shape());
                    gp.data_mut()[*label] = -g.item() / vp.data()[*label];
                    emit(*p, gp);
                }
                Op::Mse { pred, target } => {
                    let (vp, vt) = (&nodes[*pred].value, &nodes[*target].value);
                    let c = 2.0 * g.item() / vp.len().max(1) as f64;
                    let diff = vp.zip_map(vt, |a, b| c * (a - b));
                    emit(*target, diff.map(|v| -v));
                    emit(*pred, diff);
                }
                Op::KlStdNormal { mean, logvar } => {
                    let gv = g.item();
                    emit(*mean, nodes[*mean].value.map(|m| gv * m));
                    emit(*logvar, nodes[*logvar].value.map(|l| gv * 0.5 * (l.exp() - 1.0)));
                }
                Op::Reparam { mean, logvar, noise } => {
                    let vl = &nodes[*logvar].value;
                    let gl = Tensor::from_fn(vl.shape(), |i| {
                        g.data()[i] * noise.data()[i] * 0.5 * (0.5 * vl.data()[i]).exp()
                    });
                    emit(*mean, g.clone());
                    emit(*logvar, gl);
                }
            }
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

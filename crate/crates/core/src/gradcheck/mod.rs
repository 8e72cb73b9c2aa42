//! Central finite-difference gradient verification.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

pub mod suite;

/// Relative error used throughout: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Result of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Input index and flat element index of the worst component.
    pub worst: (usize, usize),
    pub analytic: Vec<Tensor>,
    /// Components left out because a probe crossed a relu, pooling or
    /// clamp boundary, where the function is not differentiable.
    pub skipped: usize,
    pub checked: usize,
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps`, over every component of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    grad_check_tampered(f, inputs, eps, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradients before
/// comparison. Used to confirm that a broken backward pass is caught.
pub fn grad_check_tampered<F>(f: F, inputs: &[Tensor], eps: f64, tamper: impl Fn(&mut [Tensor])) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    grad_check_with(f, inputs, Stencil::Central(eps), tamper)
}

/// Finite-difference scheme for the numeric gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`.
    Central(f64),
    /// Richardson extrapolation of central differences at `h` and `2h`,
    /// which cancels the `h²` truncation term. Lets a larger `h` keep
    /// rounding error small on deep compositions.
    Extrapolated(f64),
}

pub fn grad_check_with<F>(f: F, inputs: &[Tensor], stencil: Stencil, tamper: impl Fn(&mut [Tensor])) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let base = tape.branch_signature();
    let grads = tape.backward(out)?;
    let mut analytic: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(*v)).collect();
    tamper(&mut analytic);

    let eval = |probe: &[Tensor]| -> Result<(f64, u64)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.param(t.clone())).collect();
        let y = f(&tape, &vars)?.item();
        Ok((y, tape.branch_signature()))
    };

    let mut probe = inputs.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst = (0, 0);
    let (mut skipped, mut checked) = (0, 0);
    let (h, offsets): (f64, &[f64]) = match stencil {
        Stencil::Central(h) => (h, &[1.0]),
        Stencil::Extrapolated(h) => (h, &[1.0, 2.0]),
    };
    let mut diffs = [0.0; 2];
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            let mut smooth = true;
            for (k, &m) in offsets.iter().enumerate() {
                probe[i].data_mut()[j] = x0 + m * h;
                let (up, sig_up) = eval(&probe)?;
                probe[i].data_mut()[j] = x0 - m * h;
                let (down, sig_down) = eval(&probe)?;
                smooth &= sig_up == base && sig_down == base;
                diffs[k] = (up - down) / (2.0 * m * h);
            }
            probe[i].data_mut()[j] = x0;
            if !smooth {
                skipped += 1;
                continue;
            }
            checked += 1;
            let numeric = match stencil {
                Stencil::Central(_) => diffs[0],
                Stencil::Extrapolated(_) => (4.0 * diffs[0] - diffs[1]) / 3.0,
            };
            let e = rel_err(analytic[i].data()[j], numeric);
            if e > max_rel_err {
                max_rel_err = e;
                worst = (i, j);
            }
        }
    }
    Ok(GradCheck { max_rel_err, worst, analytic, skipped, checked })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = Tensor::from_vec(vec![0.5, -1.25, 3.0]);
        let r = grad_check(
            |t, v| {
                let w = t.constant(c.clone());
                let b = t.constant(Tensor::from_vec(vec![0.0]));
                let w2 = t.reshape(w, [1, 3])?;
                let y = t.affine(v[0], w2, b)?;
                Ok(t.sum(y))
            },
            &[Tensor::from_vec(vec![0.1, 0.2, 0.3])],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-10, "{}", r.max_rel_err);
    }

    #[test]
    fn detects_wrong_gradient() {
        // x0 enters as a constant, so the analytic gradient misses half of d(x²)/dx
        let x = Tensor::from_vec(vec![0.3, -0.7]);
        let r = grad_check(
            |t, v| {
                let c = v[0].value().data()[0];
                Ok(t.sum(t.scale(v[0], c)))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err > 0.4);
        assert_eq!(r.worst, (0, 0));
    }

    #[test]
    fn extrapolation_beats_plain_central_differences() {
        let x = [Tensor::from_vec(vec![0.7, -1.3])];
        fn f<'t>(t: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
            let y = t.sigmoid(t.scale(v[0], 3.0));
            Ok(t.half_sum_squares(t.scale(y, 4.0)))
        }
        let plain = grad_check_with(f, &x, Stencil::Central(1e-3), |_| {}).unwrap();
        let rich = grad_check_with(f, &x, Stencil::Extrapolated(1e-3), |_| {}).unwrap();
        assert!(rich.max_rel_err < plain.max_rel_err / 100.0, "{} vs {}", rich.max_rel_err, plain.max_rel_err);
    }

    #[test]
    fn probes_across_a_kink_are_skipped() {
        let x = Tensor::from_vec(vec![1e-7, 0.5, -0.5]);
        let r = grad_check(|t, v| Ok(t.sum(t.relu(v[0]))), &[x], 1e-5).unwrap();
        assert_eq!((r.skipped, r.checked), (1, 2));
        assert!(r.max_rel_err < 1e-10);
    }
}

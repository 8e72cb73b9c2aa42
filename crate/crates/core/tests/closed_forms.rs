use flvae::autodiff::Tape;
use flvae::model::Pass;
use flvae::train::{init_params, truncated_normal, WEIGHT_STD};
use flvae::{rng, Tensor};
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn kl(mean: &[f64], logvar: &[f64]) -> f64 {
    let t = Tape::new();
    let m = t.constant(Tensor::from_vec(mean.to_vec()));
    let l = t.constant(Tensor::from_vec(logvar.to_vec()));
    t.kl_std_normal(m, l).unwrap().item()
}

#[test]
fn kl_vanishes_at_the_prior() {
    assert_eq!(kl(&[0.0; 12], &[0.0; 12]), 0.0);
}

/// `E_q[ln q(z) - ln p(z)]` estimated from a million draws of `q`.
#[test]
fn kl_matches_monte_carlo_estimate() {
    let mean = [0.8, -0.3, 1.5];
    let logvar = [-0.5, 0.4, -1.2];
    let mut r = rng::rng(17, &[]);
    let n = 1_000_000;
    let log_n = |x: f64, mu: f64, var: f64| -0.5 * ((x - mu).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln());
    let mut acc = 0.0;
    for _ in 0..n {
        for d in 0..3 {
            let var = f64::exp(logvar[d]);
            let z = Normal::new(mean[d], var.sqrt()).unwrap().sample(&mut r);
            acc += log_n(z, mean[d], var) - log_n(z, 0.0, 1.0);
        }
    }
    let mc = acc / n as f64;
    let exact = kl(&mean, &logvar);
    assert!((mc - exact).abs() < 0.01 * exact, "{mc} vs {exact}");
}

proptest! {
    #[test]
    fn kl_is_non_negative(v in proptest::collection::vec((-3.0f64..3.0, -4.0f64..4.0), 1..16)) {
        let (m, l): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assert!(kl(&m, &l) >= 0.0);
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        v in proptest::collection::vec(-20.0f64..20.0, 1..10),
        shift in -100.0f64..100.0,
    ) {
        let t = Tape::new();
        let p = t.softmax(t.constant(Tensor::from_vec(v.clone()))).unwrap().value();
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|x| *x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = t.softmax(t.constant(Tensor::from_vec(shifted))).unwrap().value();
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn cross_entropy_of_uniform_prediction_is_log_class_count() {
    for n in [2usize, 6, 10] {
        let t = Tape::new();
        let p = t.softmax(t.constant(Tensor::zeros([n]))).unwrap();
        for label in 0..n {
            let ce = t.cross_entropy(p, label).unwrap().item();
            assert!((ce - (n as f64).ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn mse_is_mean_of_squared_differences() {
    let t = Tape::new();
    let a = t.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
    let b = t.constant(Tensor::from_vec(vec![1.5, 2.0, 2.0, 6.0]));
    assert!((t.mse(a, b).unwrap().item() - (0.25 + 0.0 + 1.0 + 4.0) / 4.0).abs() < 1e-15);
}

#[test]
fn dropout_keeps_the_expected_fraction_and_preserves_the_mean() {
    let n = 100_000;
    let t = Tape::new();
    let x = t.constant(Tensor::full([n], 2.0));
    let y = t.dropout(x, 0.9, 3, true).unwrap().value();
    let kept = y.data().iter().filter(|v| **v != 0.0).count() as f64 / n as f64;
    // binomial standard error of the kept fraction is ~1e-3
    assert!((kept - 0.9).abs() < 5e-3, "{kept}");
    assert!(y.data().iter().all(|v| *v == 0.0 || (v - 2.0 / 0.9).abs() < 1e-12));
    assert!((y.sum() / n as f64 - 2.0).abs() < 0.02);
    let z = t.dropout(x, 0.9, 3, false).unwrap().value();
    assert_eq!(z.data(), x.value().data());
    assert_eq!(t.dropout(x, 0.9, 3, true).unwrap().value().data(), y.data());
    assert_ne!(t.dropout(x, 0.9, 4, true).unwrap().value().data(), y.data());
}

/// Standard deviation of `N(0, 1)` restricted to `[-a, a]`, by Simpson's rule.
fn truncated_unit_std(a: f64) -> f64 {
    let n = 20_000;
    let h = 2.0 * a / n as f64;
    let (mut m0, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let x = -a + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let p = (-0.5 * x * x).exp();
        m0 += w * p;
        m2 += w * p * x * x;
    }
    (m2 / m0).sqrt()
}

#[test]
fn truncated_normal_matches_its_theoretical_spread() {
    let mut r = rng::rng(21, &[]);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| truncated_normal(&mut r, WEIGHT_STD)).collect();
    assert!(draws.iter().all(|x| x.abs() <= 2.0 * WEIGHT_STD));
    let mean = draws.iter().sum::<f64>() / n as f64;
    let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let expected = WEIGHT_STD * truncated_unit_std(2.0);
    assert!((expected - 0.088).abs() < 1e-3);
    assert!((std - expected).abs() < 0.01 * expected, "{std} vs {expected}");
    assert!(mean.abs() < 1e-3);
}

#[test]
fn initial_weights_respect_the_truncation() {
    let params = init_params(&flvae::model::ModelConfig::default(), 0);
    for (name, t) in params.iter() {
        let bound = if flvae::model::is_weight(name) { 0.2 } else { 0.02 };
        assert!(t.max_abs() <= bound, "{name}");
    }
}

#[test]
fn reparameterized_samples_have_the_posterior_moments() {
    let (mu, logvar) = (0.3, -0.7);
    let n = 100_000;
    let t = Tape::new();
    let m = t.constant(Tensor::full([n], mu));
    let l = t.constant(Tensor::full([n], logvar));
    let z = t.reparameterize(m, l, rng::normal_vec(5, n)).unwrap().value();
    let mean = z.sum() / n as f64;
    let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = f64::exp(logvar / 2.0);
    assert!((mean - mu).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean}");
    assert!((var / (sd * sd) - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn noise_streams_are_standard_normal_and_seeded() {
    let a = rng::normal_vec(8, 50_000);
    assert_eq!(a, rng::normal_vec(8, 50_000));
    assert_ne!(a, rng::normal_vec(9, 50_000));
    let mean = a.sum() / 50_000.0;
    let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50_000.0;
    assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.03);
    let p = Pass::train(4);
    assert_eq!(p.noise(12), p.noise(12));
}

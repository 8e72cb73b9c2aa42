use flvae::autodiff::{Tape, Var};
use flvae::gradcheck::suite::{check_op, composite_config, composite_params, run_suite, OPS};
use flvae::gradcheck::{grad_check, rel_err};
use flvae::model::{Lambdas, ModelConfig, Pass, Prepared, FlVae};
use flvae::train::init_model;
use flvae::{rng, Tensor};

#[test]
fn elementary_ops_pass_at_twenty_seeds() {
    let ops: Vec<&str> = OPS.iter().copied().filter(|o| *o != "composite").collect();
    for r in run_suite(&ops, 20, 1e-4, None).unwrap() {
        assert!(r.passed, "{}: {:e} at seed {} ({} skipped)", r.op, r.max_rel_err, r.worst_seed, r.skipped);
        assert_eq!(r.skipped, 0, "{}", r.op);
    }
}

#[test]
fn composite_loss_passes_at_two_seeds() {
    let r = &run_suite(&["composite"], 2, 1e-4, None).unwrap()[0];
    assert!(r.passed, "{:e} at seed {}, {} of {} skipped", r.max_rel_err, r.worst_seed, r.skipped, r.checked);
}

#[test]
fn corrupted_gradients_are_caught_for_every_elementary_op() {
    for &op in OPS.iter().filter(|o| **o != "composite") {
        let r = check_op(op, 1, true).unwrap();
        assert!(r.max_rel_err > 1e-3, "{op}: corruption missed ({:e})", r.max_rel_err);
    }
}

#[test]
fn conv3d_sigmoid_composite() {
    use flvae::autodiff::ConvGeom;
    let mut r = rng::rng(11, &[]);
    use rand::Rng;
    let mk = |r: &mut rand_chacha::ChaCha8Rng, s: &[usize]| Tensor::from_fn(s.to_vec(), |_| r.random_range(-0.5..0.5));
    let inputs = [mk(&mut r, &[2, 3, 6, 6]), mk(&mut r, &[3, 2, 3, 3, 3]), mk(&mut r, &[3])];
    let res = grad_check(
        |t, v| {
            let y = t.sigmoid(t.conv3d(v[0], v[1], v[2], ConvGeom::new([1, 2, 2], [1, 1, 1]))?);
            Ok(t.half_sum_squares(y))
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(res.max_rel_err < 1e-4, "{:e}", res.max_rel_err);
}

fn latent_loss<'t>(t: &'t Tape, v: &[Var<'t>], model: &FlVae, targets: &[Tensor], noise: &Tensor) -> flvae::Result<Var<'t>> {
    let pv = model.params.bind(t, |_| false);
    let z = t.reparameterize(v[0], v[1], noise.clone())?;
    let mut terms = Vec::new();
    for (head, target) in model.config.heads.iter().zip(targets) {
        let part = model.latent_part(t, z, model.config.part_for(*head))?;
        let pred = model.decode_on(t, &pv, *head, part)?;
        terms.push((*head, pred, t.constant(target.clone())));
    }
    let l2 = t.constant(Tensor::scalar(0.0));
    Ok(flvae::model::assemble_pretrain_loss(t, v[0], v[1], &terms, l2, Lambdas::default())?.0)
}

/// Pretraining loss of the small composite model as a function of the
/// latent mean and log-variance, with the encoder output replaced by leaves.
/// The parameter seed is the first whose decoder relu inputs all stay clear
/// of zero, so no probe crosses a kink.
#[test]
fn reparameterization_gradient_matches_finite_differences() {
    let config = composite_config();
    let mut r = rng::rng(5, &[1]);
    use rand::Rng;
    let targets: Vec<Tensor> = config
        .heads
        .iter()
        .map(|h| Tensor::from_fn([h.channels(), 1, 16, 16], |_| r.random_range(0.0..1.0)))
        .collect();
    let noise = rng::normal_vec(99, 12);
    let inputs = [
        Tensor::from_fn([12], |_| r.random_range(-1.0..1.0)),
        Tensor::from_fn([12], |_| r.random_range(-1.0..1.0)),
    ];
    let model = (0..)
        .map(|seed| FlVae::new(config.clone(), composite_params(&config, seed)).unwrap())
        .find(|m| {
            let t = Tape::new();
            let v: Vec<_> = inputs.iter().map(|x| t.constant(x.clone())).collect();
            latent_loss(&t, &v, m, &targets, &noise).unwrap();
            t.relu_margin() >= 1e-4
        })
        .unwrap();
    let res = grad_check(|t, v| latent_loss(t, v, &model, &targets, &noise), &inputs, 1e-5).unwrap();
    assert!(res.max_rel_err < 1e-3, "{:e}", res.max_rel_err);
    assert_eq!(res.skipped, 0);
}

#[test]
fn full_model_objective_is_deterministic_and_matches_backward_on_a_probe() {
    let model = init_model(ModelConfig::default(), 2).unwrap();
    let mut r = rng::rng(2, &[7]);
    use rand::Rng;
    let sample = Prepared {
        id: "p".into(),
        label: Some(1),
        rgb: Tensor::from_fn([3, 8, 24, 24], |_| r.random_range(0.0..1.0)),
        flow: Tensor::from_fn([2, 7, 24, 24], |_| r.random_range(0.0..1.0)),
    };
    let eval = |params: &flvae::model::ParameterSet| {
        let tape = Tape::new();
        let pv = params.bind(&tape, |_| true);
        let m = flvae::model::FlVae::new(model.config.clone(), params.clone()).unwrap();
        m.pretrain_objective(&tape, &pv, &sample, 3, Lambdas::default(), Pass::eval(4)).unwrap().1.total
    };
    assert_eq!(eval(&model.params).to_bits(), eval(&model.params).to_bits());

    let tape = Tape::new();
    let pv = model.params.bind(&tape, |_| true);
    let (loss, _) = model.pretrain_objective(&tape, &pv, &sample, 3, Lambdas::default(), Pass::eval(4)).unwrap();
    let grads = tape.backward(loss).unwrap();
    // a classifier-free weight on the decoder path with a sizeable gradient
    let name = "dec.short.deconv4.bias";
    let g = grads.get(pv.get(name).unwrap()).unwrap().data()[0];
    let h = 1e-5;
    let mut up = model.params.clone();
    up.get_mut(name).unwrap().data_mut()[0] += h;
    let mut down = model.params.clone();
    down.get_mut(name).unwrap().data_mut()[0] -= h;
    let numeric = (eval(&up) - eval(&down)) / (2.0 * h);
    assert!(rel_err(g, numeric) < 1e-4, "{g} vs {numeric}");
}

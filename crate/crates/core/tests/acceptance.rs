//! End-to-end acceptance run. Every criterion is measured in turn and
//! reported as one `PASS`/`FAIL` line; the test fails if any criterion does.
//!
//! cargo test --release -p flvae-core --test acceptance -- --nocapture

mod common;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use flvae::autodiff::conv::{conv3d_forward, deconv3d_forward};
use flvae::autodiff::pool::spp_forward;
use flvae::autodiff::{ConvGeom, Tape};
use flvae::data::{gen_dataset, read_clip, split_train_test, write_clip, SynthConfig, VideoClip};
use flvae::flow::{flow_clip, tv_l1, tv_l1_traced, TvL1Params};
use flvae::gradcheck::suite::{run_suite, OpReport, OPS};
use flvae::model::{Checkpoint, EncoderMode, FlVae, HeadKind, ModelConfig, ParameterSet, Prepared};
use flvae::report::{accuracy_svg, write_accuracy_csv, write_file, write_mse_csv};
use flvae::train::{
    adadelta_step, evaluate_accuracy, evaluate_head_mse, init_model, new_optimizer, prepare, pretrain, run_epochs,
    train_classifier, AccuracyRow, AdadeltaConfig, AdadeltaState, MseRow, Stage, TrainConfig,
};
use flvae::{rng, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Run {
    outcomes: Vec<Outcome>,
    dir: PathBuf,
}

impl Run {
    fn record(&mut self, id: usize, name: &'static str, pass: bool, detail: String) {
        println!("{} [{:>2}] {}: {}", if pass { "PASS" } else { "FAIL" }, id, name, detail);
        self.outcomes.push(Outcome { id, name, pass, detail });
    }
}

fn gradient_suite(run: &mut Run) {
    let t0 = Instant::now();
    let ops: Vec<&str> = OPS.iter().copied().filter(|o| *o != "composite").collect();
    let mut reports: Vec<OpReport> = run_suite(&ops, 20, 1e-4, None).unwrap();
    reports.extend(run_suite(&["composite"], 5, 1e-4, None).unwrap());
    let secs = t0.elapsed().as_secs_f64();
    let worst = reports.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err)).unwrap();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
    let skipped: usize = reports.iter().map(|r| r.skipped).sum();
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    let composite = reports.last().unwrap();
    run.record(
        1,
        "gradient suite",
        failed.is_empty() && secs < 120.0,
        format!(
            "{} ops x 20 seeds + composite x 5 seeds; worst {} {:.2e} (seed {}); composite {:.2e}; \
             {} of {} probes skipped at kinks; failed {:?}; {:.1}s (limit 120s)",
            ops.len(),
            worst.op,
            worst.max_rel_err,
            worst.worst_seed,
            composite.max_rel_err,
            skipped,
            checked + skipped,
            failed,
            secs
        ),
    );
}

fn oracle_equivalence(run: &mut Run) {
    let t0 = Instant::now();
    let mut worst = [0.0f64; 5];
    let cases = 25;
    for seed in 0..cases {
        let (x, w, b, stride, pad) = conv_case(seed);
        let fast = conv3d_forward(&x, &w, Some(&b), ConvGeom::new(stride, pad)).unwrap();
        worst[0] = worst[0].max(max_abs_diff(&fast, &naive_conv3d(&x, &w, &b, stride, pad)));

        // adjoint identity <conv(x), y> = <x, deconv(y)>
        let geom = ConvGeom::new(stride, pad);
        let cx = conv3d_forward(&x, &w, Some(&Tensor::zeros([w.shape()[0]])), geom).unwrap();
        let mut r = rng::rng(seed, &[3]);
        let y = random_tensor(&mut r, cx.shape());
        let xs = x.shape();
        let ty = deconv3d_forward(&y, &w, None, geom, [xs[1], xs[2], xs[3]]).unwrap();
        worst[1] = worst[1].max((cx.dot(&y) - x.dot(&ty)).abs());

        let mut r = rng::rng(seed, &[2]);
        let (c, o) = (r.random_range(1..4), r.random_range(1..4));
        let dims = [r.random_range(1..4), r.random_range(1..6), r.random_range(1..6)];
        let k = [r.random_range(1..4), r.random_range(1..5), r.random_range(1..5)];
        let stride = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4)];
        let pad: [usize; 3] = std::array::from_fn(|a| r.random_range(0..=(k[a] - 1) / 2));
        let out: [usize; 3] = std::array::from_fn(|a| (dims[a] - 1) * stride[a] + k[a] - 2 * pad[a]);
        let x = random_tensor(&mut r, &[c, dims[0], dims[1], dims[2]]);
        let w = random_tensor(&mut r, &[c, o, k[0], k[1], k[2]]);
        let b = random_tensor(&mut r, &[o]);
        let fast = deconv3d_forward(&x, &w, Some(&b), ConvGeom::new(stride, pad), out).unwrap();
        worst[2] = worst[2].max(max_abs_diff(&fast, &naive_deconv3d(&x, &w, &b, stride, pad, out)));

        let mut r = rng::rng(seed, &[4]);
        let shape = [r.random_range(1..4), r.random_range(1..4), r.random_range(4..11), r.random_range(4..11)];
        let x = random_tensor(&mut r, &shape);
        let (fast, _) = spp_forward(&x, &[4, 2, 1]).unwrap();
        worst[3] = worst[3].max(max_abs_diff(&fast, &naive_spp(&x, &[4, 2, 1])));

        let mut r = rng::rng(seed, &[5]);
        let (m, n) = (r.random_range(1..20), r.random_range(1..40));
        let (x, w, b) = (random_tensor(&mut r, &[n]), random_tensor(&mut r, &[m, n]), random_tensor(&mut r, &[m]));
        let t = Tape::new();
        let y = t.affine(t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone())).unwrap().value();
        worst[4] = worst[4].max(max_abs_diff(&y, &naive_affine(&x, &w, &b)));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst[0] < 1e-12 && worst[1] < 1e-10 && worst[2] < 1e-12 && worst[3] < 1e-12 && worst[4] < 1e-12 && secs < 60.0;
    run.record(
        2,
        "oracle equivalence",
        pass,
        format!(
            "{cases} instances each; max |diff| conv3d {:.1e}, deconv3d {:.1e}, spp {:.1e}, affine {:.1e} (limit 1e-12); \
             adjoint {:.1e} (limit 1e-10); {:.2}s",
            worst[0], worst[2], worst[3], worst[4], worst[1], secs
        ),
    );
}

fn closed_forms(run: &mut Run) {
    let kl = |m: &[f64], l: &[f64]| {
        let t = Tape::new();
        t.kl_std_normal(t.constant(Tensor::from_vec(m.to_vec())), t.constant(Tensor::from_vec(l.to_vec())))
            .unwrap()
            .item()
    };
    let at_prior = kl(&[0.0; 12], &[0.0; 12]);

    let (mean, logvar) = ([0.8, -0.3, 1.5], [-0.5, 0.4, -1.2]);
    let mut r = rng::rng(17, &[]);
    let log_n = |x: f64, mu: f64, var: f64| -0.5 * ((x - mu).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln());
    let n = 1_000_000;
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
    let mc_rel = (mc - exact).abs() / exact;

    let (mut sum_err, mut shift_err) = (0.0f64, 0.0f64);
    let mut r = rng::rng(18, &[]);
    for _ in 0..500 {
        let len = r.random_range(1..12);
        let v: Vec<f64> = (0..len).map(|_| r.random_range(-30.0..30.0)).collect();
        let shift = r.random_range(-100.0..100.0);
        let t = Tape::new();
        let p = t.softmax(t.constant(Tensor::from_vec(v.clone()))).unwrap().value();
        let q = t.softmax(t.constant(Tensor::from_vec(v.iter().map(|x| x + shift).collect()))).unwrap().value();
        sum_err = sum_err.max((p.sum() - 1.0).abs());
        shift_err = shift_err.max(max_abs_diff(&p, &q));
    }

    let mut ce_err = 0.0f64;
    for classes in 2..=12 {
        let t = Tape::new();
        let p = t.softmax(t.constant(Tensor::zeros([classes]))).unwrap();
        for label in 0..classes {
            ce_err = ce_err.max((t.cross_entropy(p, label).unwrap().item() - (classes as f64).ln()).abs());
        }
    }
    run.record(
        3,
        "closed forms",
        at_prior == 0.0 && mc_rel < 0.01 && sum_err < 1e-12 && shift_err < 1e-12 && ce_err < 1e-12,
        format!(
            "KL(0,0) = {at_prior}; KL {exact:.5} vs Monte Carlo {mc:.5} (rel {mc_rel:.1e}, limit 1e-2); \
             softmax |sum-1| {sum_err:.1e}, shift {shift_err:.1e}; |CE(uniform) - ln N| {ce_err:.1e}"
        ),
    );
}

fn tv_l1_checks(run: &mut Run) {
    let t0 = Instant::now();
    let params = TvL1Params::default();
    let a = pattern(48, 48, 0.0, 0.0);
    let still = tv_l1(&a, &a, &params).unwrap().mean_magnitude();
    let moved = tv_l1(&a, &pattern(48, 48, 1.0, 0.0), &params).unwrap();
    let epe = mean_epe(&moved, (1.0, 0.0), 4);
    let traced = tv_l1_traced(&a, &pattern(48, 48, 1.5, -0.5), &params).unwrap();
    let e = &traced.finest_energies;
    let worst_rise = e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    run.record(
        4,
        "TV-L1",
        still < 1e-3 && epe < 0.5 && worst_rise <= 0.0 && secs < 60.0,
        format!(
            "identical frames mean |flow| {still:.1e} (limit 1e-3); 1px translation EPE {epe:.3} px (limit 0.5); \
             finest-level energy over {} warps {:.4} -> {:.4}, largest step {worst_rise:.2e}; {secs:.2}s at 48x48",
            e.len(),
            e[0],
            e[e.len() - 1]
        ),
    );
}

const SEEDS: [u64; 3] = [0, 1, 2];
const PRETRAIN_EPOCHS: usize = 40;
const CLASSIFY_EPOCHS: usize = 30;
const EVAL_SEED: u64 = 9;
const RATIOS: [f64; 3] = [0.2, 0.5, 1.0];

/// Metrics of one seed of the comparative experiment.
struct SeedResult {
    fused: Vec<AccuracyRow>,
    scratch: f64,
    rgb_only: f64,
    mse: Vec<MseRow>,
}

fn accuracy_at(rows: &[AccuracyRow], ratio: f64) -> f64 {
    rows.iter().find(|r| r.ratio == ratio).unwrap().accuracy
}

/// Trains one variant; returns the model and, when pretrained, the held-out
/// head MSE measured between the two stages.
fn train_variant(mode: EncoderMode, pretrained: bool, train: &[Prepared], test: &[Prepared], seed: u64) -> (FlVae, Vec<MseRow>) {
    let mut config = ModelConfig::default();
    config.encoder.mode = mode;
    let mut model = init_model(config, seed).unwrap();
    let mut mse = Vec::new();
    if pretrained {
        pretrain(&mut model, train, &TrainConfig { epochs: PRETRAIN_EPOCHS, seed, ..TrainConfig::default() }).unwrap();
        mse = evaluate_head_mse(&model, test, 0.5, EVAL_SEED, "pretrained").unwrap();
    }
    train_classifier(&mut model, train, &TrainConfig { epochs: CLASSIFY_EPOCHS, seed, ..TrainConfig::default() }).unwrap();
    (model, mse)
}

fn experiment_seed(seed: u64) -> SeedResult {
    let clips = gen_dataset(&SynthConfig { clips_per_class: 20, seed, ..SynthConfig::default() }).unwrap();
    let (train, test) = split_train_test(&clips, 0.75, seed);
    let flow = TvL1Params::default();
    let train = prepare(&train, &ModelConfig::default(), &flow).unwrap();
    let test = prepare(&test, &ModelConfig::default(), &flow).unwrap();

    let (fused, mse) = train_variant(EncoderMode::RgbFlow, true, &train, &test, seed);
    let fused_rows = evaluate_accuracy(&fused, &test, &RATIOS, EVAL_SEED, 1, "rgb+flow pretrained").unwrap();
    let (scratch, _) = train_variant(EncoderMode::RgbFlow, false, &train, &test, seed);
    let scratch = evaluate_accuracy(&scratch, &test, &[0.5], EVAL_SEED, 1, "scratch").unwrap()[0].accuracy;
    let (rgb, _) = train_variant(EncoderMode::Rgb, true, &train, &test, seed);
    let rgb_only = evaluate_accuracy(&rgb, &test, &[0.5], EVAL_SEED, 1, "rgb").unwrap()[0].accuracy;
    SeedResult { fused: fused_rows, scratch, rgb_only, mse }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn list(v: impl Iterator<Item = f64>) -> String {
    v.map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn comparative_experiment(run: &mut Run) {
    let t0 = Instant::now();
    let results: Vec<SeedResult> = SEEDS
        .iter()
        .map(|&s| {
            let t = Instant::now();
            let r = experiment_seed(s);
            println!("       seed {s} done in {:.0}s", t.elapsed().as_secs_f64());
            r
        })
        .collect();
    let secs = t0.elapsed().as_secs_f64();

    let fused_half = || results.iter().map(|r| accuracy_at(&r.fused, 0.5));
    let (pre, scratch) = (mean(fused_half()), mean(results.iter().map(|r| r.scratch)));
    run.record(
        5,
        "pretraining helps",
        pre - scratch >= 0.0 && secs < 600.0,
        format!(
            "accuracy at r=0.5 with pretraining {pre:.3} [{}] vs without {scratch:.3} [{}]; gap {:+.3}; \
             experiment runtime {secs:.0}s for all three comparisons (limit 600s)",
            list(fused_half()),
            list(results.iter().map(|r| r.scratch)),
            pre - scratch
        ),
    );

    let rgb = mean(results.iter().map(|r| r.rgb_only));
    run.record(
        6,
        "two-stream helps",
        pre - rgb >= 0.0,
        format!(
            "accuracy at r=0.5 rgb+flow {pre:.3} vs rgb-only {rgb:.3} [{}]; gap {:+.3}",
            list(results.iter().map(|r| r.rgb_only)),
            pre - rgb
        ),
    );

    let head_mse = |h: HeadKind| results.iter().map(move |r| r.mse.iter().find(|m| m.head == h).unwrap().mse);
    let (short, long) = (mean(head_mse(HeadKind::ShortTermRgb)), mean(head_mse(HeadKind::LongTermRgb)));
    run.record(
        7,
        "short-term head reconstructs better",
        short <= long,
        format!(
            "held-out MSE after pretraining at r=0.5 short {short:.5} [{}] vs long {long:.5} [{}]; gap {:+.5}",
            list(head_mse(HeadKind::ShortTermRgb)),
            list(head_mse(HeadKind::LongTermRgb)),
            long - short
        ),
    );

    let by_ratio: Vec<f64> = RATIOS.iter().map(|&q| mean(results.iter().map(|r| accuracy_at(&r.fused, q)))).collect();
    let rows: Vec<AccuracyRow> = RATIOS
        .iter()
        .zip(&by_ratio)
        .map(|(&ratio, &accuracy)| AccuracyRow { variant: "rgb+flow pretrained".into(), ratio, accuracy, n: results[0].fused[0].n })
        .collect();
    let csv = run.dir.join("accuracy_vs_ratio.csv");
    let svg = run.dir.join("accuracy_vs_ratio.svg");
    write_file(&csv, |b| write_accuracy_csv(b, &rows)).unwrap();
    std::fs::write(&svg, accuracy_svg(&rows, "accuracy vs observation ratio (3-seed mean)")).unwrap();
    let mse_rows: Vec<MseRow> = results.iter().flat_map(|r| r.mse.clone()).collect();
    write_file(run.dir.join("head_mse.csv"), |b| write_mse_csv(b, &mse_rows)).unwrap();
    let csv_ok = std::fs::read_to_string(&csv).unwrap().lines().count() == RATIOS.len() + 1;
    let svg_ok = std::fs::read_to_string(&svg).unwrap().matches("<circle").count() == RATIOS.len();
    let (lo, hi) = (by_ratio[0], by_ratio[RATIOS.len() - 1]);
    run.record(
        8,
        "accuracy grows with observation",
        hi >= lo && csv_ok && svg_ok,
        format!(
            "accuracy r=0.2 {lo:.3}, r=0.5 {:.3}, r=1.0 {hi:.3}; gap {:+.3}; wrote {} and {}",
            by_ratio[1],
            hi - lo,
            csv.display(),
            svg.display()
        ),
    );
}

/// Short pipeline whose metrics are compared bit for bit across runs.
fn short_pipeline(clips: &[VideoClip]) -> Vec<u64> {
    let data = prepare(clips, &ModelConfig::default(), &TvL1Params::default()).unwrap();
    let mut model = init_model(ModelConfig::default(), 11).unwrap();
    let (_, pre) = pretrain(&mut model, &data, &TrainConfig { epochs: 2, seed: 11, ..TrainConfig::default() }).unwrap();
    let (_, cls) = train_classifier(&mut model, &data, &TrainConfig { epochs: 2, seed: 11, ..TrainConfig::default() }).unwrap();
    let acc = evaluate_accuracy(&model, &data, &RATIOS, 3, 2, "d").unwrap();
    let mse = evaluate_head_mse(&model, &data, 0.5, 3, "d").unwrap();
    pre.iter()
        .chain(&cls)
        .map(|l| l.loss.total)
        .chain(acc.iter().map(|a| a.accuracy))
        .chain(mse.iter().map(|m| m.mse))
        .map(f64::to_bits)
        .collect()
}

fn determinism_and_persistence(run: &mut Run) {
    let clips = gen_dataset(&SynthConfig { clips_per_class: 2, seed: 5, ..SynthConfig::default() }).unwrap();
    let metrics_equal = short_pipeline(&clips) == short_pipeline(&clips);

    let rgb = &clips[0];
    let flow = VideoClip::new("f", flow_clip(rgb.frames(), &TvL1Params::default()).unwrap(), None).unwrap();
    let clip_bytes_equal = [rgb, &flow].iter().all(|c| {
        let mut first = Vec::new();
        write_clip(c, &mut first).unwrap();
        let back = read_clip(first.as_slice(), &c.id, c.label).unwrap();
        let mut second = Vec::new();
        write_clip(&back, &mut second).unwrap();
        first == second && back.frames() == c.frames()
    });

    let data = prepare(&clips, &ModelConfig::default(), &TvL1Params::default()).unwrap();
    let cfg = TrainConfig { seed: 6, ..TrainConfig::default() };
    let mut unbroken = init_model(ModelConfig::default(), 6).unwrap();
    let mut opt = new_optimizer(&unbroken, &cfg);
    run_epochs(&mut unbroken, &mut opt, &data, Stage::Pretrain, &cfg, 0..3).unwrap();
    let mut first = init_model(ModelConfig::default(), 6).unwrap();
    let mut opt = new_optimizer(&first, &cfg);
    run_epochs(&mut first, &mut opt, &data, Stage::Pretrain, &cfg, 0..1).unwrap();
    let bytes = Checkpoint { params: first.params, state: opt.to_set() }.to_bytes();
    let ck = Checkpoint::read(&mut bytes.as_slice()).unwrap();
    let checkpoint_bytes_equal = ck.to_bytes() == bytes;
    let mut resumed = FlVae::from_params(ModelConfig::default(), ck.params).unwrap();
    let mut opt = AdadeltaState::from_set(&ck.state, &resumed.params, cfg.optimizer).unwrap();
    run_epochs(&mut resumed, &mut opt, &data, Stage::Pretrain, &cfg, 1..3).unwrap();
    let resumed_equal = resumed.params == unbroken.params;

    run.record(
        9,
        "determinism and persistence",
        metrics_equal && clip_bytes_equal && checkpoint_bytes_equal && resumed_equal,
        format!(
            "repeated run metrics bit-identical: {metrics_equal}; clip round trip byte-identical (rgb and flow): \
             {clip_bytes_equal}; checkpoint round trip byte-identical: {checkpoint_bytes_equal}; \
             resumed (1 + 2 epochs) equals unbroken (3 epochs): {resumed_equal}"
        ),
    );
}

fn adadelta_behaviour(run: &mut Run) {
    let single = |x: f64| {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::from_vec(vec![x]));
        p
    };
    let mut first_step_err = 0.0f64;
    for g in [0.5, -3.0, 1e-4, 40.0] {
        let mut p = single(1.0);
        let mut s = AdadeltaState::new(&p, AdadeltaConfig::default());
        adadelta_step(&mut p, &single(g), &mut s).unwrap();
        // E[g²] = 0.05 g², E[Δx²] = 0 before the step
        let expected = 1.0 - (1e-6f64).sqrt() / (0.05 * g * g + 1e-6).sqrt() * g;
        first_step_err = first_step_err.max((p.get("x").unwrap().item() - expected).abs());
    }
    let mut p = single(1.0);
    let mut s = AdadeltaState::new(&p, AdadeltaConfig { rho: 0.95, eps: 1e-6, lr: 1.0 });
    let mut steps = 0;
    while p.get("x").unwrap().item().abs() >= 0.1 && steps < 500 {
        let g = 2.0 * p.get("x").unwrap().item();
        adadelta_step(&mut p, &single(g), &mut s).unwrap();
        steps += 1;
    }
    let x = p.get("x").unwrap().item();
    run.record(
        10,
        "Adadelta",
        first_step_err < 1e-12 && x.abs() < 0.1,
        format!("first-step error {first_step_err:.1e} (limit 1e-12); x^2 from x=1 reaches |x| = {:.4} after {steps} steps (limit 500)", x.abs()),
    );
}

#[test]
fn acceptance() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let mut run = Run { outcomes: Vec::new(), dir };
    let t0 = Instant::now();
    gradient_suite(&mut run);
    oracle_equivalence(&mut run);
    closed_forms(&mut run);
    tv_l1_checks(&mut run);
    comparative_experiment(&mut run);
    determinism_and_persistence(&mut run);
    adadelta_behaviour(&mut run);

    run.outcomes.sort_by_key(|o| o.id);
    let mut summary = String::new();
    for o in &run.outcomes {
        let _ = writeln!(summary, "{} [{:>2}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let passed = run.outcomes.iter().filter(|o| o.pass).count();
    let _ = writeln!(summary, "{passed}/{} criteria passed in {:.0}s", run.outcomes.len(), t0.elapsed().as_secs_f64());
    std::fs::write(run.dir.join("summary.txt"), &summary).unwrap();
    println!("\n{summary}summary written to {}", run.dir.join("summary.txt").display());
    assert_eq!(passed, run.outcomes.len(), "failing criteria:\n{summary}");
}

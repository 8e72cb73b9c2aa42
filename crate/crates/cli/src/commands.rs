use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flvae::data::{gen_dataset, load_clip, load_manifest, save_clip, save_manifest, split_train_test, ManifestRow, SynthConfig, VideoClip};
use flvae::flow::{flow_clip, TvL1Params};
use flvae::gradcheck::suite::{run_suite, OpReport, OPS};
use flvae::model::{Checkpoint, FlVae, Prepared};
use flvae::report::{accuracy_svg, write_accuracy_csv, write_file, write_loss_csv, write_mse_csv};
use flvae::train::{
    evaluate_accuracy, evaluate_head_mse, init_model, prepare, prepare_training, pretrain as run_pretrain,
    train_classifier, EpochLog,
};
use flvae::Tensor;

use crate::error::{at_path, CliError, CliResult};
use crate::manifest::RunManifest;
use crate::settings::{Settings, Split};

fn create_dir(dir: &Path) -> CliResult<()> {
    at_path(std::fs::create_dir_all(dir), dir)
}

fn finish(m: &RunManifest, s: &Settings) -> CliResult<()> {
    let path = m.write(&s.out_dir, s)?;
    println!("manifest: {}", path.display());
    Ok(())
}

pub fn gen_data(s: &Settings) -> CliResult<()> {
    let mut m = RunManifest::start("gen-data");
    let cfg = SynthConfig {
        n_classes: s.classes,
        clips_per_class: s.per_class,
        frames: s.frames,
        height: s.size,
        width: s.size,
        key_frame_fraction: s.key_frame,
        noise_std: s.noise,
        seed: s.seed,
        ..SynthConfig::default()
    };
    let clips = gen_dataset(&cfg)?;
    let clip_dir = s.out_dir.join("clips");
    create_dir(&clip_dir)?;
    let mut rows = Vec::with_capacity(clips.len());
    for c in &clips {
        let rel = format!("clips/{}.vid", c.id);
        let path = s.out_dir.join(&rel);
        at_path(save_clip(c, &path), &path)?;
        rows.push(ManifestRow { clip_id: c.id.clone(), path: rel, label: c.label, n_frames: c.len() });
    }
    let manifest = s.out_dir.join("manifest.csv");
    at_path(save_manifest(&rows, &manifest), &manifest)?;
    println!("wrote {} clips ({} classes, key frame {}) to {}", clips.len(), cfg.n_classes, cfg.key_frame(), clip_dir.display());
    m.artifact("clips", clip_dir);
    m.artifact("manifest", manifest);
    finish(&m, s)
}

/// Clips listed in `<data_dir>/manifest.csv`, with ids and labels from it.
fn load_dataset(dir: &Path) -> CliResult<Vec<VideoClip>> {
    let manifest = dir.join("manifest.csv");
    if !manifest.exists() {
        return Err(CliError::Io(format!("{}: no dataset manifest (run gen-data first)", manifest.display())));
    }
    let rows = at_path(load_manifest(&manifest), &manifest)?;
    rows.iter()
        .map(|r| {
            let path = dir.join(&r.path);
            let mut c = at_path(load_clip(&path), &path)?;
            c.id = r.clip_id.clone();
            c.label = r.label;
            Ok(c)
        })
        .collect()
}

fn select(s: &Settings, clips: &[VideoClip], split: Split) -> Vec<VideoClip> {
    let (train, test) = split_train_test(clips, s.train_fraction, s.split_seed);
    match split {
        Split::Train => train,
        Split::Test => test,
        Split::All => clips.to_vec(),
    }
}

fn class_count(clips: &[VideoClip]) -> CliResult<usize> {
    clips
        .iter()
        .filter_map(|c| c.label)
        .max()
        .map(|m| m + 1)
        .ok_or_else(|| CliError::Usage("dataset has no labelled clips".into()))
}

/// Flow magnitudes of all frame pairs side by side, scaled so the clip's
/// largest displacement is white.
fn magnitude_strip(flow: &Tensor) -> image::GrayImage {
    let s = flow.shape();
    let (t, h, w) = (s[0], s[1], s[2]);
    let d = flow.data();
    let mag = |k: usize, y: usize, x: usize| {
        let i = ((k * h + y) * w + x) * 2;
        d[i].hypot(d[i + 1])
    };
    let peak = (0..t * h * w).map(|i| d[2 * i].hypot(d[2 * i + 1])).fold(0.0f64, f64::max).max(1e-9);
    image::GrayImage::from_fn((t * w) as u32, h as u32, |x, y| {
        let (k, x) = (x as usize / w, x as usize % w);
        image::Luma([(255.0 * mag(k, y as usize, x) / peak).round() as u8])
    })
}

pub fn flow(s: &Settings, png: bool) -> CliResult<()> {
    let mut m = RunManifest::start("flow");
    let clips = load_dataset(&s.data_dir)?;
    let dir = s.out_dir.join("flow");
    create_dir(&dir)?;
    let params = TvL1Params::default();
    let mut rows = Vec::with_capacity(clips.len());
    let mut total = 0.0;
    for c in &clips {
        let f = flow_clip(c.frames(), &params)?;
        let n = f.len() / 2;
        let mean = (0..n).map(|i| f.data()[2 * i].hypot(f.data()[2 * i + 1])).sum::<f64>() / n as f64;
        total += mean;
        let fc = VideoClip::new(c.id.clone(), f, c.label)?;
        let rel = format!("{}.vid", c.id);
        at_path(save_clip(&fc, dir.join(&rel)), &dir.join(&rel))?;
        if png {
            let p = dir.join(format!("{}.png", c.id));
            at_path(magnitude_strip(fc.frames()).save(&p), &p)?;
        }
        rows.push(ManifestRow { clip_id: c.id.clone(), path: rel, label: c.label, n_frames: fc.len() });
    }
    let manifest = dir.join("manifest.csv");
    at_path(save_manifest(&rows, &manifest), &manifest)?;
    println!("flow for {} clips in {} (mean |flow| {:.4} px)", clips.len(), dir.display(), total / clips.len().max(1) as f64);
    m.artifact("flow", dir);
    m.artifact("manifest", manifest);
    finish(&m, s)
}

fn training_data(s: &Settings) -> CliResult<(Vec<Prepared>, usize)> {
    let clips = load_dataset(&s.data_dir)?;
    let n_classes = class_count(&clips)?;
    let train = select(s, &clips, Split::Train);
    let data = prepare_training(&train, &s.model_config(n_classes), &TvL1Params::default(), s.multiscale, s.seed)?;
    Ok((data, n_classes))
}

fn save_run(s: &Settings, m: &mut RunManifest, stem: &str, ck: &Checkpoint, logs: &[EpochLog]) -> CliResult<()> {
    let ck_path = s.out_dir.join(format!("{stem}.ckpt"));
    at_path(ck.save(&ck_path), &ck_path)?;
    let loss_path = s.out_dir.join(format!("{stem}_loss.csv"));
    at_path(write_file(&loss_path, |b| write_loss_csv(b, logs)), &loss_path)?;
    if let Some(last) = logs.last() {
        println!("{stem}: {} epochs, final loss {:.5}", logs.len(), last.loss.total);
    }
    println!("checkpoint: {}", ck_path.display());
    m.artifact("checkpoint", ck_path);
    m.artifact("loss", loss_path);
    Ok(())
}

pub fn pretrain(s: &Settings) -> CliResult<()> {
    let mut m = RunManifest::start("pretrain");
    create_dir(&s.out_dir)?;
    let (data, n_classes) = training_data(s)?;
    let mut model = init_model(s.model_config(n_classes), s.seed)?;
    let (opt, logs) = run_pretrain(&mut model, &data, &s.train_config())?;
    save_run(s, &mut m, "pretrain", &Checkpoint { params: model.params, state: opt.to_set() }, &logs)?;
    finish(&m, s)
}

fn load_model(s: &Settings, path: &Path, n_classes: usize) -> CliResult<FlVae> {
    if !path.exists() {
        return Err(CliError::Io(format!("{}: checkpoint not found", path.display())));
    }
    let ck = at_path(Checkpoint::load(path), path)?;
    Ok(FlVae::from_params(s.model_config(n_classes), ck.params)?)
}

pub fn train(s: &Settings, checkpoint: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::start("train");
    create_dir(&s.out_dir)?;
    let (data, n_classes) = training_data(s)?;
    let mut model = match checkpoint {
        Some(p) => {
            m.artifact("pretrained", p);
            load_model(s, p, n_classes)?
        }
        None => init_model(s.model_config(n_classes), s.seed)?,
    };
    let (opt, logs) = train_classifier(&mut model, &data, &s.train_config())?;
    save_run(s, &mut m, "train", &Checkpoint { params: model.params, state: opt.to_set() }, &logs)?;
    finish(&m, s)
}

/// `name=path` or a bare path named after its file stem.
fn parse_variant(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}

pub fn eval(s: &Settings, checkpoints: &[String], with_mse: bool) -> CliResult<()> {
    let mut m = RunManifest::start("eval");
    create_dir(&s.out_dir)?;
    let clips = load_dataset(&s.data_dir)?;
    let n_classes = class_count(&clips)?;
    let clips = select(s, &clips, s.eval_split);
    if clips.is_empty() {
        return Err(CliError::Usage(format!("the {} split is empty", s.eval_split)));
    }
    let data = prepare(&clips, &s.model_config(n_classes), &TvL1Params::default())?;

    let (mut acc, mut mse) = (Vec::new(), Vec::new());
    for spec in checkpoints {
        let (name, path) = parse_variant(spec);
        let model = load_model(s, &path, n_classes)?;
        m.artifact(format!("model.{name}"), &path);
        acc.extend(evaluate_accuracy(&model, &data, &s.ratios, s.eval_seed, s.draws, &name)?);
        if with_mse {
            mse.extend(evaluate_head_mse(&model, &data, s.mse_ratio, s.eval_seed, &name)?);
        }
    }

    let mut table = format!("{:<20} {:>6} {:>9} {:>5}\n", "variant", "ratio", "accuracy", "n");
    for r in &acc {
        let _ = writeln!(table, "{:<20} {:>6.2} {:>9.4} {:>5}", r.variant, r.ratio, r.accuracy, r.n);
    }
    print!("{table}");
    let csv = s.out_dir.join("accuracy.csv");
    at_path(write_file(&csv, |b| write_accuracy_csv(b, &acc)), &csv)?;
    let svg = s.out_dir.join("accuracy.svg");
    at_path(std::fs::write(&svg, accuracy_svg(&acc, "accuracy vs observation ratio")), &svg)?;
    m.artifact("accuracy_csv", csv);
    m.artifact("accuracy_svg", svg);
    if with_mse {
        for r in &mse {
            println!("{:<20} head {:<6} mse {:.6} (r={}, n={})", r.variant, r.head.name(), r.mse, r.ratio, r.n);
        }
        let p = s.out_dir.join("mse.csv");
        at_path(write_file(&p, |b| write_mse_csv(b, &mse)), &p)?;
        m.artifact("mse_csv", p);
    }
    finish(&m, s)
}

fn report_table(reports: &[OpReport]) -> String {
    let mut t = format!(
        "{:<18} {:>5} {:>12} {:>6} {:>8} {:>7}  result\n",
        "op", "seeds", "max rel err", "worst", "checked", "skipped"
    );
    for r in reports {
        let _ = writeln!(
            t,
            "{:<18} {:>5} {:>12.3e} {:>6} {:>8} {:>7}  {}",
            r.op,
            r.seeds,
            r.max_rel_err,
            r.worst_seed,
            r.checked,
            r.skipped,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    t
}

pub fn gradcheck(
    s: &Settings,
    ops: &[String],
    seeds: usize,
    composite_seeds: usize,
    tolerance: f64,
    corrupt: Option<&str>,
) -> CliResult<()> {
    let mut m = RunManifest::start("gradcheck");
    for op in ops.iter().map(String::as_str).chain(corrupt) {
        if !OPS.contains(&op) {
            return Err(CliError::Usage(format!("unknown op {op:?}; known ops: {}", OPS.join(", "))));
        }
    }
    let selected: Vec<&str> = if ops.is_empty() {
        OPS.to_vec()
    } else {
        OPS.iter().copied().filter(|o| ops.iter().any(|x| x == o)).collect()
    };
    let (composite, elementary): (Vec<&str>, Vec<&str>) = selected.into_iter().partition(|o| *o == "composite");
    let mut reports = run_suite(&elementary, seeds, tolerance, corrupt)?;
    if !composite.is_empty() && composite_seeds > 0 {
        reports.extend(run_suite(&composite, composite_seeds, tolerance, corrupt)?);
    }
    let table = report_table(&reports);
    print!("{table}");
    create_dir(&s.out_dir)?;
    let path = s.out_dir.join("gradcheck.txt");
    at_path(std::fs::write(&path, &table), &path)?;
    m.artifact("report", path);
    finish(&m, s)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed (tolerance {tolerance:e})", reports.len());
        Ok(())
    } else {
        Err(CliError::Verification(format!("gradient check failed for {}", failed.join(", "))))
    }
}

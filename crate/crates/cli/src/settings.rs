//! Resolved run settings. Defaults are overridden by a `key = value` config
//! file, which is overridden by command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use flvae::model::{EncoderMode, HeadKind, Lambdas, ModelConfig};
use flvae::train::TrainConfig;

use crate::error::{at_path, CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,

    pub classes: usize,
    pub per_class: usize,
    pub frames: usize,
    pub size: usize,
    pub key_frame: f64,
    pub noise: f64,

    pub encoder: EncoderMode,
    pub heads: Vec<HeadKind>,
    pub keep_prob: f64,
    pub classifier_sigmoid: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub clip_norm: f64,
    pub train_ratios: Vec<f64>,
    pub freeze_encoder: bool,
    pub multiscale: bool,
    pub train_fraction: f64,
    pub split_seed: u64,

    pub ratios: Vec<f64>,
    pub eval_split: Split,
    pub eval_seed: u64,
    pub draws: usize,
    pub mse_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(format!("unknown split {s:?} (train, test, all)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::All => "all",
        })
    }
}

impl Default for Settings {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let lambdas = Lambdas::default();
        Settings {
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            classes: 6,
            per_class: 10,
            frames: 16,
            size: 48,
            key_frame: 0.5,
            noise: 0.02,
            encoder: model.encoder.mode,
            heads: model.heads,
            keep_prob: model.encoder.keep_prob,
            classifier_sigmoid: model.classifier_sigmoid,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lambda1: lambdas.l1,
            lambda2: lambdas.l2,
            lambda3: lambdas.l3,
            clip_norm: train.clip_norm.unwrap_or(0.0),
            train_ratios: train.train_ratios,
            freeze_encoder: false,
            multiscale: false,
            train_fraction: 0.75,
            split_seed: 0,
            ratios: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            eval_split: Split::Test,
            eval_seed: 9,
            draws: 1,
            mse_ratio: 0.5,
        }
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| CliError::Usage(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!("{key} = {value:?}: expected true or false"))),
    }
}

impl Settings {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "classes" => self.classes = parse(key, v)?,
            "per_class" => self.per_class = parse(key, v)?,
            "frames" => self.frames = parse(key, v)?,
            "size" => self.size = parse(key, v)?,
            "key_frame" => self.key_frame = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "encoder" => self.encoder = parse(key, v)?,
            "heads" => self.heads = HeadKind::parse_set(v).map_err(CliError::from)?,
            "keep_prob" => self.keep_prob = parse(key, v)?,
            "classifier_sigmoid" => self.classifier_sigmoid = parse_bool(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lambda1" => self.lambda1 = parse(key, v)?,
            "lambda2" => self.lambda2 = parse(key, v)?,
            "lambda3" => self.lambda3 = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "train_ratios" => self.train_ratios = parse_list(v).map_err(|e| CliError::Usage(format!("{key}: {e}")))?,
            "freeze_encoder" => self.freeze_encoder = parse_bool(key, v)?,
            "multiscale" => self.multiscale = parse_bool(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "ratios" => self.ratios = parse_list(v).map_err(|e| CliError::Usage(format!("{key}: {e}")))?,
            "eval_split" => self.eval_split = parse(key, v)?,
            "eval_seed" => self.eval_seed = parse(key, v)?,
            "draws" => self.draws = parse(key, v)?,
            "mse_ratio" => self.mse_ratio = parse(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("classes", self.classes.to_string()),
            ("per_class", self.per_class.to_string()),
            ("frames", self.frames.to_string()),
            ("size", self.size.to_string()),
            ("key_frame", self.key_frame.to_string()),
            ("noise", self.noise.to_string()),
            ("encoder", self.encoder.to_string()),
            ("heads", self.heads.iter().map(|h| h.name()).collect::<Vec<_>>().join(",")),
            ("keep_prob", self.keep_prob.to_string()),
            ("classifier_sigmoid", self.classifier_sigmoid.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("lambda3", self.lambda3.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("train_ratios", join(&self.train_ratios)),
            ("freeze_encoder", self.freeze_encoder.to_string()),
            ("multiscale", self.multiscale.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("ratios", join(&self.ratios)),
            ("eval_split", self.eval_split.to_string()),
            ("eval_seed", self.eval_seed.to_string()),
            ("draws", self.draws.to_string()),
            ("mse_ratio", self.mse_ratio.to_string()),
        ]
    }

    /// Applies a config file. Lines are `key = value`; `#` starts a
    /// comment. Keys may carry a `config.` prefix, and `run.*` and
    /// `artifact.*` lines are skipped, so a run manifest is itself a valid
    /// config file.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = at_path(std::fs::read_to_string(path), path)?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            let key = key.trim();
            if key.starts_with("run.") || key.starts_with("artifact.") {
                continue;
            }
            let key = key.strip_prefix("config.").unwrap_or(key);
            self.set(key, value).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn model_config(&self, n_classes: usize) -> ModelConfig {
        let mut c = ModelConfig::default();
        c.encoder.mode = self.encoder;
        c.encoder.keep_prob = self.keep_prob;
        c.heads = self.heads.clone();
        c.n_classes = n_classes;
        c.classifier_sigmoid = self.classifier_sigmoid;
        c
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lambdas: Lambdas { l1: self.lambda1, l2: self.lambda2, l3: self.lambda3 },
            freeze_encoder: self.freeze_encoder,
            seed: self.seed,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            train_ratios: self.train_ratios.clone(),
            ..TrainConfig::default()
        }
    }
}

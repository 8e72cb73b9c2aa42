//! `flvae`: synthetic data, optical flow, two-stage training, evaluation
//! reports and gradient checks.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O
//! error.

mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flvae::model::EncoderMode;

use error::CliResult;
use settings::{Settings, Split};

#[derive(Parser)]
#[command(name = "flvae", version, about = "Early action prediction with a future-looking variational encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic action dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        /// Frame height and width in pixels.
        #[arg(long)]
        size: Option<usize>,
        /// Fraction of the clip before class behaviours diverge.
        #[arg(long)]
        key_frame: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Compute TV-L1 flow for every clip of a dataset.
    Flow {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Also write a flow-magnitude strip per clip as PNG.
        #[arg(long)]
        png: bool,
    },
    /// Train encoder and decoder heads (first stage).
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the classifier, from a pretrained checkpoint or from scratch.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Pretrained checkpoint to start from.
        #[arg(long, conflicts_with = "no_pretrain", required_unless_present = "no_pretrain")]
        checkpoint: Option<PathBuf>,
        /// Start from freshly initialized weights.
        #[arg(long)]
        no_pretrain: bool,
        #[arg(long)]
        freeze_encoder: bool,
        /// Observation ratios sampled during classifier training.
        #[arg(long)]
        train_ratios: Option<String>,
    },
    /// Accuracy against observation ratio and per-head reconstruction error.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint to evaluate, optionally `name=path`; repeatable.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<String>,
        /// Comma-separated observation ratios.
        #[arg(long)]
        ratios: Option<String>,
        /// Also report per-head reconstruction MSE.
        #[arg(long)]
        mse: bool,
        #[arg(long)]
        mse_ratio: Option<f64>,
        /// Which part of the dataset to evaluate on.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        eval_seed: Option<u64>,
        /// Latent samples averaged per clip.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Finite-difference gradient checks of every differentiable op.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Restrict to these ops; repeatable.
        #[arg(long = "op")]
        ops: Vec<String>,
        /// Seeds per elementary op.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Seeds for the full composite loss.
        #[arg(long, default_value_t = 5)]
        composite_seeds: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Perturb this op's analytic gradient to exercise the detector.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Fraction of each class used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    /// `rgb` or `rgb+flow`.
    #[arg(long)]
    encoder: Option<EncoderMode>,
    /// Decoder heads as a comma set of short, long, past, flow.
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    keep_prob: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Add one random multi-scale crop of each training clip.
    #[arg(long)]
    multiscale: bool,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl Common {
    fn resolve(&self) -> CliResult<Settings> {
        let mut s = Settings::default();
        if let Some(p) = &self.config {
            s.apply_file(p)?;
        }
        set(&mut s.seed, self.seed);
        set(&mut s.out_dir, self.out_dir.clone());
        Ok(s)
    }
}

impl DataArgs {
    fn apply(&self, s: &mut Settings) {
        set(&mut s.data_dir, self.data_dir.clone());
        set(&mut s.train_fraction, self.train_fraction);
        set(&mut s.split_seed, self.split_seed);
    }
}

/// Applies a list-valued flag through the same parser as config files.
fn set_text(s: &mut Settings, key: &str, flag: &Option<String>) -> CliResult<()> {
    match flag {
        Some(v) => s.set(key, v),
        None => Ok(()),
    }
}

impl ModelArgs {
    fn apply(&self, s: &mut Settings) -> CliResult<()> {
        set(&mut s.encoder, self.encoder);
        set(&mut s.keep_prob, self.keep_prob);
        set_text(s, "heads", &self.heads)
    }
}

impl TrainArgs {
    fn apply(&self, s: &mut Settings) {
        set(&mut s.epochs, self.epochs);
        set(&mut s.batch_size, self.batch_size);
        set(&mut s.lambda1, self.lambda1);
        set(&mut s.lambda2, self.lambda2);
        set(&mut s.lambda3, self.lambda3);
        s.multiscale |= self.multiscale;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { common, classes, per_class, frames, size, key_frame, noise } => {
            let mut s = common.resolve()?;
            set(&mut s.classes, classes);
            set(&mut s.per_class, per_class);
            set(&mut s.frames, frames);
            set(&mut s.size, size);
            set(&mut s.key_frame, key_frame);
            set(&mut s.noise, noise);
            commands::gen_data(&s)
        }
        Command::Flow { common, data, png } => {
            let mut s = common.resolve()?;
            data.apply(&mut s);
            commands::flow(&s, png)
        }
        Command::Pretrain { common, data, model, train } => {
            let mut s = common.resolve()?;
            data.apply(&mut s);
            model.apply(&mut s)?;
            train.apply(&mut s);
            commands::pretrain(&s)
        }
        Command::Train { common, data, model, train, checkpoint, no_pretrain: _, freeze_encoder, train_ratios } => {
            let mut s = common.resolve()?;
            data.apply(&mut s);
            model.apply(&mut s)?;
            train.apply(&mut s);
            s.freeze_encoder |= freeze_encoder;
            set_text(&mut s, "train_ratios", &train_ratios)?;
            commands::train(&s, checkpoint.as_deref())
        }
        Command::Eval { common, data, checkpoints, ratios, mse, mse_ratio, split, eval_seed, draws } => {
            let mut s = common.resolve()?;
            data.apply(&mut s);
            set_text(&mut s, "ratios", &ratios)?;
            set(&mut s.mse_ratio, mse_ratio);
            set(&mut s.eval_split, split);
            set(&mut s.eval_seed, eval_seed);
            set(&mut s.draws, draws);
            commands::eval(&s, &checkpoints, mse)
        }
        Command::Gradcheck { common, ops, seeds, composite_seeds, tolerance, corrupt } => {
            let s = common.resolve()?;
            commands::gradcheck(&s, &ops, seeds, composite_seeds, tolerance, corrupt.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flvae: {e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use flvae::model::HeadKind;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "epochs = 7\nbatch_size = 2\nseed = 5\n").unwrap();
        let cli = Cli::try_parse_from([
            "flvae", "pretrain", "--config", cfg.to_str().unwrap(), "--epochs", "3", "--heads", "long,short",
        ])
        .unwrap();
        let Command::Pretrain { common, data, model, train } = cli.command else { panic!() };
        let mut s = common.resolve().unwrap();
        data.apply(&mut s);
        model.apply(&mut s).unwrap();
        train.apply(&mut s);
        assert_eq!((s.epochs, s.batch_size, s.seed), (3, 2, 5));
        assert_eq!(s.heads, vec![HeadKind::ShortTermRgb, HeadKind::LongTermRgb]);
        assert_eq!(s.lambda2, Settings::default().lambda2);
        let cli = Cli::try_parse_from(["flvae", "pretrain", "--heads", "short,sideways"]).unwrap();
        let Command::Pretrain { model, .. } = cli.command else { panic!() };
        assert!(matches!(model.apply(&mut Settings::default()), Err(error::CliError::Usage(_))));
    }

    #[test]
    fn train_needs_exactly_one_starting_point() {
        assert!(Cli::try_parse_from(["flvae", "train"]).is_err());
        assert!(Cli::try_parse_from(["flvae", "train", "--no-pretrain", "--checkpoint", "a"]).is_err());
        assert!(Cli::try_parse_from(["flvae", "train", "--no-pretrain"]).is_ok());
    }
}

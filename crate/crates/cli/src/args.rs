use std::num::NonZeroUsize;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ondetect_core::decision::{DecisionMode, DEFAULT_THRESHOLD_PERCENTILE};
use ondetect_core::loss::LossVariant;
use ondetect_core::model::HeadMode;
use ondetect_core::profiles::{self, Profile};
use ondetect_core::{prepare, DatasetDescriptor, OnlineConfig, Prepared};

#[derive(Debug, Parser)]
#[command(name = "ondetect", version, about = "Online intrusion detection with a contrastive autoencoder")]
pub struct Cli {
    /// Log filter, e.g. `info` or `debug`. Logs go to stderr as JSON lines.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infer the schema and write encoded train/test sets.
    Preprocess(PreprocessArgs),
    /// Initial training on a labelled subset, then online adaptation.
    RunOnline(RunArgs),
    /// Fully supervised training on the whole training set.
    Offline(RunArgs),
    /// Score a test set with a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Print the bundled dataset profiles.
    Profiles,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Bundled dataset profile: file layout and default hyperparameters.
    #[arg(long, value_parser = ["nsl-kdd", "unsw-nb15"])]
    pub dataset: Option<String>,
    /// Dataset descriptor JSON; overrides the profile's file layout.
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    /// Directory holding the profile's train and test files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output directory of `preprocess`; used instead of raw files.
    #[arg(long, conflicts_with_all = ["descriptor", "data_dir", "train", "test"])]
    pub prepared: Option<PathBuf>,
}

impl InputArgs {
    pub fn profile(&self) -> Result<Option<Profile>> {
        self.dataset
            .as_deref()
            .map(profiles::load)
            .transpose()
            .map_err(Into::into)
    }

    pub fn descriptor(&self, profile: Option<&Profile>) -> Result<DatasetDescriptor> {
        match (&self.descriptor, profile) {
            (Some(path), _) => DatasetDescriptor::load(path)
                .with_context(|| format!("reading descriptor {}", path.display())),
            (None, Some(p)) => Ok(p.descriptor.clone()),
            (None, None) => bail!("pass --dataset or --descriptor to describe the input files"),
        }
    }

    fn file(&self, explicit: &Option<PathBuf>, name: Option<&str>, flag: &str) -> Result<PathBuf> {
        match (explicit, &self.data_dir, name) {
            (Some(p), _, _) => Ok(p.clone()),
            (None, Some(dir), Some(name)) => Ok(dir.join(name)),
            _ => bail!("pass --{flag}, or --data-dir together with --dataset"),
        }
    }

    pub fn raw_paths(&self, profile: Option<&Profile>) -> Result<(PathBuf, PathBuf)> {
        Ok((
            self.file(&self.train, profile.map(|p| p.train_file.as_str()), "train")?,
            self.file(&self.test, profile.map(|p| p.test_file.as_str()), "test")?,
        ))
    }

    pub fn load(&self, profile: Option<&Profile>) -> Result<Prepared> {
        if let Some(dir) = &self.prepared {
            return Prepared::load(dir)
                .with_context(|| format!("loading preprocessed data from {}", dir.display()));
        }
        let desc = self.descriptor(profile)?;
        let (train, test) = self.raw_paths(profile)?;
        prepare(&desc, &train, &test).context("preprocessing raw input")
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, env = "ONDETECT_OUT", default_value = "ondetect-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Crc,
    Infonce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadsArg {
    Both,
    Encoder,
    Decoder,
}

/// `gaussian` or `fixed:P` with P a percentile.
pub fn parse_decision(s: &str) -> std::result::Result<DecisionMode, String> {
    match s {
        "gaussian" => Ok(DecisionMode::Gaussian),
        "fixed" => Ok(DecisionMode::FixedThreshold {
            percentile: DEFAULT_THRESHOLD_PERCENTILE,
        }),
        other => {
            let p = other
                .strip_prefix("fixed:")
                .ok_or_else(|| format!("expected `gaussian` or `fixed:P`, got {other:?}"))?;
            let percentile: f64 = p
                .parse()
                .map_err(|_| format!("bad percentile {p:?}"))?;
            if !(0.0..=100.0).contains(&percentile) {
                return Err(format!("percentile must lie in [0, 100], got {percentile}"));
            }
            Ok(DecisionMode::FixedThreshold { percentile })
        }
    }
}

/// Overrides on top of the profile defaults.
#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epoch0: Option<usize>,
    #[arg(long)]
    pub epoch1: Option<usize>,
    /// Stream chunk size m.
    #[arg(long)]
    pub chunk: Option<NonZeroUsize>,
    /// Fraction of pseudo-labels flipped each round.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub initial_fraction: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossArg::Crc)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = HeadsArg::Both)]
    pub heads: HeadsArg,
    /// `gaussian` or `fixed:P`.
    #[arg(long, value_parser = parse_decision, default_value = "gaussian")]
    pub decision: DecisionMode,
    /// Encoder layer widths; the decoder mirrors them.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Keep both mixture weights at 0.5.
    #[arg(long)]
    pub pin_weights: bool,
}

impl HyperArgs {
    /// Config for one seed, plus the initial fraction.
    pub fn config(&self, profile: Option<&Profile>, seed: u64) -> Result<(OnlineConfig, f64)> {
        // Without a profile the NSL-KDD schedule is the fallback.
        let base = match profile {
            Some(p) => p.clone(),
            None => profiles::load("nsl-kdd")?,
        };
        let mut cfg = base.online_config(seed);
        if let Some(v) = self.epoch0 {
            cfg.epoch_0 = v;
        }
        if let Some(v) = self.epoch1 {
            cfg.epoch_1 = v;
        }
        if let Some(v) = self.chunk {
            cfg.chunk_size = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = &self.widths {
            cfg.encoder_widths = v.clone();
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.temperature {
            cfg.loss.temperature = v;
        }
        cfg.loss.variant = match self.loss {
            LossArg::Crc => LossVariant::Crc,
            LossArg::Infonce => LossVariant::InfoNce,
        };
        cfg.heads = match self.heads {
            HeadsArg::Both => HeadMode::Both,
            HeadsArg::Encoder => HeadMode::EncoderOnly,
            HeadsArg::Decoder => HeadMode::DecoderOnly,
        };
        cfg.decision = self.decision;
        cfg.pin_mixture_weights = self.pin_weights;
        cfg.validate()?;
        Ok((cfg, self.initial_fraction.unwrap_or(base.initial_fraction)))
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory; defaults to $ONDETECT_OUT.
    #[arg(long, env = "ONDETECT_OUT", default_value = "ondetect-out")]
    pub out: PathBuf,
    /// Repeat with seeds seed, seed+1, ... and report mean and spread.
    #[arg(long, default_value_t = NonZeroUsize::MIN)]
    pub runs: NonZeroUsize,
    /// Train on the full labelled training set instead of streaming.
    #[arg(long)]
    pub offline: bool,
    /// Write a resumable snapshot after every round.
    #[arg(long)]
    pub snapshot_every_round: bool,
    /// Continue an interrupted run from a snapshot file.
    #[arg(long, conflicts_with_all = ["offline", "runs"])]
    pub resume: Option<PathBuf>,
    /// Fail with exit code 2 unless mean accuracy (percent) is within
    /// --tolerance of this value.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// As --target-accuracy, for F1.
    #[arg(long)]
    pub target_f1: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw test file, read with --dataset or --descriptor.
    #[arg(long, required_unless_present = "prepared")]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = ["nsl-kdd", "unsw-nb15"])]
    pub dataset: Option<String>,
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    /// Output directory of `preprocess`; its test set is scored.
    #[arg(long, conflicts_with = "test")]
    pub prepared: Option<PathBuf>,
    /// Add per-family seen/unseen recall.
    #[arg(long)]
    pub zero_day: bool,
    #[arg(long, default_value = "markdown", value_parser = ["json", "csv", "markdown"])]
    pub format: String,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

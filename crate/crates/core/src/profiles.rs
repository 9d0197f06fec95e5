//! Dataset-keyed defaults: file layout descriptors and the hyperparameters
//! used to reproduce the published runs.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetDescriptor;
use crate::decision::DecisionMode;
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant};
use crate::model::{Activation, HeadMode, TrainConfig};
use crate::online::OnlineConfig;

const PROFILES_JSON: &str = include_str!("../profiles/profiles.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub train_file: String,
    pub test_file: String,
    pub initial_fraction: f64,
    pub epoch_0: usize,
    pub epoch_1: usize,
    pub chunk_size: NonZeroUsize,
    pub lambda: f64,
    pub encoder_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub descriptor: DatasetDescriptor,
}

impl Profile {
    pub fn online_config(&self, seed: u64) -> OnlineConfig {
        OnlineConfig {
            epoch_0: self.epoch_0,
            epoch_1: self.epoch_1,
            chunk_size: self.chunk_size,
            lambda: self.lambda,
            seed,
            loss: LossConfig {
                temperature: self.temperature,
                variant: LossVariant::Crc,
            },
            heads: HeadMode::Both,
            decision: DecisionMode::Gaussian,
            train: TrainConfig {
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                seed,
            },
            encoder_widths: self.encoder_widths.clone(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
            pin_mixture_weights: false,
        }
    }
}

pub fn builtin() -> BTreeMap<String, Profile> {
    serde_json::from_str(PROFILES_JSON).expect("bundled profiles parse")
}

pub fn load(name: &str) -> Result<Profile> {
    let mut all = builtin();
    let known: Vec<String> = all.keys().cloned().collect();
    all.remove(name).ok_or_else(|| {
        Error::Config(format!("unknown dataset profile {name:?}; known: {known:?}"))
    })
}

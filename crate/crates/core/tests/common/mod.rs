#![allow(dead_code)]

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

use ondetect_core::dataset::{encode_all, infer_schema, RawRecord, SchemaHints};
use ondetect_core::decision::DecisionMode;
use ondetect_core::loss::{LossConfig, LossVariant};
use ondetect_core::model::{Activation, HeadMode, TrainConfig};
use ondetect_core::{Dataset, OnlineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FEATURES: usize = 8;

fn family(attack: &str) -> &'static str {
    match attack {
        "alpha" | "gamma" => "FamA",
        _ => "FamB",
    }
}

/// Flow-like records: a protocol column, a byte count and eight continuous
/// features. Attack types shift the feature means; `gamma` only appears when
/// `with_unseen` is set.
pub fn records(n: usize, seed: u64, with_unseen: bool) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.08).unwrap();
    let protos = ["tcp", "udp", "icmp"];
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let label = match (u, with_unseen) {
                (u, _) if u < 0.5 => "normal",
                (u, false) if u < 0.75 => "alpha",
                (_, false) => "beta",
                (u, true) if u < 0.7 => "alpha",
                (u, true) if u < 0.85 => "beta",
                _ => "gamma",
            };
            let centre: [f64; FEATURES] = match label {
                "normal" => [0.3, 0.3, 0.3, 0.3, 0.7, 0.7, 0.7, 0.7],
                "alpha" => [0.8, 0.7, 0.2, 0.1, 0.2, 0.3, 0.9, 0.6],
                "beta" => [0.1, 0.9, 0.8, 0.7, 0.1, 0.2, 0.3, 0.9],
                _ => [0.7, 0.8, 0.1, 0.2, 0.3, 0.2, 0.8, 0.7],
            };
            let proto = if label == "normal" {
                protos[rng.random_range(0..2)]
            } else {
                protos[rng.random_range(0..3)]
            };
            let bytes: u32 = if label == "normal" {
                rng.random_range(100..2000)
            } else {
                rng.random_range(0..20000)
            };
            let mut values = vec![proto.to_string(), bytes.to_string()];
            values.extend(centre.iter().map(|c| format!("{:.6}", c + noise.sample(&mut rng))));
            RawRecord {
                values,
                category_text: (label != "normal").then(|| family(label).to_string()),
                label_text: label.to_string(),
            }
        })
        .collect()
}

pub fn column_names() -> Vec<String> {
    let mut names = vec!["proto".to_string(), "bytes".to_string()];
    names.extend((0..FEATURES).map(|i| format!("f{i}")));
    names
}

/// Train and test sets encoded under a schema fitted on the train records.
pub fn synthetic(n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    let train = records(n_train, seed, false);
    let test = records(n_test, seed.wrapping_add(1_000), true);
    let hints = SchemaHints {
        column_names: column_names(),
        declared_kinds: BTreeMap::new(),
        normal_label: "normal".into(),
    };
    let schema = Arc::new(infer_schema(&train, &hints).unwrap());
    (
        encode_all(&train, schema.clone()).unwrap(),
        encode_all(&test, schema).unwrap(),
    )
}

/// Small network and short schedule for fast end-to-end runs.
pub fn mini_config(seed: u64) -> OnlineConfig {
    OnlineConfig {
        epoch_0: 3,
        epoch_1: 1,
        chunk_size: NonZeroUsize::new(100).unwrap(),
        lambda: 0.2,
        seed,
        loss: LossConfig {
            temperature: 0.1,
            variant: LossVariant::Crc,
        },
        heads: HeadMode::Both,
        decision: DecisionMode::Gaussian,
        train: TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            seed,
        },
        encoder_widths: vec![8, 4],
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
        pin_mixture_weights: false,
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use cfx_core::classifier::ClassifierConfig;
use cfx_core::{DatasetSchema, RawTable, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_SCHEMA: &str = r#"{
  "features": [
    {"name": "age", "kind": "continuous"},
    {"name": "hours", "kind": "continuous"},
    {"name": "level", "kind": "categorical", "ordinal_ranks": ["low", "mid", "high"]},
    {"name": "color", "kind": "categorical"},
    {"name": "group", "kind": "binary", "immutable": true}
  ],
  "target": {"name": "y", "positive": "1"},
  "constraints": [
    {"type": "unary", "feature": "age"},
    {"type": "binary", "cause_feature": "level", "effect_feature": "age", "c2": 0.1}
  ]
}"#;

pub fn synth_schema() -> DatasetSchema {
    DatasetSchema::from_json(SYNTH_SCHEMA).unwrap()
}

/// Rows whose label depends on age, hours and level.
pub fn synth_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ["low", "mid", "high"];
    let colors = ["red", "green", "blue"];
    let mut s = String::from("age,hours,level,color,group,y\n");
    for _ in 0..n {
        let age: u32 = rng.random_range(18..70);
        let hours: u32 = rng.random_range(10..60);
        let level = rng.random_range(0..3);
        let color = colors[rng.random_range(0..3)];
        let group = if rng.random::<bool>() { "a" } else { "b" };
        let score = 0.05 * age as f64 + 0.04 * hours as f64 + 1.2 * level as f64 + rng.random::<f64>();
        let y = u8::from(score > 5.0);
        s.push_str(&format!("{age},{hours},{},{color},{group},{y}\n", levels[level]));
    }
    s
}

pub fn synth_table(n: usize, seed: u64) -> RawTable {
    RawTable::from_reader(synth_csv(n, seed).as_bytes()).unwrap()
}

/// A configuration that trains in well under a second.
pub fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 64,
        epochs: 4,
        classifier: ClassifierConfig {
            hidden: 16,
            epochs: 5,
            batch_size: 64,
            learning_rate: 0.01,
        },
        seed,
        ..TrainConfig::default()
    }
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

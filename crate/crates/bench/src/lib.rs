//! Shared inputs for the benchmarks in `benches/`.

use cfx_core::classifier::ClassifierConfig;
use cfx_core::nn::Matrix;
use cfx_core::{DatasetSchema, RawTable, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCHEMA: &str = r#"{
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

pub fn schema() -> DatasetSchema {
    DatasetSchema::from_json(SCHEMA).expect("valid schema")
}

pub fn table(n: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ["low", "mid", "high"];
    let colors = ["red", "green", "blue"];
    let mut csv = String::from("age,hours,level,color,group,y\n");
    for _ in 0..n {
        let age: u32 = rng.random_range(18..70);
        let hours: u32 = rng.random_range(10..60);
        let level = rng.random_range(0..3);
        let score = 0.05 * age as f64 + 0.04 * hours as f64 + 1.2 * level as f64 + rng.random::<f64>();
        csv.push_str(&format!(
            "{age},{hours},{},{},{},{}\n",
            levels[level],
            colors[rng.random_range(0..3)],
            if rng.random::<bool>() { "a" } else { "b" },
            u8::from(score > 5.0)
        ));
    }
    RawTable::from_reader(csv.as_bytes()).expect("valid csv")
}

pub fn quick_config() -> TrainConfig {
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
        ..TrainConfig::default()
    }
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random()).collect()).expect("shape")
}

//! Trains on the bundled Adult data and prints test-split metrics.
//!
//! Usage: `cargo run --release -p cfx-core --example fit_adult -- [unary|binary] [seed] [epochs]`
//! with optional JSON overrides in `CFX_CONFIG`, e.g. `{"learning_rate": 0.01}`.

use cfx_core::ingest::load_and_clean;
use cfx_core::model::CfModel;
use cfx_core::schema::load_schema;
use cfx_core::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    let schema = load_schema(format!("{root}/adult.schema.json"))?;
    let table = load_and_clean(format!("{root}/adult.csv"), &schema)?;
    let mut config = TrainConfig::default();
    if let Some(m) = args.get(1) {
        config.constraint_mode = m.parse()?;
    }
    if let Some(s) = args.get(2) {
        config.seed = s.parse()?;
    }
    if let Some(e) = args.get(3) {
        config.epochs = e.parse()?;
    }
    if let Ok(overrides) = std::env::var("CFX_CONFIG") {
        let mut value = serde_json::to_value(&config)?;
        merge(&mut value, serde_json::from_str(&overrides)?);
        config = serde_json::from_value(value)?;
    }
    let model = CfModel::fit(&table, &schema, &config)?;
    let splits = model.splits(&table)?;
    let (_, report) = model.evaluate(&splits.test, config.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

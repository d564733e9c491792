use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use cfx_core::manifold::manifold_tsv;
use cfx_core::tsne::TsneConfig;
use cfx_core::{
    build_manifold, emit_report, load_and_clean, load_schema, CFModelBundle, CFResult, CfModel, ConstraintMode,
    EncodedDataset, Instance, MetricsReport, TrainConfig,
};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::{ConstraintArg, EmbedArgs, EvaluateArgs, GenerateArgs, PredictArgs, SplitArg, TrainArgs};

/// Body shared by `cfx generate` and `POST /api/counterfactuals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualsResponse {
    pub results: Vec<CFResult>,
}

pub fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    config.constraint_mode = match args.constraint {
        ConstraintArg::Unary => ConstraintMode::Unary,
        ConstraintArg::Binary => ConstraintMode::Binary,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    if let Some(batch) = args.batch {
        config.batch_size = batch;
    }
    config.validate()?;
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = train_config(args)?;
    let schema = load_schema(&args.schema)?;
    let table = load_and_clean(&args.data, &schema)?;
    let model = CfModel::fit(&table, &schema, &config)?;
    let splits = model.splits(&table)?;
    let (_, report) = model.evaluate(&splits.validation, config.seed)?;
    info!(
        "validation: validity {:.2}%, unary {:.2}%, binary {:.2}%, sparsity {:.3}",
        report.validity_pct, report.feasibility_unary_pct, report.feasibility_binary_pct, report.sparsity_mean
    );
    if let Some(path) = &args.report {
        emit_report(&report, path)?;
    }
    let mut bundle = CFModelBundle::from_model(&model);
    bundle.report = Some(report);
    bundle.save(&args.out)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

/// Rebuilds the bundle's training split from the original CSV.
pub fn load_split(model: &CfModel, data: &Path, split: SplitArg) -> Result<EncodedDataset> {
    let table = load_and_clean(data, &model.schema)?;
    let splits = model.splits(&table)?;
    Ok(match split {
        SplitArg::Test => splits.test,
        SplitArg::Val => splits.validation,
    })
}

pub fn evaluate_report(args: &EvaluateArgs) -> Result<MetricsReport> {
    let model = CfModel::load(&args.model)?;
    let data = load_split(&model, &args.data, args.split)?;
    let seed = args.seed.unwrap_or(model.config.seed);
    Ok(model.evaluate(&data, seed)?.1)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let report = evaluate_report(args)?;
    match &args.report {
        Some(path) => {
            let (json, csv) = emit_report(&report, path)?;
            info!("wrote {} and {}", json.display(), csv.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let text = if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    };
    serde_json::from_str(&text).context("instance must be a JSON object keyed by feature name")
}

pub fn counterfactuals(
    model: &CfModel,
    instance: &Instance,
    desired: Option<u8>,
    k: usize,
    seed: u64,
) -> cfx_core::Result<CounterfactualsResponse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = model.generate(instance, desired, k, &mut rng)?;
    Ok(CounterfactualsResponse { results })
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let model = CfModel::load(&args.input.model)?;
    let instance = read_instance(&args.input.instance)?;
    let response = counterfactuals(&model, &instance, args.desired, args.k, args.seed)?;
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&response)? + "\n"))
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = CfModel::load(&args.input.model)?;
    let instance = read_instance(&args.input.instance)?;
    println!("{}", serde_json::to_string(&model.predict(&instance)?)?);
    Ok(())
}

pub fn manifold(
    model: &CfModel,
    train: &EncodedDataset,
    n: usize,
    seed: u64,
) -> cfx_core::Result<Vec<cfx_core::ManifoldPoint>> {
    build_manifold(model, train, n, &TsneConfig::for_points(n, seed))
}

pub fn embed(args: &EmbedArgs) -> Result<()> {
    let model = CfModel::load(&args.model)?;
    let table = load_and_clean(&args.data, &model.schema)?;
    let train = model.splits(&table)?.train;
    let points = manifold(&model, &train, args.n, args.seed)?;
    write_output(args.out.as_deref(), &manifold_tsv(&points))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

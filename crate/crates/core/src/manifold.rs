//! Feasibility manifolds: labelled latent samples and 2-D embeddings of the
//! training inputs, prior samples and generated counterfactuals.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::check_constraint;
use crate::encoding::EncodedDataset;
use crate::error::{io_err, CfxError, Result};
use crate::generate::assemble_counterfactual;
use crate::model::CfModel;
use crate::nn::Matrix;
use crate::tsne::{tsne_embed, TsneConfig, MAX_POINTS};
use crate::vae::standard_normal;

pub const TSV_HEADER: &str = "x\ty\tsource\tfeasible";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Train,
    Latent,
    Predicted,
}

impl fmt::Display for PointSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointSource::Train => "train",
            PointSource::Latent => "latent",
            PointSource::Predicted => "predicted",
        })
    }
}

impl FromStr for PointSource {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(PointSource::Train),
            "latent" => Ok(PointSource::Latent),
            "predicted" => Ok(PointSource::Predicted),
            other => Err(CfxError::Data(format!("unknown point source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub x: f64,
    pub y: f64,
    pub source: PointSource,
    pub feasible: u8,
}

/// Prior samples, their decoded counterfactuals and 0/1 feasibility labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub latent: Matrix,
    /// Full encoded vectors, immutables taken from the reference row.
    pub decoded: Matrix,
    /// Index into the reference data of each sample's nearest row.
    pub reference: Vec<usize>,
    pub labels: Vec<u8>,
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_POINTS {
        return Err(CfxError::Config(format!("n must be in 1..={MAX_POINTS}, got {n}")));
    }
    Ok(())
}

fn nearest_l1(rows: &Matrix, columns: &[usize], target: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, r) in rows.iter_rows().enumerate() {
        let d: f64 = columns.iter().zip(target).map(|(&c, t)| (r[c] - t).abs()).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Whether `cf` satisfies every constraint of the model's training mode
/// relative to `input`.
fn mode_feasible(model: &CfModel, input: &[f64], cf: &[f64]) -> Result<bool> {
    let kind = model.config.constraint_mode.kind();
    let (a, b) = (model.encoding.decode(input)?, model.encoding.decode(cf)?);
    for spec in model.schema.constraints.iter().filter(|c| c.kind() == kind) {
        if !check_constraint(&a, &b, spec, &model.schema)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draws `n` codes from the prior, decodes each with a desired class drawn
/// from the class balance of `reference`'s desired classes, and labels it
/// against the nearest `reference` row (L1 over mutable columns).
pub fn sample_and_label(
    model: &CfModel,
    reference: &EncodedDataset,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LatentSample> {
    check_n(n)?;
    if reference.is_empty() {
        return Err(CfxError::Data("no reference rows for labelling".into()));
    }
    let predicted = model.classifier.predict_batch(&reference.matrix)?;
    let share_one = predicted.iter().filter(|&&c| c == 0).count() as f64 / predicted.len() as f64;
    let z = standard_normal(n, model.vae.latent_dim(), rng);
    let desired: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < share_one)).collect();
    let decoded_mut = model.vae.decode_cf(&z, &desired)?;
    let columns = model.mask.columns();
    let rows: Vec<(usize, Vec<f64>, u8)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let out = decoded_mut.row(i);
            let nn = nearest_l1(&reference.matrix, columns, out);
            let x = reference.matrix.row(nn);
            let cf = assemble_counterfactual(x, out, &model.mask, &model.encoding)?;
            let label = u8::from(mode_feasible(model, x, &cf)?);
            Ok((nn, cf, label))
        })
        .collect::<Result<_>>()?;
    let mut reference_idx = Vec::with_capacity(n);
    let mut decoded = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (nn, cf, label) in rows {
        reference_idx.push(nn);
        decoded.push(cf);
        labels.push(label);
    }
    Ok(LatentSample {
        latent: z,
        decoded: Matrix::from_rows(&decoded)?,
        reference: reference_idx,
        labels,
    })
}

fn points(coords: &Matrix, source: PointSource, labels: &[u8]) -> Vec<ManifoldPoint> {
    coords
        .iter_rows()
        .zip(labels)
        .map(|(c, &feasible)| ManifoldPoint {
            x: c[0],
            y: c[1],
            source,
            feasible,
        })
        .collect()
}

/// Embeds `n` seeded training rows, their counterfactuals, and `n` prior
/// samples, each source separately. Train and predicted points carry the
/// feasibility of the counterfactual generated for that row.
pub fn build_manifold(
    model: &CfModel,
    train: &EncodedDataset,
    n: usize,
    tsne: &TsneConfig,
) -> Result<Vec<ManifoldPoint>> {
    check_n(n)?;
    if n > train.len() {
        return Err(CfxError::Config(format!(
            "n = {n} exceeds the {} available training rows",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tsne.seed);
    let mut picked = sample(&mut rng, train.len(), n).into_vec();
    picked.sort_unstable();
    let subset = train.subset(&picked);

    let cfs = model.counterfactuals_for(&subset, tsne.seed)?;
    let kind = model.config.constraint_mode.kind();
    let cf_labels: Vec<u8> = cfs.iter().map(|r| u8::from(r.feasible.get(kind))).collect();
    let cf_rows: Vec<Vec<f64>> = cfs.into_iter().map(|r| r.cf_vector).collect();

    let latent = sample_and_label(model, train, n, &mut rng)?;

    let mut out = Vec::with_capacity(3 * n);
    out.extend(points(
        &tsne_embed(&subset.matrix, tsne)?.coords,
        PointSource::Train,
        &cf_labels,
    ));
    out.extend(points(
        &tsne_embed(&latent.latent, tsne)?.coords,
        PointSource::Latent,
        &latent.labels,
    ));
    out.extend(points(
        &tsne_embed(&Matrix::from_rows(&cf_rows)?, tsne)?.coords,
        PointSource::Predicted,
        &cf_labels,
    ));
    Ok(out)
}

pub fn manifold_tsv(points: &[ManifoldPoint]) -> String {
    let mut s = String::from(TSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", p.x, p.y, p.source, p.feasible));
    }
    s
}

pub fn export_manifold(points: &[ManifoldPoint], path: impl AsRef<Path>) -> Result<()> {
    if points.is_empty() {
        return Err(CfxError::Data("no manifold points to export".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, manifold_tsv(points)).map_err(io_err(path))
}

pub fn read_manifold(path: impl AsRef<Path>) -> Result<Vec<ManifoldPoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(TSV_HEADER) {
        return Err(CfxError::Data(format!(
            "{} is missing the manifold header",
            path.display()
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || CfxError::Data(format!("malformed manifold row {}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let feasible: u8 = f[3].parse().map_err(|_| bad())?;
            if feasible > 1 {
                return Err(bad());
            }
            Ok(ManifoldPoint {
                x: f[0].parse().map_err(|_| bad())?,
                y: f[1].parse().map_err(|_| bad())?,
                source: f[2].parse()?,
                feasible,
            })
        })
        .collect()
}

//! Exact t-SNE (O(n^2) per iteration).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CfxError, Result};
use crate::nn::Matrix;

/// Largest point count accepted by [`tsne_embed`].
pub const MAX_POINTS: usize = 5000;
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
const MOMENTUM_SWITCH: usize = 250;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Number of initial iterations run with exaggerated affinities.
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    /// Defaults with the perplexity lowered, if needed, to fit `n` points.
    pub fn for_points(n: usize, seed: u64) -> Self {
        let cap = (n as f64 - 1.0) / 3.0 - 1.0;
        let defaults = Self::default();
        Self {
            perplexity: defaults.perplexity.min(cap.max(1.0)),
            seed,
            ..defaults
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 10 {
            return Err(CfxError::Config(format!("t-SNE needs at least 10 points, got {n}")));
        }
        if n > MAX_POINTS {
            return Err(CfxError::Config(format!(
                "t-SNE is capped at {MAX_POINTS} points, got {n}"
            )));
        }
        check_perplexity(self.perplexity, n)?;
        if self.iterations < 250 {
            return Err(CfxError::Config("t-SNE needs at least 250 iterations".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CfxError::Config("t-SNE learning rate must be positive".into()));
        }
        if !(self.early_exaggeration.is_finite() && self.early_exaggeration >= 1.0) {
            return Err(CfxError::Config("early exaggeration must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_perplexity(perplexity: f64, n: usize) -> Result<()> {
    if !(perplexity.is_finite() && perplexity > 0.0 && perplexity < (n as f64 - 1.0) / 3.0) {
        return Err(CfxError::Config(format!(
            "perplexity {perplexity} must be positive and below (n - 1) / 3 for n = {n}"
        )));
    }
    Ok(())
}

/// Embedding plus the KL divergence recorded at every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    pub coords: Matrix,
    pub kl_history: Vec<f64>,
}

pub fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = x.row(i);
            (0..n).map(move |j| a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        })
        .collect();
    Matrix::new(n, n, data).expect("n x n")
}

/// Gaussian conditional for row `i` whose entropy (nats) is `ln(perplexity)`.
/// Distances are rescaled by their mean so the bandwidth search is scale free;
/// bisection runs on the log precision.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64) -> Result<Vec<f64>> {
    let n = dist.len();
    let target = perplexity.ln();
    let others = (0..n).filter(|&j| j != i);
    let mean = others.clone().map(|j| dist[j]).sum::<f64>() / (n - 1) as f64;
    let mut p = vec![0.0; n];
    if mean <= 0.0 {
        let u = 1.0 / (n - 1) as f64;
        for j in others {
            p[j] = u;
        }
        return Ok(p);
    }
    let dmin = others.clone().map(|j| dist[j] / mean).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-50.0_f64, 50.0_f64);
    let mut log_beta = 0.0_f64;
    let mut sum = 0.0_f64;
    for _ in 0..MAX_BISECTION_STEPS {
        let beta = log_beta.exp();
        sum = 0.0;
        let mut weighted = 0.0;
        for j in others.clone() {
            let d = dist[j] / mean - dmin;
            let v = (-beta * d).exp();
            p[j] = v;
            sum += v;
            weighted += v * d;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        if !entropy.is_finite() {
            return Err(CfxError::Bisection(i));
        }
        if (entropy - target).abs() < ENTROPY_TOLERANCE {
            break;
        }
        if entropy > target {
            lo = log_beta;
        } else {
            hi = log_beta;
        }
        log_beta = 0.5 * (lo + hi);
    }
    // When more than `perplexity` neighbours tie at the nearest distance the
    // target entropy is unreachable; the last bandwidth tried is kept.
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

/// Row-stochastic conditional affinities `p_{j|i}`.
pub fn conditional_affinities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = x.rows();
    if n < 4 {
        return Err(CfxError::Config(format!("affinities need at least 4 points, got {n}")));
    }
    check_perplexity(perplexity, n)?;
    let d = squared_distances(x);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| conditional_row(d.row(i), i, perplexity))
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

/// Symmetric joint affinities `P = (P_{j|i} + P_{i|j}) / 2n`.
pub fn pairwise_affinities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let c = conditional_affinities(x, perplexity)?;
    let n = c.rows();
    let mut p = Matrix::zeros(n, n);
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (c.get(i, j) + c.get(j, i)) * scale);
        }
    }
    Ok(p)
}

/// Entropy in nats of one probability row, skipping zeros.
pub fn row_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn tsne_embed(x: &Matrix, config: &TsneConfig) -> Result<TsneOutput> {
    let n = x.rows();
    config.validate(n)?;
    let p = pairwise_affinities(x, config.perplexity)?.map(|v| v.max(P_FLOOR));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let mut kl_history = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };

        // Student-t kernel rows and their sums, computed per row so the
        // reduction order is fixed regardless of thread count.
        let num: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y[i];
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            let (dx, dy) = (yi[0] - y[j][0], yi[1] - y[j][1]);
                            1.0 / (1.0 + dx * dx + dy * dy)
                        }
                    })
                    .collect()
            })
            .collect();
        let z: f64 = num.iter().map(|r| r.iter().sum::<f64>()).sum();

        let (grad, kl_terms): (Vec<[f64; 2]>, Vec<f64>) = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                let mut kl = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let pij = p.get(i, j);
                    let q = (num[i][j] / z).max(P_FLOOR);
                    kl += pij * (pij / q).ln();
                    let m = (exaggeration * pij - q) * num[i][j];
                    g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                    g[1] += 4.0 * m * (y[i][1] - y[j][1]);
                }
                (g, kl)
            })
            .unzip();
        let kl: f64 = kl_terms.iter().sum();
        if !kl.is_finite() {
            return Err(CfxError::TsneDiverged(iter));
        }
        kl_history.push(kl);

        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        center(&mut y);
        if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(CfxError::TsneDiverged(iter));
        }
    }
    let coords = Matrix::new(n, 2, y.into_iter().flatten().collect())?;
    Ok(TsneOutput { coords, kl_history })
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

//! Training objective for the counterfactual generator: validity hinge, L1
//! proximity, constraint penalties, sparsity and the VAE KL regularizer.
//!
//! Each scalar term comes with its (sub)gradient; kinks take gradient 0.

use serde::{Deserialize, Serialize};

use crate::constraint::{BinaryMode, Direction, ResolvedConstraint};
use crate::error::{CfxError, Result};
use crate::nn::Matrix;

/// Effect increase required when a binary constraint's cause increases.
pub const STRICT_MARGIN: f64 = 1e-3;

/// Scale of the smooth L0 surrogate.
pub const SMOOTH_L0_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub validity: f64,
    pub proximity: f64,
    pub feasibility: f64,
    pub sparsity: f64,
    pub kl: f64,
    pub hinge_margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            validity: 5.0,
            proximity: 1.0,
            feasibility: 10.0,
            sparsity: 0.5,
            kl: 0.05,
            hinge_margin: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.validity, self.proximity, self.feasibility, self.sparsity, self.kl];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CfxError::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.hinge_margin.is_finite() && self.hinge_margin > 0.0) {
            return Err(CfxError::Config("hinge margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    #[default]
    L1,
    SmoothL0,
}

/// `max(0, margin - (logit_desired - logit_other))`.
pub fn validity_loss(scores: [f64; 2], desired: u8, margin: f64) -> f64 {
    let (d, o) = split_scores(scores, desired);
    (margin - (d - o)).max(0.0)
}

/// Gradient of [`validity_loss`] w.r.t. the two logits.
pub fn validity_grad(scores: [f64; 2], desired: u8, margin: f64) -> [f64; 2] {
    let (d, o) = split_scores(scores, desired);
    if margin - (d - o) > 0.0 {
        let mut g = [1.0, 1.0];
        g[desired as usize] = -1.0;
        g
    } else {
        [0.0, 0.0]
    }
}

fn split_scores(scores: [f64; 2], desired: u8) -> (f64, f64) {
    let d = desired as usize & 1;
    (scores[d], scores[1 - d])
}

fn check_widths(x: &[f64], cf: &[f64]) -> Result<()> {
    if x.len() != cf.len() {
        return Err(CfxError::Shape(format!(
            "input width {} differs from counterfactual width {}",
            x.len(),
            cf.len()
        )));
    }
    Ok(())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sum of absolute differences over `columns`.
pub fn proximity_loss(x: &[f64], cf: &[f64], columns: &[usize]) -> Result<f64> {
    check_widths(x, cf)?;
    Ok(columns.iter().map(|&c| (cf[c] - x[c]).abs()).sum())
}

/// `-min(0, cf - x)`: positive only when the value decreased.
pub fn unary_penalty(x: f64, cf: f64) -> f64 {
    -(cf - x).min(0.0)
}

pub fn directed_unary_penalty(x: f64, cf: f64, direction: Direction) -> f64 {
    match direction {
        Direction::NonDecrease => unary_penalty(x, cf),
        Direction::NonIncrease => unary_penalty(cf, x),
    }
}

/// d/d cf of [`directed_unary_penalty`].
pub fn directed_unary_grad(x: f64, cf: f64, direction: Direction) -> f64 {
    match direction {
        Direction::NonDecrease if cf < x => -1.0,
        Direction::NonIncrease if cf > x => 1.0,
        _ => 0.0,
    }
}

/// Parameters of a cause/effect constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryParams {
    pub c1: f64,
    pub c2: f64,
    pub mode: BinaryMode,
}

/// Penalty for moving a cause from `x1` to `x1_cf` and its effect from `x2`
/// to `x2_cf` (normalized units).
///
/// Hinge mode sums `max(0, c1 + c2 x1_cf - x2_cf)`, the unary penalty on the
/// effect, a penalty on any cause decrease and, when the cause increased, a
/// hinge asking the effect to rise by at least [`STRICT_MARGIN`]. It is zero
/// only where the cause/effect check passes. Literal mode is
/// `(x2_cf - c1 - c2 x1_cf) - min(0, c2)` with no lower bound.
pub fn binary_penalty(x1: f64, x1_cf: f64, x2: f64, x2_cf: f64, p: BinaryParams) -> f64 {
    match p.mode {
        BinaryMode::Literal => (x2_cf - p.c1 - p.c2 * x1_cf) - p.c2.min(0.0),
        BinaryMode::Hinge => {
            let relation = (p.c1 + p.c2 * x1_cf - x2_cf).max(0.0);
            let strict = if x1_cf > x1 {
                (x2 + STRICT_MARGIN - x2_cf).max(0.0)
            } else {
                0.0
            };
            relation + unary_penalty(x2, x2_cf) + unary_penalty(x1, x1_cf) + strict
        }
    }
}

/// Gradient of [`binary_penalty`] w.r.t. `(x1_cf, x2_cf)`.
pub fn binary_grad(x1: f64, x1_cf: f64, x2: f64, x2_cf: f64, p: BinaryParams) -> (f64, f64) {
    match p.mode {
        BinaryMode::Literal => (-p.c2, 1.0),
        BinaryMode::Hinge => {
            let (mut g1, mut g2) = (0.0, 0.0);
            if p.c1 + p.c2 * x1_cf - x2_cf > 0.0 {
                g1 += p.c2;
                g2 -= 1.0;
            }
            if x2_cf < x2 {
                g2 -= 1.0;
            }
            if x1_cf < x1 {
                g1 -= 1.0;
            }
            if x1_cf > x1 && x2 + STRICT_MARGIN - x2_cf > 0.0 {
                g2 -= 1.0;
            }
            (g1, g2)
        }
    }
}

pub fn sparsity_penalty(x: &[f64], cf: &[f64], columns: &[usize], mode: SparsityMode) -> Result<f64> {
    check_widths(x, cf)?;
    Ok(columns
        .iter()
        .map(|&c| {
            let d = (cf[c] - x[c]).abs();
            match mode {
                SparsityMode::L1 => d,
                SparsityMode::SmoothL0 => 1.0 - (-d / SMOOTH_L0_SIGMA).exp(),
            }
        })
        .sum())
}

/// Adds `upstream * d sparsity / d cf` into `grad`.
fn sparsity_grad(x: &[f64], cf: &[f64], columns: &[usize], mode: SparsityMode, upstream: f64, grad: &mut [f64]) {
    for &c in columns {
        let delta = cf[c] - x[c];
        let g = match mode {
            SparsityMode::L1 => sign(delta),
            SparsityMode::SmoothL0 => sign(delta) * (-delta.abs() / SMOOTH_L0_SIGMA).exp() / SMOOTH_L0_SIGMA,
        };
        grad[c] += upstream * g;
    }
}

/// `-1/2 * sum(1 + logvar - mu^2 - exp(logvar))`.
pub fn kl_loss(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub validity: f64,
    pub proximity: f64,
    pub feasibility: f64,
    pub sparsity: f64,
    pub kl: f64,
}

impl LossComponents {
    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("validity", self.validity),
            ("proximity", self.proximity),
            ("feasibility", self.feasibility),
            ("sparsity", self.sparsity),
            ("kl", self.kl),
        ]
    }
}

/// Weighted sum of the components.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    for (name, v) in c.named() {
        if !v.is_finite() {
            return Err(CfxError::NonFiniteLoss(name.to_string()));
        }
    }
    Ok(w.validity * c.validity
        + w.proximity * c.proximity
        + w.feasibility * c.feasibility
        + w.sparsity * c.sparsity
        + w.kl * c.kl)
}

/// Feasibility penalty of one (input, counterfactual) pair under the given
/// constraints; adds `upstream * gradient` w.r.t. `cf` into `grad` if given.
pub fn feasibility_penalty(
    x: &[f64],
    cf: &[f64],
    constraints: &[ResolvedConstraint],
    upstream: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    for c in constraints {
        match c {
            ResolvedConstraint::Unary { view, direction } => {
                let (a, b) = (view.value(x), view.value(cf));
                total += directed_unary_penalty(a, b, *direction);
                if let Some(g) = grad.as_deref_mut() {
                    view.accumulate_grad(cf, upstream * directed_unary_grad(a, b, *direction), g);
                }
            }
            ResolvedConstraint::Binary {
                cause,
                effect,
                c1,
                c2,
                mode,
            } => {
                let p = BinaryParams {
                    c1: *c1,
                    c2: *c2,
                    mode: *mode,
                };
                let (x1, x1_cf) = (cause.value(x), cause.value(cf));
                let (x2, x2_cf) = (effect.value(x), effect.value(cf));
                total += binary_penalty(x1, x1_cf, x2, x2_cf, p);
                if let Some(g) = grad.as_deref_mut() {
                    let (g1, g2) = binary_grad(x1, x1_cf, x2, x2_cf, p);
                    cause.accumulate_grad(cf, upstream * g1, g);
                    effect.accumulate_grad(cf, upstream * g2, g);
                }
            }
        }
    }
    total
}

/// Batch-mean loss with gradients w.r.t. the counterfactual batch, the
/// classifier logits and the latent statistics.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub components: LossComponents,
    pub total: f64,
    pub grad_cf: Matrix,
    pub grad_logits: Matrix,
    pub grad_mu: Matrix,
    pub grad_logvar: Matrix,
}

/// Inputs for [`batch_loss`], all batch-major.
pub struct BatchTerms<'a> {
    pub x: &'a Matrix,
    pub cf: &'a Matrix,
    pub logits: &'a Matrix,
    pub desired: &'a [u8],
    pub mu: &'a Matrix,
    pub logvar: &'a Matrix,
    /// Columns that proximity and sparsity look at.
    pub mutable_columns: &'a [usize],
    pub constraints: &'a [ResolvedConstraint],
    pub sparsity_mode: SparsityMode,
}

pub fn batch_loss(t: &BatchTerms<'_>, w: &LossWeights) -> Result<BatchLoss> {
    let n = t.x.rows();
    if t.cf.shape() != t.x.shape() || t.logits.rows() != n || t.desired.len() != n {
        return Err(CfxError::Shape("batch terms disagree on batch size".into()));
    }
    let inv = 1.0 / n as f64;
    let mut c = LossComponents::default();
    let mut grad_cf = Matrix::zeros(n, t.x.cols());
    let mut grad_logits = Matrix::zeros(n, 2);
    for i in 0..n {
        let (x, cf) = (t.x.row(i), t.cf.row(i));
        let scores = [t.logits.get(i, 0), t.logits.get(i, 1)];
        c.validity += validity_loss(scores, t.desired[i], w.hinge_margin) * inv;
        let gv = validity_grad(scores, t.desired[i], w.hinge_margin);
        grad_logits.set(i, 0, gv[0] * w.validity * inv);
        grad_logits.set(i, 1, gv[1] * w.validity * inv);

        c.proximity += proximity_loss(x, cf, t.mutable_columns)? * inv;
        c.sparsity += sparsity_penalty(x, cf, t.mutable_columns, t.sparsity_mode)? * inv;
        let g = grad_cf.row_mut(i);
        sparsity_grad(x, cf, t.mutable_columns, SparsityMode::L1, w.proximity * inv, g);
        sparsity_grad(x, cf, t.mutable_columns, t.sparsity_mode, w.sparsity * inv, g);
        c.feasibility += feasibility_penalty(x, cf, t.constraints, w.feasibility * inv, Some(g)) * inv;
        c.kl += kl_loss(t.mu.row(i), t.logvar.row(i)) * inv;
    }
    let grad_mu = t.mu.map(|m| w.kl * inv * m);
    let grad_logvar = t.logvar.map(|lv| w.kl * inv * -0.5 * (1.0 - lv.exp()));
    let total = total_loss(&c, w)?;
    Ok(BatchLoss {
        components: c,
        total,
        grad_cf,
        grad_logits,
        grad_mu,
        grad_logvar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{numeric_gradient, relative_error, FD_STEP};

    #[test]
    fn validity_examples() {
        assert_eq!(validity_loss([0.0, 5.0], 1, 0.5), 0.0);
        assert_eq!(validity_loss([2.0, 2.0], 1, 0.5), 0.5);
        assert_eq!(validity_loss([3.0, 0.0], 1, 0.5), 3.5);
        assert_eq!(validity_grad([3.0, 0.0], 1, 0.5), [1.0, -1.0]);
        assert_eq!(validity_grad([0.0, 5.0], 1, 0.5), [0.0, 0.0]);
    }

    #[test]
    fn proximity_examples() {
        let x = [0.1, 0.5, 0.9];
        assert_eq!(proximity_loss(&x, &x, &[0, 1, 2]).unwrap(), 0.0);
        let cf = [0.1, 0.8, 0.9];
        assert!((proximity_loss(&x, &cf, &[0, 1, 2]).unwrap() - 0.3).abs() < 1e-12);
        // immutable column 1 excluded
        assert_eq!(proximity_loss(&x, &cf, &[0, 2]).unwrap(), 0.0);
        assert!(proximity_loss(&x, &cf[..2], &[0]).is_err());
    }

    #[test]
    fn unary_examples() {
        assert_eq!(unary_penalty(0.5, 0.3), 0.5 - 0.3);
        assert_eq!(unary_penalty(0.4, 0.4), 0.0);
        let (age, age_cf) = ((38.0 - 17.0) / 73.0, (43.55 - 17.0) / 73.0);
        assert_eq!(unary_penalty(age, age_cf), 0.0);
        assert_eq!(directed_unary_penalty(0.5, 0.7, Direction::NonIncrease), 0.7 - 0.5);
    }

    #[test]
    fn binary_examples() {
        let p = BinaryParams {
            c1: 0.0,
            c2: 0.1,
            mode: BinaryMode::Hinge,
        };
        // hs_grad -> doctorate, age 38 -> 43.55
        let (ed, ed_cf) = (1.0 / 7.0, 1.0);
        let (age, age_cf) = ((38.0 - 17.0) / 73.0, (43.55 - 17.0) / 73.0);
        assert_eq!(binary_penalty(ed, ed_cf, age, age_cf, p), 0.0);

        let p1 = BinaryParams { c2: 1.0, ..p };
        // cause high and unchanged, effect unchanged
        let v = binary_penalty(0.9, 0.9, 0.2, 0.2, p1);
        assert!((v - (0.9 - 0.2)).abs() < 1e-15);

        let p0 = BinaryParams { c2: 0.0, ..p };
        assert_eq!(binary_penalty(0.3, 0.3, 0.6, 0.6, p0), 0.0);
        assert!((binary_penalty(0.3, 0.6, 0.4, 0.4, p0) - STRICT_MARGIN).abs() < 1e-15);
        assert_eq!(binary_penalty(0.6, 0.3, 0.4, 0.9, p0), 0.3);

        let lit = BinaryParams {
            c1: 0.1,
            c2: -0.5,
            mode: BinaryMode::Literal,
        };
        assert!((binary_penalty(0.0, 0.4, 0.0, 0.3, lit) - (0.3 - 0.1 + 0.2 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn sparsity_examples() {
        let x = [0.5, 0.5];
        assert_eq!(sparsity_penalty(&x, &x, &[0, 1], SparsityMode::L1).unwrap(), 0.0);
        assert_eq!(sparsity_penalty(&x, &x, &[0, 1], SparsityMode::SmoothL0).unwrap(), 0.0);
        let cf = [0.7, 0.5];
        assert!((sparsity_penalty(&x, &cf, &[0, 1], SparsityMode::L1).unwrap() - 0.2).abs() < 1e-12);
        let l0 = sparsity_penalty(&x, &cf, &[0, 1], SparsityMode::SmoothL0).unwrap();
        assert!((l0 - (1.0 - (-4.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_loss(&[0.0; 4], &[0.0; 4]), 0.0);
        assert!((kl_loss(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        assert!(kl_loss(&[-0.3, 2.0], &[1.5, -3.0]) > 0.0);
    }

    #[test]
    fn total_examples() {
        let c = LossComponents {
            validity: 1.0,
            proximity: 2.0,
            feasibility: 3.0,
            sparsity: 4.0,
            kl: 5.0,
        };
        let zero = LossWeights {
            validity: 0.0,
            proximity: 0.0,
            feasibility: 0.0,
            sparsity: 0.0,
            kl: 0.0,
            hinge_margin: 0.5,
        };
        assert_eq!(total_loss(&c, &zero).unwrap(), 0.0);
        let ones = LossWeights {
            validity: 1.0,
            proximity: 1.0,
            feasibility: 1.0,
            sparsity: 1.0,
            kl: 1.0,
            hinge_margin: 0.5,
        };
        assert_eq!(total_loss(&c, &ones).unwrap(), 15.0);
        let doubled = LossWeights {
            feasibility: 2.0,
            ..ones
        };
        assert_eq!(total_loss(&c, &doubled).unwrap() - 15.0, 3.0);
        let bad = LossComponents {
            sparsity: f64::NAN,
            ..c
        };
        assert!(matches!(total_loss(&bad, &ones), Err(CfxError::NonFiniteLoss(n)) if n == "sparsity"));
    }

    #[test]
    fn penalty_gradients_match_finite_differences() {
        let p = BinaryParams {
            c1: 0.05,
            c2: 0.7,
            mode: BinaryMode::Hinge,
        };
        // (x1, x2) fixed; probe (x1_cf, x2_cf) away from every kink
        for &(x1, x2, a, b) in &[
            (0.2, 0.5, 0.6, 0.3),
            (0.6, 0.5, 0.2, 0.1),
            (0.2, 0.5, 0.1, 0.9),
            (0.4, 0.1, 0.8, 0.95),
        ] {
            let n = numeric_gradient(|v| binary_penalty(x1, v[0], x2, v[1], p), &[a, b], FD_STEP);
            let (g1, g2) = binary_grad(x1, a, x2, b, p);
            assert!(relative_error(g1, n[0]) < 1e-6 && relative_error(g2, n[1]) < 1e-6);
        }
    }
}

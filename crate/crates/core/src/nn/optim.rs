use serde::{Deserialize, Serialize};

use super::{Module, ParamMut};
use crate::error::{CfxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Only used by SGD.
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.0,
        }
    }
}

/// First-order optimizer state shared by Adam and SGD with momentum.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, learning_rate: f64) -> Self {
        Self {
            config,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerConfig::default(), learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `model`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, model: &mut dyn Module) -> Result<()> {
        let mut bad = None;
        let mut shapes = Vec::new();
        model.visit_params(&mut |p: ParamMut<'_>| {
            if bad.is_none() && p.grad.iter().any(|g| !g.is_finite()) {
                bad = Some(p.name.clone());
            }
            shapes.push(p.value.len());
        });
        if let Some(name) = bad {
            return Err(CfxError::NonFiniteGradient(name));
        }
        if self.first.is_empty() {
            self.first = shapes.iter().map(|&n| vec![0.0; n]).collect();
            self.second = shapes.iter().map(|&n| vec![0.0; n]).collect();
        } else if self.first.iter().map(Vec::len).ne(shapes.iter().copied()) {
            return Err(CfxError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let cfg = self.config;
        let lr = self.learning_rate;
        let t = self.step as i32;
        let (bc1, bc2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        let mut slot = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        model.visit_params(&mut |p: ParamMut<'_>| {
            let m = &mut first[slot];
            let v = &mut second[slot];
            match cfg.kind {
                OptimizerKind::Adam => {
                    for i in 0..p.value.len() {
                        let g = p.grad[i];
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p.value[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
                OptimizerKind::Sgd => {
                    for i in 0..p.value.len() {
                        m[i] = cfg.momentum * m[i] + p.grad[i];
                        p.value[i] -= lr * m[i];
                    }
                }
            }
            slot += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar {
        w: Vec<f64>,
        g: Vec<f64>,
    }

    impl Module for Scalar {
        fn visit_params(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
            f(ParamMut {
                name: "w".into(),
                value: &mut self.w,
                grad: &mut self.g,
            });
        }
    }

    fn run_quadratic(steps: usize) -> (f64, Vec<f64>) {
        let mut model = Scalar {
            w: vec![0.0],
            g: vec![0.0],
        };
        let mut opt = Optimizer::adam(0.1);
        let mut losses = Vec::new();
        for _ in 0..steps {
            let w = model.w[0];
            losses.push((w - 3.0).powi(2));
            model.g[0] = 2.0 * (w - 3.0);
            opt.step(&mut model).unwrap();
        }
        (model.w[0], losses)
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let (w, _) = run_quadratic(200);
        assert!((w - 3.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn deterministic() {
        assert_eq!(run_quadratic(50).0.to_bits(), run_quadratic(50).0.to_bits());
    }

    #[test]
    fn loss_decreases_after_burn_in() {
        // Adam overshoots once it reaches the minimum, so check the descent phase.
        let (_, losses) = run_quadratic(25);
        assert!(losses[10..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut model = Scalar {
            w: vec![1.5],
            g: vec![0.0],
        };
        let mut opt = Optimizer::adam(0.1);
        opt.step(&mut model).unwrap();
        assert_eq!(model.w[0], 1.5);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut model = Scalar {
            w: vec![1.0],
            g: vec![f64::NAN],
        };
        let err = Optimizer::adam(0.1).step(&mut model).unwrap_err();
        assert!(matches!(err, CfxError::NonFiniteGradient(n) if n == "w"));
        assert_eq!(model.w[0], 1.0);
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::{Module, ParamMut};
use crate::error::{CfxError, Result};

/// Fully connected layer `y = x W^T + b` with `W` stored `out x in`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    grad_weight: Matrix,
    grad_bias: Vec<f64>,
    cache: Option<Matrix>,
}

/// Serialized form: flat weights behind a `[out, in]` shape header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub shape: [usize; 2],
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        let weight = Matrix::new(outputs, inputs, data).expect("sized");
        Self::from_parts(weight, vec![0.0; outputs]).expect("consistent")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(CfxError::Shape(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        let (out, inp) = weight.shape();
        Ok(Self {
            weight,
            grad_bias: vec![0.0; bias.len()],
            bias,
            grad_weight: Matrix::zeros(out, inp),
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// Forward pass without touching the backward cache.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_transposed(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self.cache.as_ref().ok_or(CfxError::NoForwardCache("linear layer"))?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.outputs() {
            return Err(CfxError::Shape(format!(
                "gradient {}x{} does not match output {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                self.outputs()
            )));
        }
        let gw = grad_out.transposed_matmul(x)?;
        for (acc, g) in self.grad_weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *acc += g;
        }
        for r in 0..grad_out.rows() {
            for (acc, g) in self.grad_bias.iter_mut().zip(grad_out.row(r)) {
                *acc += g;
            }
        }
        self.input_grad(grad_out)
    }

    /// Gradient w.r.t. the input only, for frozen layers.
    pub fn input_grad(&self, grad_out: &Matrix) -> Result<Matrix> {
        grad_out.matmul(&self.weight)
    }

    pub fn grad_weight(&self) -> &Matrix {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn to_params(&self) -> LinearParams {
        LinearParams {
            shape: [self.outputs(), self.inputs()],
            weight: self.weight.as_slice().to_vec(),
            bias: self.bias.clone(),
        }
    }

    pub fn from_params(p: &LinearParams) -> Result<Self> {
        let weight = Matrix::new(p.shape[0], p.shape[1], p.weight.clone())?;
        if !weight.all_finite() || p.bias.iter().any(|b| !b.is_finite()) {
            return Err(CfxError::Shape("non-finite layer parameters".into()));
        }
        Self::from_parts(weight, p.bias.clone())
    }
}

impl Module for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: "weight".into(),
            value: self.weight.as_mut_slice(),
            grad: self.grad_weight.as_mut_slice(),
        });
        f(ParamMut {
            name: "bias".into(),
            value: &mut self.bias,
            grad: &mut self.grad_bias,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at pre-activation `x`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn forward(self, x: &Matrix) -> Matrix {
        x.map(|v| self.apply(v))
    }

    pub fn backward(self, grad: &Matrix, x_cached: &Matrix) -> Matrix {
        let mut out = grad.clone();
        for (g, &x) in out.as_mut_slice().iter_mut().zip(x_cached.as_slice()) {
            *g *= self.derivative(x);
        }
        out
    }
}

/// Inverted dropout. Returns the output and, in training mode, the mask of
/// per-unit multipliers (`0` or `1 / (1 - rate)`) for the backward pass.
pub fn dropout(x: &Matrix, rate: f64, training: bool, rng: &mut impl Rng) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(CfxError::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask_data = (0..x.rows() * x.cols())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = Matrix::new(x.rows(), x.cols(), mask_data)?;
    let mut y = x.clone();
    for (v, m) in y.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
    Ok((y, Some(mask)))
}

pub fn dropout_backward(grad: &Matrix, mask: Option<&Matrix>) -> Matrix {
    match mask {
        None => grad.clone(),
        Some(m) => {
            let mut out = grad.clone();
            for (g, k) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *g *= k;
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero_layers() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -1.0]]).unwrap();
        let id = Linear::from_parts(Matrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(id.infer(&x).unwrap(), x);
        let b = vec![0.1, 0.2];
        let zero = Linear::from_parts(Matrix::zeros(2, 3), b.clone()).unwrap();
        let y = zero.infer(&x).unwrap();
        assert!(y.iter_rows().all(|r| r == b.as_slice()));
    }

    #[test]
    fn forward_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Linear::new(4, 3, &mut rng);
        let x = Matrix::new(2, 4, (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let y = layer.infer(&x).unwrap();
        for b in 0..2 {
            for o in 0..3 {
                let mut acc = layer.bias[o];
                for i in 0..4 {
                    acc += x.get(b, i) * layer.weight.get(o, i);
                }
                assert!((y.get(b, o) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_requires_forward() {
        let mut l = Linear::from_parts(Matrix::identity(2), vec![0.0; 2]).unwrap();
        assert!(matches!(
            l.backward(&Matrix::zeros(1, 2)),
            Err(CfxError::NoForwardCache(_))
        ));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = Linear::new(3, 2, &mut rng);
        let x = Matrix::new(4, 3, vec![0.7; 12]).unwrap();
        l.forward(&x).unwrap();
        let gi = l.backward(&Matrix::zeros(4, 2)).unwrap();
        assert!(gi.as_slice().iter().all(|&v| v == 0.0));
        assert!(l.grad_weight().as_slice().iter().all(|&v| v == 0.0));
        assert!(l.grad_bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_backward_passes_gradient() {
        let mut l = Linear::from_parts(Matrix::identity(3), vec![0.0; 3]).unwrap();
        l.forward(&Matrix::row_vector(&[1.0, 2.0, 3.0])).unwrap();
        let g = Matrix::row_vector(&[0.3, -0.1, 2.0]);
        assert_eq!(l.backward(&g).unwrap(), g);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Sigmoid.derivative(0.0), 0.25);
        assert!(Activation::Sigmoid.apply(-800.0).is_finite());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::new(100, 100, vec![1.0; 10_000]).unwrap();
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        let (y, _) = dropout(&x, 0.3, true, &mut rng).unwrap();
        let zeroed = y.as_slice().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((0.27..=0.33).contains(&zeroed), "zeroed fraction {zeroed}");
        let kept = y.as_slice().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.7).abs() < 1e-12);
    }
}

//! The black-box model whose decisions the counterfactuals explain: two
//! linear layers with a ReLU between them, trained with softmax
//! cross-entropy and frozen afterwards.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{argmax, EncodedDataset};
use crate::error::{CfxError, Result};
use crate::nn::{visit_child, Activation, Linear, LinearParams, Matrix, Module, Optimizer, ParamMut};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 30,
            batch_size: 512,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: u8,
    pub scores: [f64; 2],
}

/// Intermediate values needed to push a gradient back to the input.
#[derive(Debug, Clone)]
pub struct ClassifierTape {
    hidden_pre: Matrix,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    layer1: Linear,
    layer2: Linear,
    frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub layer1: LinearParams,
    pub layer2: LinearParams,
}

impl Module for ClassifierModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        visit_child("layer1", &mut self.layer1, f);
        visit_child("layer2", &mut self.layer2, f);
    }
}

impl ClassifierModel {
    pub fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            layer1: Linear::new(inputs, hidden, rng),
            layer2: Linear::new(hidden, 2, rng),
            frozen: false,
        }
    }

    pub fn from_layers(layer1: Linear, layer2: Linear) -> Result<Self> {
        if layer1.outputs() != layer2.inputs() || layer2.outputs() != 2 {
            return Err(CfxError::Shape("classifier layers do not chain to 2 outputs".into()));
        }
        Ok(Self {
            layer1,
            layer2,
            frozen: false,
        })
    }

    pub fn inputs(&self) -> usize {
        self.layer1.inputs()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.layer1.clear_cache();
        self.layer2.clear_cache();
        self.frozen = true;
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let h = Activation::Relu.forward(&self.layer1.infer(x)?);
        self.layer2.infer(&h)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if !self.frozen {
            return Err(CfxError::NotFrozen);
        }
        if x.len() != self.inputs() {
            return Err(CfxError::Shape(format!(
                "classifier expects width {}, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let l = self.logits(&Matrix::row_vector(x))?;
        let scores = [l.get(0, 0), l.get(0, 1)];
        Ok(Prediction {
            class: argmax(&scores) as u8,
            scores,
        })
    }

    /// Predicted class of every row.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<u8>> {
        let l = self.logits(x)?;
        Ok(l.iter_rows().map(|r| argmax(r) as u8).collect())
    }

    pub fn accuracy(&self, data: &EncodedDataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict_batch(&data.matrix)?;
        let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Logits for a batch plus what is needed to differentiate them w.r.t.
    /// the input. Parameters receive no gradient.
    pub fn scores_for_loss(&self, x: &Matrix) -> Result<(Matrix, ClassifierTape)> {
        if !self.frozen {
            return Err(CfxError::NotFrozen);
        }
        let hidden_pre = self.layer1.infer(x)?;
        let logits = self.layer2.infer(&Activation::Relu.forward(&hidden_pre))?;
        Ok((logits, ClassifierTape { hidden_pre }))
    }

    pub fn input_gradient(&self, tape: &ClassifierTape, grad_logits: &Matrix) -> Result<Matrix> {
        let gh = self.layer2.input_grad(grad_logits)?;
        let gh = Activation::Relu.backward(&gh, &tape.hidden_pre);
        self.layer1.input_grad(&gh)
    }

    /// Mean softmax cross-entropy of a batch; accumulates parameter
    /// gradients when `with_grad` is set.
    pub fn cross_entropy(&mut self, x: &Matrix, labels: &[u8], with_grad: bool) -> Result<f64> {
        let pre = self.layer1.forward(x)?;
        let logits = self.layer2.forward(&Activation::Relu.forward(&pre))?;
        let n = x.rows() as f64;
        let mut loss = 0.0;
        let mut grad = Matrix::zeros(x.rows(), 2);
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            let m = row[0].max(row[1]);
            let e = [(row[0] - m).exp(), (row[1] - m).exp()];
            let z = e[0] + e[1];
            loss -= (e[y as usize] / z).ln();
            for k in 0..2 {
                let p = e[k] / z;
                grad.set(i, k, (p - f64::from(u8::from(k == y as usize))) / n);
            }
        }
        if with_grad {
            let gh = self.layer2.backward(&grad)?;
            let gh = Activation::Relu.backward(&gh, &pre);
            self.layer1.backward(&gh)?;
        }
        Ok(loss / n)
    }

    /// Hex SHA-256 over the exact bits of every parameter.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in [&self.layer1, &self.layer2] {
            for v in l.weight.as_slice().iter().chain(&l.bias) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_params(&self) -> ClassifierParams {
        ClassifierParams {
            layer1: self.layer1.to_params(),
            layer2: self.layer2.to_params(),
        }
    }

    /// Restores a frozen model.
    pub fn from_params(p: &ClassifierParams) -> Result<Self> {
        let mut m = Self::from_layers(Linear::from_params(&p.layer1)?, Linear::from_params(&p.layer2)?)?;
        m.freeze();
        Ok(m)
    }
}

/// Trains with Adam on shuffled mini-batches and keeps the epoch with the best
/// validation accuracy. The returned model is frozen.
pub fn train_classifier(
    train: &EncodedDataset,
    val: &EncodedDataset,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    let positives = train.labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == train.len() {
        return Err(CfxError::Data(
            "classifier training data contains a single class".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(CfxError::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ClassifierModel::new(train.matrix.cols(), config.hidden, &mut rng);
    let mut opt = Optimizer::adam(config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, model.clone());
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = train.matrix.select_rows(batch);
            let y: Vec<u8> = batch.iter().map(|&i| train.labels[i]).collect();
            model.zero_grad();
            let loss = model.cross_entropy(&x, &y, true)?;
            if !loss.is_finite() {
                return Err(CfxError::Diverged(epoch + 1));
            }
            total += loss * batch.len() as f64;
            opt.step(&mut model)?;
        }
        let acc = model.accuracy(if val.is_empty() { train } else { val })?;
        log::debug!(
            "classifier epoch {}: loss {:.4} val acc {:.4}",
            epoch + 1,
            total / train.len() as f64,
            acc
        );
        if acc > best.0 {
            best = (acc, model.clone());
        }
    }
    let mut model = best.1;
    model.freeze();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{numeric_gradient, relative_error, FD_STEP};
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> EncodedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let c = if y == 1 { 0.8 } else { 0.2 };
            rows.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
            labels.push(y);
        }
        EncodedDataset {
            matrix: Matrix::from_rows(&rows).unwrap(),
            labels,
        }
    }

    #[test]
    fn separable_blobs() {
        let cfg = ClassifierConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let m = train_classifier(&blobs(400, 1), &blobs(200, 2), &cfg, 7).unwrap();
        assert!(m.is_frozen());
        assert!(m.accuracy(&blobs(200, 2)).unwrap() > 0.99);
    }

    #[test]
    fn single_class_rejected() {
        let mut d = blobs(20, 1);
        d.labels.iter_mut().for_each(|y| *y = 0);
        assert!(train_classifier(&d, &d, &ClassifierConfig::default(), 1).is_err());
    }

    #[test]
    fn tie_breaks_to_zero_and_zero_input() {
        let l1 = Linear::from_parts(Matrix::zeros(3, 2), vec![0.0; 3]).unwrap();
        let l2 = Linear::from_parts(Matrix::zeros(2, 3), vec![0.0; 2]).unwrap();
        let mut m = ClassifierModel::from_layers(l1, l2).unwrap();
        assert!(matches!(m.predict(&[0.0, 0.0]), Err(CfxError::NotFrozen)));
        m.freeze();
        let p = m.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(p.scores, [0.0, 0.0]);
        assert_eq!(p.class, 0);
        assert!(m.predict(&[0.0]).is_err());
    }

    #[test]
    fn argmax_picks_higher_score() {
        let l1 = Linear::from_parts(Matrix::identity(2), vec![0.0; 2]).unwrap();
        let l2 = Linear::from_parts(Matrix::identity(2), vec![0.0; 2]).unwrap();
        let mut m = ClassifierModel::from_layers(l1, l2).unwrap();
        m.freeze();
        let p = m.predict(&[0.2, 0.9]).unwrap();
        assert_eq!(p.class, 1);
        assert_eq!(m.predict(&[0.2, 0.9]).unwrap(), p);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = ClassifierModel::new(5, 8, &mut rng);
        m.freeze();
        let x = vec![0.1, 0.9, 0.4, 0.3, 0.7];
        let w = [0.7, -1.3];
        let f = |v: &[f64]| {
            let l = m.logits(&Matrix::row_vector(v)).unwrap();
            w[0] * l.get(0, 0) + w[1] * l.get(0, 1)
        };
        let (logits, tape) = m.scores_for_loss(&Matrix::row_vector(&x)).unwrap();
        assert_eq!(logits.shape(), (1, 2));
        let g = m.input_gradient(&tape, &Matrix::row_vector(&w)).unwrap();
        let n = numeric_gradient(f, &x, FD_STEP);
        for (a, b) in g.as_slice().iter().zip(&n) {
            assert!(relative_error(*a, *b) < 1e-3);
        }
    }
}

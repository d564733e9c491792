//! Conditional VAE that proposes counterfactuals for the mutable columns.
//!
//! The encoder sees the mutable part of an encoded instance plus the desired
//! class as one extra input; the decoder sees a latent code plus the same
//! class scalar. Immutable columns never enter the network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingState;
use crate::error::{CfxError, Result};
use crate::nn::{dropout, dropout_backward, visit_child, Activation, Linear, LinearParams, Matrix, Module, ParamMut};

pub const LATENT_DIM: usize = 10;
pub const ENCODER_HIDDEN: [usize; 4] = [20, 16, 14, 12];
pub const DECODER_HIDDEN: [usize; 4] = [12, 14, 16, 18];

/// Encoded columns the generator may change, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutableMask {
    columns: Vec<usize>,
    width: usize,
}

impl MutableMask {
    pub fn new(columns: Vec<usize>, width: usize) -> Result<Self> {
        if columns.windows(2).any(|w| w[0] >= w[1]) || columns.iter().any(|&c| c >= width) {
            return Err(CfxError::Shape(
                "mutable columns must be strictly increasing and inside the width".into(),
            ));
        }
        Ok(Self { columns, width })
    }

    pub fn from_encoding(state: &EncodingState) -> Self {
        Self {
            columns: state.mutable_columns(),
            width: state.width,
        }
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Full encoded width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mutable_width(&self) -> usize {
        self.columns.len()
    }

    pub fn immutable_columns(&self) -> Vec<usize> {
        (0..self.width)
            .filter(|c| self.columns.binary_search(c).is_err())
            .collect()
    }

    pub fn gather(&self, full: &[f64]) -> Result<Vec<f64>> {
        self.check_full(full.len())?;
        Ok(self.columns.iter().map(|&c| full[c]).collect())
    }

    pub fn gather_matrix(&self, full: &Matrix) -> Result<Matrix> {
        self.check_full(full.cols())?;
        Ok(full.select_cols(&self.columns))
    }

    /// Copy of `full` with the mutable columns replaced by `mutable`.
    pub fn scatter(&self, full: &[f64], mutable: &[f64]) -> Result<Vec<f64>> {
        self.check_full(full.len())?;
        if mutable.len() != self.columns.len() {
            return Err(CfxError::Shape(format!(
                "expected {} mutable values, got {}",
                self.columns.len(),
                mutable.len()
            )));
        }
        let mut out = full.to_vec();
        for (&c, &v) in self.columns.iter().zip(mutable) {
            out[c] = v;
        }
        Ok(out)
    }

    pub fn scatter_matrix(&self, full: &Matrix, mutable: &Matrix) -> Result<Matrix> {
        if full.rows() != mutable.rows() {
            return Err(CfxError::Shape("row counts differ".into()));
        }
        let mut out = full.clone();
        for r in 0..full.rows() {
            let row = self.scatter(full.row(r), mutable.row(r))?;
            out.row_mut(r).copy_from_slice(&row);
        }
        Ok(out)
    }

    fn check_full(&self, len: usize) -> Result<()> {
        if len != self.width {
            return Err(CfxError::Shape(format!("mask is for width {}, got {len}", self.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    encoder: Vec<Linear>,
    mu_head: Linear,
    logvar_head: Linear,
    decoder: Vec<Linear>,
    dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub encoder: Vec<LinearParams>,
    pub mu_head: LinearParams,
    pub logvar_head: LinearParams,
    pub decoder: Vec<LinearParams>,
    pub dropout: f64,
}

/// Everything a training step needs from a forward pass.
#[derive(Debug, Clone)]
pub struct VaeForward {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub z: Matrix,
    /// Relaxed decoder output for the mutable columns.
    pub output: Matrix,
    tape: VaeTape,
}

#[derive(Debug, Clone)]
struct VaeTape {
    enc_pre: Vec<Matrix>,
    enc_masks: Vec<Option<Matrix>>,
    dec_pre: Vec<Matrix>,
    dec_masks: Vec<Option<Matrix>>,
    out_pre: Matrix,
    eps: Matrix,
}

impl VaeForward {
    /// Smallest |pre-activation| over every ReLU unit in the pass.
    pub fn relu_margin(&self) -> f64 {
        let t = &self.tape;
        t.enc_pre
            .iter()
            .chain(&t.dec_pre)
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Module for VaeModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        for (i, l) in self.encoder.iter_mut().enumerate() {
            visit_child(&format!("encoder.{i}"), l, f);
        }
        visit_child("mu_head", &mut self.mu_head, f);
        visit_child("logvar_head", &mut self.logvar_head, f);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            visit_child(&format!("decoder.{i}"), l, f);
        }
    }
}

/// Appends the desired class as -1 / +1.
fn condition(x: &Matrix, desired: &[u8]) -> Result<Matrix> {
    let col: Vec<f64> = desired.iter().map(|&d| 2.0 * f64::from(d) - 1.0).collect();
    x.with_column(&col)
}

fn chain(widths: &[usize], rng: &mut ChaCha8Rng) -> Vec<Linear> {
    widths.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect()
}

impl VaeModel {
    /// Fresh model for `mutable_width` inputs with the default layer sizes.
    pub fn new(mutable_width: usize, latent_dim: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if mutable_width == 0 || latent_dim == 0 {
            return Err(CfxError::Config(
                "VAE needs at least one mutable column and latent dim".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(CfxError::Config(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let mut enc = vec![mutable_width + 1];
        enc.extend(ENCODER_HIDDEN);
        let last = *enc.last().unwrap();
        let mut dec = vec![latent_dim + 1];
        dec.extend(DECODER_HIDDEN);
        dec.push(mutable_width);
        let encoder = chain(&enc, rng);
        let mu_head = Linear::new(last, latent_dim, rng);
        let logvar_head = Linear::new(last, latent_dim, rng);
        let decoder = chain(&dec, rng);
        Ok(Self {
            encoder,
            mu_head,
            logvar_head,
            decoder,
            dropout,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.outputs()
    }

    pub fn mutable_width(&self) -> usize {
        self.encoder[0].inputs() - 1
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout
    }

    /// Sets the decoder output bias so an all-zero hidden state decodes to
    /// `means` (clamped away from 0 and 1).
    pub fn init_output_bias(&mut self, means: &[f64]) -> Result<()> {
        let last = self.decoder.last_mut().expect("decoder has layers");
        if means.len() != last.bias.len() {
            return Err(CfxError::Shape("one mean per mutable column is required".into()));
        }
        for (b, m) in last.bias.iter_mut().zip(means) {
            let p = m.clamp(0.01, 0.99);
            *b = (p / (1.0 - p)).ln();
        }
        Ok(())
    }

    /// Mutable access to the two latent heads, `(mu, logvar)`.
    pub fn heads_mut(&mut self) -> (&mut Linear, &mut Linear) {
        (&mut self.mu_head, &mut self.logvar_head)
    }

    fn check_width(&self, x: &Matrix, desired: &[u8]) -> Result<()> {
        if x.cols() != self.mutable_width() {
            return Err(CfxError::Shape(format!(
                "encoder expects {} mutable columns, got {}",
                self.mutable_width(),
                x.cols()
            )));
        }
        if x.rows() != desired.len() {
            return Err(CfxError::Shape("one desired class per row is required".into()));
        }
        Ok(())
    }

    /// Posterior statistics in evaluation mode (no dropout).
    pub fn encode_latent(&self, x_mutable: &Matrix, desired: &[u8]) -> Result<(Matrix, Matrix)> {
        self.check_width(x_mutable, desired)?;
        let mut h = condition(x_mutable, desired)?;
        for l in &self.encoder {
            h = Activation::Relu.forward(&l.infer(&h)?);
        }
        Ok((self.mu_head.infer(&h)?, self.logvar_head.infer(&h)?))
    }

    /// Decoded mutable columns in evaluation mode.
    pub fn decode_cf(&self, z: &Matrix, desired: &[u8]) -> Result<Matrix> {
        if z.cols() != self.latent_dim() {
            return Err(CfxError::Shape(format!(
                "decoder expects latent width {}, got {}",
                self.latent_dim(),
                z.cols()
            )));
        }
        if z.rows() != desired.len() {
            return Err(CfxError::Shape("one desired class per row is required".into()));
        }
        let mut h = condition(z, desired)?;
        let last = self.decoder.len() - 1;
        for (i, l) in self.decoder.iter().enumerate() {
            let act = if i == last {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            h = act.forward(&l.infer(&h)?);
        }
        Ok(h)
    }

    /// Training-mode pass that records what [`VaeModel::backward`] needs.
    /// `extra_noise` scales additional Gaussian noise added to `z`.
    pub fn forward_train(
        &mut self,
        x_mutable: &Matrix,
        desired: &[u8],
        training: bool,
        extra_noise: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<VaeForward> {
        self.check_width(x_mutable, desired)?;
        let rate = self.dropout;
        let mut h = condition(x_mutable, desired)?;
        let mut enc_pre = Vec::with_capacity(self.encoder.len());
        let mut enc_masks = Vec::with_capacity(self.encoder.len());
        for l in &mut self.encoder {
            let pre = l.forward(&h)?;
            let (a, mask) = dropout(&Activation::Relu.forward(&pre), rate, training, rng)?;
            enc_pre.push(pre);
            enc_masks.push(mask);
            h = a;
        }
        let mu = self.mu_head.forward(&h)?;
        let logvar = self.logvar_head.forward(&h)?;
        let eps = standard_normal(mu.rows(), mu.cols(), rng);
        let mut z = reparameterize(&mu, &logvar, &eps);
        if extra_noise > 0.0 {
            let noise = standard_normal(z.rows(), z.cols(), rng);
            for (v, n) in z.as_mut_slice().iter_mut().zip(noise.as_slice()) {
                *v += extra_noise * n;
            }
        }

        let mut h = condition(&z, desired)?;
        let last = self.decoder.len() - 1;
        let mut dec_pre = Vec::with_capacity(last);
        let mut dec_masks = Vec::with_capacity(last);
        let mut out_pre = None;
        for (i, l) in self.decoder.iter_mut().enumerate() {
            let pre = l.forward(&h)?;
            if i == last {
                h = Activation::Sigmoid.forward(&pre);
                out_pre = Some(pre);
            } else {
                let (a, mask) = dropout(&Activation::Relu.forward(&pre), rate, training, rng)?;
                dec_pre.push(pre);
                dec_masks.push(mask);
                h = a;
            }
        }
        Ok(VaeForward {
            mu,
            logvar,
            z,
            output: h,
            tape: VaeTape {
                enc_pre,
                enc_masks,
                dec_pre,
                dec_masks,
                out_pre: out_pre.expect("decoder has layers"),
                eps,
            },
        })
    }

    /// Accumulates parameter gradients given the upstream gradient of the
    /// decoder output and any direct gradients on `mu` / `logvar`. Returns
    /// the gradient that reached `z`.
    pub fn backward(
        &mut self,
        fwd: &VaeForward,
        grad_output: &Matrix,
        grad_mu: &Matrix,
        grad_logvar: &Matrix,
    ) -> Result<Matrix> {
        let t = &fwd.tape;
        let latent = self.latent_dim();
        let last = self.decoder.len() - 1;
        let mut g = Activation::Sigmoid.backward(grad_output, &t.out_pre);
        for i in (0..=last).rev() {
            if i < last {
                g = dropout_backward(&g, t.dec_masks[i].as_ref());
                g = Activation::Relu.backward(&g, &t.dec_pre[i]);
            }
            g = self.decoder[i].backward(&g)?;
        }
        let grad_z = g.select_cols(&(0..latent).collect::<Vec<_>>());

        let mut g_mu = grad_z.clone();
        g_mu.add_assign(grad_mu)?;
        let mut g_logvar = grad_logvar.clone();
        for r in 0..grad_z.rows() {
            for c in 0..latent {
                let std = (0.5 * fwd.logvar.get(r, c)).exp();
                let v = g_logvar.get(r, c) + grad_z.get(r, c) * t.eps.get(r, c) * 0.5 * std;
                g_logvar.set(r, c, v);
            }
        }
        let mut g = self.mu_head.backward(&g_mu)?;
        g.add_assign(&self.logvar_head.backward(&g_logvar)?)?;
        for i in (0..self.encoder.len()).rev() {
            g = dropout_backward(&g, t.enc_masks[i].as_ref());
            g = Activation::Relu.backward(&g, &t.enc_pre[i]);
            g = self.encoder[i].backward(&g)?;
        }
        Ok(grad_z)
    }

    pub fn all_finite(&self) -> bool {
        let layers = self
            .encoder
            .iter()
            .chain([&self.mu_head, &self.logvar_head])
            .chain(&self.decoder);
        for l in layers {
            if !l.weight.all_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return false;
            }
        }
        true
    }

    /// Drops cached activations left over from training.
    pub fn clear_caches(&mut self) {
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            l.clear_cache();
        }
        self.mu_head.clear_cache();
        self.logvar_head.clear_cache();
    }

    pub fn to_params(&self) -> VaeParams {
        VaeParams {
            encoder: self.encoder.iter().map(Linear::to_params).collect(),
            mu_head: self.mu_head.to_params(),
            logvar_head: self.logvar_head.to_params(),
            decoder: self.decoder.iter().map(Linear::to_params).collect(),
            dropout: self.dropout,
        }
    }

    pub fn from_params(p: &VaeParams) -> Result<Self> {
        let encoder = p.encoder.iter().map(Linear::from_params).collect::<Result<Vec<_>>>()?;
        let decoder = p.decoder.iter().map(Linear::from_params).collect::<Result<Vec<_>>>()?;
        let model = Self {
            encoder,
            mu_head: Linear::from_params(&p.mu_head)?,
            logvar_head: Linear::from_params(&p.logvar_head)?,
            decoder,
            dropout: p.dropout,
        };
        model.check_chain()?;
        Ok(model)
    }

    fn check_chain(&self) -> Result<()> {
        let bad = |what: &str| Err(CfxError::Shape(format!("VAE layers do not chain: {what}")));
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return bad("empty encoder or decoder");
        }
        if self.encoder.windows(2).any(|w| w[0].outputs() != w[1].inputs())
            || self.decoder.windows(2).any(|w| w[0].outputs() != w[1].inputs())
        {
            return bad("hidden widths");
        }
        let top = self.encoder.last().unwrap().outputs();
        if self.mu_head.inputs() != top
            || self.logvar_head.inputs() != top
            || self.mu_head.outputs() != self.logvar_head.outputs()
        {
            return bad("latent heads");
        }
        if self.decoder[0].inputs() != self.latent_dim() + 1
            || self.decoder.last().unwrap().outputs() != self.mutable_width()
        {
            return bad("decoder ends");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate");
        }
        Ok(())
    }
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).expect("sized")
}

/// `mu + exp(logvar / 2) * eps`.
pub fn reparameterize(mu: &Matrix, logvar: &Matrix, eps: &Matrix) -> Matrix {
    let mut z = mu.clone();
    for (i, v) in z.as_mut_slice().iter_mut().enumerate() {
        *v += (0.5 * logvar.as_slice()[i]).exp() * eps.as_slice()[i];
    }
    z
}

/// Draws `z` for every row of `(mu, logvar)`.
pub fn sample_latent(mu: &Matrix, logvar: &Matrix, rng: &mut impl Rng) -> Matrix {
    let eps = standard_normal(mu.rows(), mu.cols(), rng);
    reparameterize(mu, logvar, &eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(seed: u64) -> VaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VaeModel::new(7, LATENT_DIM, 0.3, &mut rng).unwrap()
    }

    fn batch(n: usize) -> Matrix {
        Matrix::new(n, 7, (0..n * 7).map(|i| (i % 5) as f64 / 4.0).collect()).unwrap()
    }

    #[test]
    fn shapes_chain() {
        let m = model(1);
        assert_eq!(m.mutable_width(), 7);
        assert_eq!(m.latent_dim(), 10);
        let (mu, lv) = m.encode_latent(&batch(4), &[0, 1, 0, 1]).unwrap();
        assert_eq!((mu.shape(), lv.shape()), ((4, 10), (4, 10)));
        let out = m.decode_cf(&mu, &[0, 1, 0, 1]).unwrap();
        assert_eq!(out.shape(), (4, 7));
        assert!(out.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = model(1);
        let x = Matrix::zeros(1, 6);
        assert!(m.encode_latent(&x, &[0]).is_err());
        assert!(m.decode_cf(&Matrix::zeros(1, 9), &[0]).is_err());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let m = model(2);
        let x = batch(3);
        assert_eq!(
            m.encode_latent(&x, &[1, 1, 0]).unwrap(),
            m.encode_latent(&x, &[1, 1, 0]).unwrap()
        );
    }

    #[test]
    fn zero_heads_give_standard_posterior() {
        let mut m = model(3);
        let (mu_head, lv_head) = m.heads_mut();
        for l in [mu_head, lv_head] {
            l.weight = Matrix::zeros(l.outputs(), l.inputs());
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let (mu, lv) = m.encode_latent(&batch(2), &[0, 1]).unwrap();
        assert!(mu.as_slice().iter().chain(lv.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn vanishing_variance_returns_mean() {
        let mu = Matrix::new(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let lv = Matrix::new(1, 3, vec![-40.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = sample_latent(&mu, &lv, &mut rng);
        for (a, b) in z.as_slice().iter().zip(mu.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = sample_latent(&Matrix::zeros(10_000, 10), &Matrix::zeros(10_000, 10), &mut rng);
        for c in 0..10 {
            let col: Vec<f64> = (0..10_000).map(|r| z.get(r, c)).collect();
            let mean = col.iter().sum::<f64>() / 1e4;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1e4;
            assert!(mean.abs() <= 0.05, "mean {mean}");
            assert!((0.9..=1.1).contains(&var), "var {var}");
        }
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let mu = Matrix::zeros(2, 10);
        let a = sample_latent(&mu, &mu, &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_latent(&mu, &mu, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn params_round_trip() {
        let m = model(5);
        let back = VaeModel::from_params(&m.to_params()).unwrap();
        let x = batch(2);
        assert_eq!(
            m.encode_latent(&x, &[0, 1]).unwrap(),
            back.encode_latent(&x, &[0, 1]).unwrap()
        );
        let mut p = m.to_params();
        p.decoder.pop();
        assert!(VaeModel::from_params(&p).is_err());
    }

    #[test]
    fn mask_gather_scatter() {
        let mask = MutableMask::new(vec![0, 2, 3], 5).unwrap();
        assert_eq!(mask.immutable_columns(), vec![1, 4]);
        let full = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(mask.gather(&full).unwrap(), vec![0.1, 0.3, 0.4]);
        let back = mask.scatter(&full, &[0.9, 0.8, 0.7]).unwrap();
        assert_eq!(back, vec![0.9, 0.2, 0.8, 0.7, 0.5]);
        assert!(mask.scatter(&full, &[0.1]).is_err());
        assert!(MutableMask::new(vec![2, 1], 5).is_err());
    }
}

//! One-hidden-layer feed-forward network.
//!
//! Hidden units are logistic with steepness `lambda` and no bias; the output
//! unit is linear or logistic. Inputs are rows of `w_ih` (`d_in × H`), so
//! hidden unit `k` sees `Σ_j g_j · w_ih[j, k]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    check_len, outer_acc, sigmoid, sigmoid_prime_from_output, vecmat_into, Matrix, Vector,
};
use crate::model::OutputActivation;
use crate::params::Parameters;
use crate::train::{fit, TrainConfig, Trained};

#[derive(Debug, Clone, PartialEq)]
pub struct FfnnModel {
    /// `d_in × H`.
    pub w_ih: Matrix,
    /// `H × 1`.
    pub w_ho: Matrix,
    pub lambda: f64,
    pub output: OutputActivation,
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnnPass {
    pub hidden: Vector,
    pub output: f64,
}

/// `∂ε/∂w` for every weight, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnnGrads {
    pub w_ih: Matrix,
    pub w_ho: Matrix,
}

/// Squared error `(output - target)²`.
#[inline]
pub fn loss(output: f64, target: f64) -> f64 {
    let e = output - target;
    e * e
}

impl FfnnModel {
    pub fn new(w_ih: Matrix, w_ho: Matrix, lambda: f64, output: OutputActivation) -> Result<Self> {
        check_len("w_ho rows vs hidden size", w_ih.cols(), w_ho.rows())?;
        check_len("w_ho cols", 1, w_ho.cols())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda must be positive and finite"));
        }
        Ok(FfnnModel {
            w_ih,
            w_ho,
            lambda,
            output,
        })
    }

    pub fn zeros(d_in: usize, hidden: usize, lambda: f64, output: OutputActivation) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        Self::new(Matrix::zeros(d_in, hidden), Matrix::zeros(hidden, 1), lambda, output)
    }

    /// Random initial weights per `cfg`: `w_ih` is drawn first, then `w_ho`.
    pub fn init(d_in: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if d_in == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        let h = cfg.hidden;
        let mut rng = cfg.init_rng();
        let w_ih = Matrix::random_uniform(d_in, h, cfg.init_range_for(d_in), &mut rng);
        let w_ho = Matrix::random_uniform(h, 1, cfg.init_range_for(h), &mut rng);
        Self::new(w_ih, w_ho, cfg.lambda, cfg.output)
    }

    pub fn d_in(&self) -> usize {
        self.w_ih.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn forward(&self, g: &[f64]) -> Result<FfnnPass> {
        check_len("ffnn input", self.d_in(), g.len())?;
        let mut hidden = vec![0.0; self.hidden()];
        let output = self.forward_into(g, &mut hidden);
        Ok(FfnnPass {
            hidden: Vector::new(hidden)?,
            output,
        })
    }

    pub fn predict(&self, g: &[f64]) -> Result<f64> {
        check_len("ffnn input", self.d_in(), g.len())?;
        let mut hidden = vec![0.0; self.hidden()];
        Ok(self.forward_into(g, &mut hidden))
    }

    fn forward_into(&self, g: &[f64], hidden: &mut [f64]) -> f64 {
        vecmat_into(g, &self.w_ih, hidden);
        for h in hidden.iter_mut() {
            *h = sigmoid(*h, self.lambda);
        }
        let z: f64 = hidden
            .iter()
            .zip(self.w_ho.as_slice())
            .map(|(h, w)| h * w)
            .sum();
        self.output.apply(z, self.lambda)
    }

    pub fn backward(&self, g: &[f64], target: f64) -> Result<FfnnGrads> {
        check_len("ffnn input", self.d_in(), g.len())?;
        if !target.is_finite() {
            return Err(Error::NonFinite("target".into()));
        }
        let mut grads = FfnnGrads::zeros_like(self);
        let mut scratch = Scratch::new(self.hidden());
        self.loss_and_grad(g, target, &mut scratch, &mut grads);
        Ok(grads)
    }

    /// Writes the gradient of `(o - target)²` into `grads` and returns the
    /// loss. No shape checks.
    pub(crate) fn loss_and_grad(
        &self,
        g: &[f64],
        target: f64,
        scratch: &mut Scratch,
        grads: &mut FfnnGrads,
    ) -> f64 {
        let hidden = &mut scratch.hidden;
        let o = self.forward_into(g, hidden);
        // ∂ε/∂z_out
        let dz = 2.0 * (o - target) * self.output.derivative_from_output(o, self.lambda);
        for ((gho, &h), (d, &w)) in grads
            .w_ho
            .as_mut_slice()
            .iter_mut()
            .zip(hidden.iter())
            .zip(scratch.delta.iter_mut().zip(self.w_ho.as_slice()))
        {
            *gho = dz * h;
            *d = dz * w * sigmoid_prime_from_output(h, self.lambda);
        }
        grads.w_ih.fill(0.0);
        outer_acc(&mut grads.w_ih, g, &scratch.delta);
        loss(o, target)
    }
}

pub(crate) struct Scratch {
    hidden: Vec<f64>,
    delta: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(hidden: usize) -> Self {
        Scratch {
            hidden: vec![0.0; hidden],
            delta: vec![0.0; hidden],
        }
    }
}

impl FfnnGrads {
    pub fn zeros_like(model: &FfnnModel) -> Self {
        FfnnGrads {
            w_ih: Matrix::zeros(model.d_in(), model.hidden()),
            w_ho: Matrix::zeros(model.hidden(), 1),
        }
    }
}

impl Parameters for FfnnModel {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w_ih", &self.w_ih), ("w_ho", &self.w_ho)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![("w_ih", &mut self.w_ih), ("w_ho", &mut self.w_ho)]
    }
}

impl Parameters for FfnnGrads {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w_ih", &self.w_ih), ("w_ho", &self.w_ho)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![("w_ih", &mut self.w_ih), ("w_ho", &mut self.w_ho)]
    }
}

fn check_samples(data: &[(Vector, f64)]) -> Result<usize> {
    let d = data.first().ok_or(Error::Empty("training set"))?.0.len();
    for (g, t) in data {
        check_len("training sample dimension", d, g.len())?;
        if !t.is_finite() {
            return Err(Error::NonFinite("training target".into()));
        }
    }
    Ok(d)
}

/// Trains a fresh network on `(features, target)` pairs.
pub fn train(data: &[(Vector, f64)], cfg: &TrainConfig) -> Result<FfnnModel> {
    train_with_history(data, cfg).map(|t| t.model)
}

pub fn train_with_history(data: &[(Vector, f64)], cfg: &TrainConfig) -> Result<Trained<FfnnModel>> {
    cfg.validate()?;
    let d = check_samples(data)?;
    let model = FfnnModel::init(d, cfg)?;
    train_from(model, data, cfg)
}

/// Continues training from `model`. `cfg.hidden`, `cfg.lambda` and
/// `cfg.output` are ignored in favour of the model's own.
pub fn train_from(
    model: FfnnModel,
    data: &[(Vector, f64)],
    cfg: &TrainConfig,
) -> Result<Trained<FfnnModel>> {
    let d = check_samples(data)?;
    check_len("model input dimension", model.d_in(), d)?;
    let grads = FfnnGrads::zeros_like(&model);
    let mut scratch = Scratch::new(model.hidden());
    fit(model, grads, data, cfg, |m, (g, t), grads| {
        m.loss_and_grad(g, *t, &mut scratch, grads)
    })
}

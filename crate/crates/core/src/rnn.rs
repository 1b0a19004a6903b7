//! Elman recurrent network trained by backpropagation through time.
//!
//! ```text
//! h^t_k = σ_λ( Σ_j g^t_j · w_ih[j,k] + Σ_h' h^{t-1}_h' · w_hh[h',k] ),  h^0 = 0
//! o     = act( Σ_k h^T_k · w_ho[k] )
//! ε     = (o - v)²
//! ```
//!
//! The target is only known at the last step, so the error enters the
//! unrolled network at `t = T` and flows back through `w_hh`:
//!
//! ```text
//! δ^T_j = σ'(h^T_j) · ∂ε/∂z_out · w_ho[j]
//! δ^t_j = σ'(h^t_j) · Σ_h' w_hh[j,h'] · δ^{t+1}_h'
//! ∂ε/∂w_ih[i,j] = Σ_{t=1..T} g^t_i δ^t_j
//! ∂ε/∂w_hh[i,j] = Σ_{t=2..T} h^{t-1}_i δ^t_j
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    check_len, matvec_into, outer_acc, sigmoid, sigmoid_prime_from_output, vecmat_acc,
    vecmat_into, Matrix, Vector,
};
use crate::model::OutputActivation;
use crate::params::Parameters;
use crate::train::{fit, TrainConfig, Trained};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    /// `d_in × H`.
    pub w_ih: Matrix,
    /// `H × H`; row is the source unit at `t-1`, column the target at `t`.
    pub w_hh: Matrix,
    /// `H × 1`.
    pub w_ho: Matrix,
    pub lambda: f64,
    pub output: OutputActivation,
}

/// Everything one forward pass computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrace {
    pub inputs: Vec<Vector>,
    /// `h^1 ..= h^T`.
    pub hidden_states: Vec<Vector>,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnGrads {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub w_ho: Matrix,
}

impl RnnModel {
    pub fn new(
        w_ih: Matrix,
        w_hh: Matrix,
        w_ho: Matrix,
        lambda: f64,
        output: OutputActivation,
    ) -> Result<Self> {
        let h = w_ih.cols();
        check_len("w_hh rows", h, w_hh.rows())?;
        check_len("w_hh cols", h, w_hh.cols())?;
        check_len("w_ho rows", h, w_ho.rows())?;
        check_len("w_ho cols", 1, w_ho.cols())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda must be positive and finite"));
        }
        Ok(RnnModel {
            w_ih,
            w_hh,
            w_ho,
            lambda,
            output,
        })
    }

    pub fn zeros(d_in: usize, hidden: usize, lambda: f64, output: OutputActivation) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        Self::new(
            Matrix::zeros(d_in, hidden),
            Matrix::zeros(hidden, hidden),
            Matrix::zeros(hidden, 1),
            lambda,
            output,
        )
    }

    /// Draws `w_ih`, then `w_ho`, then `w_hh`, so the first two equal those
    /// of an [`FfnnModel`](crate::FfnnModel) built from the same config.
    pub fn init(d_in: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if d_in == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        let h = cfg.hidden;
        let mut rng = cfg.init_rng();
        let w_ih = Matrix::random_uniform(d_in, h, cfg.init_range_for(d_in), &mut rng);
        let w_ho = Matrix::random_uniform(h, 1, cfg.init_range_for(h), &mut rng);
        let w_hh = Matrix::random_uniform(h, h, cfg.init_range_for(h), &mut rng);
        Self::new(w_ih, w_hh, w_ho, cfg.lambda, cfg.output)
    }

    pub fn d_in(&self) -> usize {
        self.w_ih.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_ih.cols()
    }

    fn check_seq<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Empty("input sequence"));
        }
        for g in seq {
            check_len("rnn input", self.d_in(), g.as_ref().len())?;
        }
        Ok(())
    }

    pub fn forward<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<RnnTrace> {
        self.check_seq(seq)?;
        let h = self.hidden();
        let mut hs = Vec::new();
        let output = self.forward_into(seq, &mut hs);
        Ok(RnnTrace {
            inputs: seq
                .iter()
                .map(|g| Vector::from_slice(g.as_ref()))
                .collect::<Result<_>>()?,
            hidden_states: hs
                .chunks_exact(h)
                .map(Vector::from_slice)
                .collect::<Result<_>>()?,
            output,
        })
    }

    pub fn predict<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<f64> {
        self.check_seq(seq)?;
        let mut hs = Vec::new();
        Ok(self.forward_into(seq, &mut hs))
    }

    /// Fills `hs` with `h^1..h^T` back to back and returns the output.
    fn forward_into<V: AsRef<[f64]>>(&self, seq: &[V], hs: &mut Vec<f64>) -> f64 {
        let h = self.hidden();
        hs.clear();
        hs.resize(seq.len() * h, 0.0);
        for (t, g) in seq.iter().enumerate() {
            let (done, rest) = hs.split_at_mut(t * h);
            let cur = &mut rest[..h];
            vecmat_into(g.as_ref(), &self.w_ih, cur);
            if t > 0 {
                vecmat_acc(&done[(t - 1) * h..], &self.w_hh, cur);
            }
            for x in cur.iter_mut() {
                *x = sigmoid(*x, self.lambda);
            }
        }
        let last = &hs[(seq.len() - 1) * h..];
        let z: f64 = last.iter().zip(self.w_ho.as_slice()).map(|(a, b)| a * b).sum();
        self.output.apply(z, self.lambda)
    }

    /// Exact gradients of `(o - target)²` with respect to all three weight
    /// sets.
    pub fn bptt<V: AsRef<[f64]>>(&self, seq: &[V], target: f64) -> Result<RnnGrads> {
        self.check_seq(seq)?;
        if !target.is_finite() {
            return Err(Error::NonFinite("target".into()));
        }
        let mut grads = RnnGrads::zeros_like(self);
        let mut scratch = Scratch::default();
        self.loss_and_grad(seq, target, &mut scratch, &mut grads);
        Ok(grads)
    }

    pub(crate) fn loss_and_grad<V: AsRef<[f64]>>(
        &self,
        seq: &[V],
        target: f64,
        scratch: &mut Scratch,
        grads: &mut RnnGrads,
    ) -> f64 {
        let h = self.hidden();
        let o = self.forward_into(seq, &mut scratch.hs);
        let hs = &scratch.hs;
        let t_last = seq.len() - 1;
        let dz = 2.0 * (o - target) * self.output.derivative_from_output(o, self.lambda);

        scratch.delta.clear();
        scratch.delta.resize(h, 0.0);
        scratch.carry.clear();
        scratch.carry.resize(h, 0.0);
        let h_last = &hs[t_last * h..];
        for (j, (gho, &hj)) in grads.w_ho.as_mut_slice().iter_mut().zip(h_last).enumerate() {
            *gho = dz * hj;
            scratch.delta[j] = dz * self.w_ho.as_slice()[j] * sigmoid_prime_from_output(hj, self.lambda);
        }

        grads.w_ih.fill(0.0);
        grads.w_hh.fill(0.0);
        for t in (0..=t_last).rev() {
            outer_acc(&mut grads.w_ih, seq[t].as_ref(), &scratch.delta);
            if t == 0 {
                break;
            }
            let h_prev = &hs[(t - 1) * h..t * h];
            outer_acc(&mut grads.w_hh, h_prev, &scratch.delta);
            matvec_into(&self.w_hh, &scratch.delta, &mut scratch.carry);
            for (c, &hp) in scratch.carry.iter_mut().zip(h_prev) {
                *c *= sigmoid_prime_from_output(hp, self.lambda);
            }
            core::mem::swap(&mut scratch.delta, &mut scratch.carry);
        }
        crate::ffnn::loss(o, target)
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    hs: Vec<f64>,
    delta: Vec<f64>,
    carry: Vec<f64>,
}

impl RnnGrads {
    pub fn zeros_like(model: &RnnModel) -> Self {
        let (d, h) = (model.d_in(), model.hidden());
        RnnGrads {
            w_ih: Matrix::zeros(d, h),
            w_hh: Matrix::zeros(h, h),
            w_ho: Matrix::zeros(h, 1),
        }
    }
}

macro_rules! rnn_blocks {
    ($t:ty) => {
        impl Parameters for $t {
            fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
                vec![("w_ih", &self.w_ih), ("w_hh", &self.w_hh), ("w_ho", &self.w_ho)]
            }

            fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
                vec![
                    ("w_ih", &mut self.w_ih),
                    ("w_hh", &mut self.w_hh),
                    ("w_ho", &mut self.w_ho),
                ]
            }
        }
    };
}

rnn_blocks!(RnnModel);
rnn_blocks!(RnnGrads);

/// Checks a sequence training set and returns its feature dimension.
pub(crate) fn check_sequences(data: &[(Vec<Vector>, f64)]) -> Result<usize> {
    let first = data.first().ok_or(Error::Empty("training set"))?;
    let d = first.0.first().ok_or(Error::Empty("input sequence"))?.len();
    for (seq, t) in data {
        if seq.is_empty() {
            return Err(Error::Empty("input sequence"));
        }
        for g in seq {
            check_len("training sample dimension", d, g.len())?;
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("training target".into()));
        }
    }
    Ok(d)
}

/// Trains a fresh network clip by clip. Sequence lengths may differ.
pub fn train(data: &[(Vec<Vector>, f64)], cfg: &TrainConfig) -> Result<RnnModel> {
    train_with_history(data, cfg).map(|t| t.model)
}

pub fn train_with_history(
    data: &[(Vec<Vector>, f64)],
    cfg: &TrainConfig,
) -> Result<Trained<RnnModel>> {
    cfg.validate()?;
    let d = check_sequences(data)?;
    let model = RnnModel::init(d, cfg)?;
    let grads = RnnGrads::zeros_like(&model);
    let mut scratch = Scratch::default();
    fit(model, grads, data, cfg, |m, (seq, t), grads| {
        m.loss_and_grad(seq, *t, &mut scratch, grads)
    })
}

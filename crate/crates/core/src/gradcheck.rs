//! Central-difference gradient oracle.
//!
//! Every analytic gradient in the crate is checked against
//! `(L(w + h) − L(w − h)) / 2h`, one weight at a time, on a private copy of
//! the model. A partial derivative passes when its relative error is within
//! [`REL_TOL`] or its absolute error within [`ABS_TOL`]; pure relative error
//! is meaningless for derivatives near zero.
//!
//! [`UnrolledRnn`] is a second, independent formulation of the recurrent
//! network as an explicit stack of tied-weight feed-forward layers, used to
//! cross-check backpropagation through time.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::ffnn::{self, FfnnModel};
use crate::linalg::{Matrix, Rng, Vector};
use crate::lstm::{Direction, LstmModel};
use crate::model::{ModelKind, OutputActivation};
use crate::params::Parameters;
use crate::rnn::RnnModel;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-8;

/// Position of one weight: block name, row, column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightLocation {
    pub block: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// The partial derivative furthest outside tolerance (or closest to it,
    /// when everything passes).
    pub worst_weight: Option<WeightLocation>,
    pub passed: bool,
    /// Number of partial derivatives compared.
    pub checked: usize,
    pub trials: usize,
}

impl GradReport {
    fn empty() -> Self {
        GradReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_weight: None,
            passed: true,
            checked: 0,
            trials: 0,
        }
    }

    /// Folds another report into this one, keeping the worst entry.
    pub fn merge(&mut self, other: GradReport, worst_score: &mut f64, other_score: f64) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.passed &= other.passed;
        self.checked += other.checked;
        self.trials += other.trials.max(1);
        if other_score > *worst_score || self.worst_weight.is_none() {
            *worst_score = other_score;
            self.worst_weight = other.worst_weight;
        }
    }
}

/// `|a − n| / max(|a|, |n|)`, 0 when both are 0.
fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// How far outside tolerance a partial is; `≤ 1` passes.
fn violation(a: f64, n: f64) -> f64 {
    let abs = (a - n).abs();
    (rel_err(a, n) / REL_TOL).min(abs / ABS_TOL)
}

/// Central-difference gradient of `loss` at `model`, one matrix per block in
/// [`Parameters::blocks`] order. The model is never modified; a scratch copy
/// is perturbed and each weight is written back bit for bit.
pub fn fd_gradient<M, F>(model: &M, loss: F, step: f64) -> Result<Vec<Matrix>>
where
    M: Parameters + Clone,
    F: Fn(&M) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut work = model.clone();
    let shapes: Vec<(&'static str, usize, usize)> = model
        .blocks()
        .iter()
        .map(|(n, m)| (*n, m.rows(), m.cols()))
        .collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (b, &(name, rows, cols)) in shapes.iter().enumerate() {
        let mut grad = Matrix::zeros(rows, cols);
        for idx in 0..rows * cols {
            let original = model.blocks()[b].1.as_slice()[idx];
            set_weight(&mut work, b, idx, original + step);
            let up = loss(&work);
            set_weight(&mut work, b, idx, original - step);
            let down = loss(&work);
            set_weight(&mut work, b, idx, original);
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {name}[{}, {}]",
                    idx / cols,
                    idx % cols
                )));
            }
            grad.as_mut_slice()[idx] = (up - down) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

fn set_weight<M: Parameters>(m: &mut M, block: usize, idx: usize, value: f64) {
    m.blocks_mut()[block].1.as_mut_slice()[idx] = value;
}

/// Compares analytic gradient blocks against numeric ones.
pub fn compare<G: Parameters + ?Sized>(analytic: &G, numeric: &[Matrix]) -> Result<GradReport> {
    let blocks = analytic.blocks();
    if blocks.len() != numeric.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient block count",
            expected: blocks.len(),
            found: numeric.len(),
        });
    }
    let mut report = GradReport::empty();
    report.trials = 1;
    let mut worst = f64::NEG_INFINITY;
    for ((name, a), n) in blocks.iter().zip(numeric) {
        if a.shape() != n.shape() {
            return Err(invalid(format!("gradient block {name} shape differs")));
        }
        for (idx, (&av, &nv)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            let abs = (av - nv).abs();
            let rel = rel_err(av, nv);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            let v = violation(av, nv);
            if !(v <= 1.0) {
                report.passed = false;
            }
            if v > worst || v.is_nan() {
                worst = if v.is_nan() { f64::INFINITY } else { v };
                report.worst_weight = Some(WeightLocation {
                    block: String::from(*name),
                    row: idx / a.cols(),
                    col: idx % a.cols(),
                });
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn worst_score<G: Parameters + ?Sized>(analytic: &G, numeric: &[Matrix]) -> f64 {
    analytic
        .blocks()
        .iter()
        .zip(numeric)
        .flat_map(|((_, a), n)| a.as_slice().iter().zip(n.as_slice()))
        .map(|(&a, &n)| violation(a, n))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_vec(d: usize, rng: &mut Rng) -> Vector {
    Vector::new((0..d).map(|_| rng.uniform_unchecked(-1.0, 1.0)).collect()).unwrap()
}

fn random_seq(t: usize, d: usize, rng: &mut Rng) -> Vec<Vector> {
    (0..t).map(|_| random_vec(d, rng)).collect()
}

fn random_output(rng: &mut Rng) -> (OutputActivation, f64) {
    if rng.below(2) == 0 {
        (OutputActivation::Linear, rng.uniform_unchecked(0.0, 5.0))
    } else {
        (OutputActivation::Sigmoid, rng.uniform_unchecked(0.0, 1.0))
    }
}

/// Alternates 21-21-1 and 4-2-1 shapes.
fn trial_shape(trial: usize) -> (usize, usize) {
    if trial % 2 == 0 {
        (21, 21)
    } else {
        (4, 2)
    }
}

/// A random FFNN instance and its report.
pub fn check_ffnn_instance(rng: &mut Rng, d: usize, h: usize) -> (GradReport, f64) {
    let (out, target) = random_output(rng);
    let lambda = rng.uniform_unchecked(0.5, 2.0);
    let model = FfnnModel::new(
        Matrix::random_uniform(d, h, 1.0, rng),
        Matrix::random_uniform(h, 1, 1.0, rng),
        lambda,
        out,
    )
    .unwrap();
    let g = random_vec(d, rng);
    let analytic = model.backward(&g, target).unwrap();
    let numeric = fd_gradient(
        &model,
        |m| ffnn::loss(m.predict(&g).unwrap(), target),
        DEFAULT_STEP,
    )
    .unwrap();
    finish(&analytic, &numeric)
}

pub fn check_rnn_instance(rng: &mut Rng, d: usize, h: usize, t: usize) -> (GradReport, f64) {
    let (out, target) = random_output(rng);
    let lambda = rng.uniform_unchecked(0.5, 2.0);
    let model = RnnModel::new(
        Matrix::random_uniform(d, h, 1.0, rng),
        Matrix::random_uniform(h, h, 1.0, rng),
        Matrix::random_uniform(h, 1, 1.0, rng),
        lambda,
        out,
    )
    .unwrap();
    let seq = random_seq(t, d, rng);
    let analytic = model.bptt(&seq, target).unwrap();
    let numeric = fd_gradient(
        &model,
        |m| ffnn::loss(m.predict(&seq).unwrap(), target),
        DEFAULT_STEP,
    )
    .unwrap();
    finish(&analytic, &numeric)
}

pub fn check_lstm_instance(
    rng: &mut Rng,
    d: usize,
    h: usize,
    t: usize,
    direction: Direction,
) -> (GradReport, f64) {
    let (out, target) = random_output(rng);
    let cfg = crate::TrainConfig {
        hidden: h,
        seed: rng.next_u64(),
        init_range: Some(0.8),
        output: out,
        ..crate::TrainConfig::default()
    };
    let model = LstmModel::init(d, direction, &cfg).unwrap();
    let seq = random_seq(t, d, rng);
    let analytic = model.gradient(&seq, target).unwrap();
    let numeric = fd_gradient(
        &model,
        |m| ffnn::loss(m.predict(&seq).unwrap(), target),
        DEFAULT_STEP,
    )
    .unwrap();
    finish(&analytic, &numeric)
}

fn finish<G: Parameters>(analytic: &G, numeric: &[Matrix]) -> (GradReport, f64) {
    let report = compare(analytic, numeric).unwrap();
    (report, worst_score(analytic, numeric))
}

/// Runs `trials` random instances of `kind` and merges the results.
///
/// - FFNN: alternating 21-21-1 and 4-2-1 networks.
/// - RNN: the same shapes with `T` uniform in `1..=12`.
/// - LSTM/BLSTM: 5 inputs, 4 hidden units, `T` uniform in `1..=8`.
///
/// Output activation, target and `λ` are drawn per trial.
pub fn check(kind: ModelKind, trials: usize, seed: u64) -> Result<GradReport> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let mut rng = Rng::new(seed);
    let mut report = GradReport::empty();
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let (d, h) = trial_shape(trial);
        let (r, score) = match kind {
            ModelKind::Ffnn => check_ffnn_instance(&mut rng, d, h),
            ModelKind::Rnn => {
                let t = 1 + rng.below(12);
                check_rnn_instance(&mut rng, d, h, t)
            }
            ModelKind::Lstm | ModelKind::Blstm => {
                let t = 1 + rng.below(8);
                let dir = if kind == ModelKind::Lstm {
                    Direction::Forward
                } else {
                    Direction::Bidirectional
                };
                check_lstm_instance(&mut rng, 5, 4, t, dir)
            }
        };
        report.merge(r, &mut worst, score);
    }
    Ok(report)
}

/// A recurrent network written out as `T` stacked feed-forward layers that
/// share one weight matrix `[w_ih; w_hh]`.
///
/// Layer `t` maps the concatenation `[g^t, s^{t-1}]` through the stacked
/// matrix and the logistic function; the readout layer sees only the last
/// layer's state. This is deliberately a different code path from
/// [`RnnModel::predict`]: no split weight blocks, no recurrence, one fresh
/// buffer per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledRnn {
    /// `(d_in + H) × H`; rows `0..d_in` come from `w_ih`, the rest from
    /// `w_hh`.
    pub stacked: Matrix,
    pub readout: Matrix,
    pub d_in: usize,
    pub lambda: f64,
    pub output: OutputActivation,
}

impl UnrolledRnn {
    pub fn from_rnn(m: &RnnModel) -> Self {
        let (d, h) = (m.d_in(), m.hidden());
        let mut data = Vec::with_capacity((d + h) * h);
        data.extend_from_slice(m.w_ih.as_slice());
        data.extend_from_slice(m.w_hh.as_slice());
        UnrolledRnn {
            stacked: Matrix::new(d + h, h, data).unwrap(),
            readout: m.w_ho.clone(),
            d_in: d,
            lambda: m.lambda,
            output: m.output,
        }
    }

    pub fn hidden(&self) -> usize {
        self.stacked.cols()
    }

    /// Output after `seq.len()` layers.
    pub fn predict(&self, seq: &[Vector]) -> f64 {
        let h = self.hidden();
        let layers: Vec<Vec<f64>> = seq
            .iter()
            .scan(vec![0.0; h], |state, g| {
                let mut input = g.as_slice().to_vec();
                input.extend_from_slice(state);
                let next: Vec<f64> = (0..h)
                    .map(|k| {
                        let z: f64 = (0..input.len()).map(|r| input[r] * self.stacked.get(r, k)).sum();
                        1.0 / (1.0 + libm::exp(-self.lambda * z))
                    })
                    .collect();
                *state = next.clone();
                Some(next)
            })
            .collect();
        let last = layers.last().expect("nonempty sequence");
        let z: f64 = (0..h).map(|k| last[k] * self.readout.get(k, 0)).sum();
        match self.output {
            OutputActivation::Linear => z,
            OutputActivation::Sigmoid => 1.0 / (1.0 + libm::exp(-self.lambda * z)),
        }
    }

    /// Splits a gradient over `stacked` and `readout` back into
    /// `(w_ih, w_hh, w_ho)` blocks.
    pub fn split_gradient(&self, grads: &[Matrix]) -> Vec<Matrix> {
        let (d, h) = (self.d_in, self.hidden());
        let s = grads[0].as_slice();
        vec![
            Matrix::new(d, h, s[..d * h].to_vec()).unwrap(),
            Matrix::new(h, h, s[d * h..].to_vec()).unwrap(),
            grads[1].clone(),
        ]
    }
}

impl Parameters for UnrolledRnn {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("stacked", &self.stacked), ("readout", &self.readout)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![("stacked", &mut self.stacked), ("readout", &mut self.readout)]
    }
}

/// Finite-difference gradient of the unrolled network, in `RnnModel` block
/// order.
pub fn unrolled_fd_gradient(model: &RnnModel, seq: &[Vector], target: f64, step: f64) -> Result<Vec<Matrix>> {
    if seq.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    let unrolled = UnrolledRnn::from_rnn(model);
    let g = fd_gradient(&unrolled, |u| ffnn::loss(u.predict(seq), target), step)?;
    Ok(unrolled.split_gradient(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quadratic(Matrix);

    impl Parameters for Quadratic {
        fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
            vec![("w", &self.0)]
        }
        fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
            vec![("w", &mut self.0)]
        }
    }

    fn sum_sq(q: &Quadratic) -> f64 {
        q.0.as_slice().iter().map(|x| x * x).sum()
    }

    #[test]
    fn quadratic_gradient() {
        let q = Quadratic(Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let g = fd_gradient(&q, sum_sq, 1e-4).unwrap();
        for (gv, w) in g[0].as_slice().iter().zip(q.0.as_slice()) {
            assert!((gv - 2.0 * w).abs() < 1e-8);
        }
    }

    #[test]
    fn richardson_order() {
        // L = Σ sin(w)·w³ has a nonzero third derivative, so central
        // differences carry an O(h²) error term.
        let q = Quadratic(Matrix::new(1, 3, vec![0.7, -1.1, 1.9]).unwrap());
        let loss = |q: &Quadratic| q.0.as_slice().iter().map(|w| libm::sin(*w) * w * w * w).sum::<f64>();
        let exact: Vec<f64> = q
            .0
            .as_slice()
            .iter()
            .map(|w| libm::cos(*w) * w * w * w + 3.0 * libm::sin(*w) * w * w)
            .collect();
        let err = |h: f64| -> f64 {
            let g = fd_gradient(&q, loss, h).unwrap();
            g[0].as_slice().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn oracle_does_not_mutate() {
        let mut rng = Rng::new(1);
        let model = FfnnModel::new(
            Matrix::random_uniform(4, 2, 1.0, &mut rng),
            Matrix::random_uniform(2, 1, 1.0, &mut rng),
            1.0,
            OutputActivation::Sigmoid,
        )
        .unwrap();
        let before = model.clone();
        let g = [0.1, 0.2, 0.3, 0.4];
        fd_gradient(&model, |m| ffnn::loss(m.predict(&g).unwrap(), 0.2), DEFAULT_STEP).unwrap();
        let bits = |m: &FfnnModel| -> Vec<u64> {
            m.blocks().iter().flat_map(|(_, b)| b.as_slice().iter().map(|x| x.to_bits())).collect()
        };
        assert_eq!(bits(&model), bits(&before));
    }

    #[test]
    fn zero_error_sample_has_zero_fd_gradient() {
        let mut rng = Rng::new(2);
        let model = FfnnModel::new(
            Matrix::random_uniform(3, 3, 1.0, &mut rng),
            Matrix::random_uniform(3, 1, 1.0, &mut rng),
            1.0,
            OutputActivation::Linear,
        )
        .unwrap();
        let g = [0.5, -0.5, 0.25];
        let target = model.predict(&g).unwrap();
        let fd = fd_gradient(&model, |m| ffnn::loss(m.predict(&g).unwrap(), target), DEFAULT_STEP).unwrap();
        for b in fd {
            assert!(b.as_slice().iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn non_finite_loss_names_weight() {
        let q = Quadratic(Matrix::new(1, 2, vec![0.0, 1.0]).unwrap());
        let err = fd_gradient(&q, |q| if q.0.get(0, 1) > 1.0 { f64::NAN } else { 0.0 }, 1e-3).unwrap_err();
        match err {
            Error::NonFinite(msg) => assert!(msg.contains("w[0, 1]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fd_gradient(&q, sum_sq, 0.0).is_err());
    }

    #[test]
    fn sign_flip_is_caught() {
        let mut rng = Rng::new(3);
        let model = FfnnModel::new(
            Matrix::random_uniform(4, 2, 1.0, &mut rng),
            Matrix::random_uniform(2, 1, 1.0, &mut rng),
            1.0,
            OutputActivation::Linear,
        )
        .unwrap();
        let g = [0.3, -0.8, 0.5, 0.9];
        let target = 3.0;
        let mut analytic = model.backward(&g, target).unwrap();
        let numeric = fd_gradient(&model, |m| ffnn::loss(m.predict(&g).unwrap(), target), DEFAULT_STEP).unwrap();
        assert!(compare(&analytic, &numeric).unwrap().passed);
        let (r, c) = (2, 1);
        let v = analytic.w_ih.get(r, c);
        assert!(v.abs() > 1e-3);
        analytic.w_ih.set(r, c, -v);
        let report = compare(&analytic, &numeric).unwrap();
        assert!(!report.passed);
        assert_eq!(
            report.worst_weight,
            Some(WeightLocation {
                block: "w_ih".into(),
                row: r,
                col: c
            })
        );
    }

    #[test]
    fn all_kinds_pass_small_runs() {
        for kind in ModelKind::ALL {
            let r = check(kind, 6, 11).unwrap();
            assert!(r.passed, "{kind}: {r:?}");
            assert_eq!(r.trials, 6);
        }
        assert!(check(ModelKind::Ffnn, 0, 1).is_err());
    }

    #[test]
    fn unrolled_network_matches_recurrent_forward() {
        let mut rng = Rng::new(4);
        let m = RnnModel::new(
            Matrix::random_uniform(4, 2, 1.0, &mut rng),
            Matrix::random_uniform(2, 2, 1.0, &mut rng),
            Matrix::random_uniform(2, 1, 1.0, &mut rng),
            1.0,
            OutputActivation::Sigmoid,
        )
        .unwrap();
        let seq = random_seq(3, 4, &mut rng);
        let u = UnrolledRnn::from_rnn(&m);
        assert!((u.predict(&seq) - m.predict(&seq).unwrap()).abs() < 1e-14);
    }
}

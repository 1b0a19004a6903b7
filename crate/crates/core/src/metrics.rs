//! Clip-level evaluation: mean squared error and Pearson correlation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knowledge::Envelope;
use crate::linalg::check_len;
use crate::model::TrainedModel;

/// `(1/N) Σ (pred_i − truth_i)²`.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len("mse inputs", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::Empty("mse inputs"));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Sample Pearson correlation. `None` when either side has zero variance.
pub fn pcc(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check_len("pcc inputs", pred.len(), truth.len())?;
    if pred.len() < 2 {
        return Err(Error::InvalidArgument("pcc needs at least two points".into()));
    }
    let constant = |xs: &[f64]| xs.iter().all(|x| *x == xs[0]);
    if constant(pred) || constant(truth) {
        return Ok(None);
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if vp == 0.0 || vt == 0.0 {
        return Ok(None);
    }
    Ok(Some((cov / (libm::sqrt(vp) * libm::sqrt(vt))).clamp(-1.0, 1.0)))
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system: String,
    pub train_size: usize,
    pub seed: u64,
    pub mse: f64,
    /// `None` when the predictions (or labels) are constant.
    pub pcc: Option<f64>,
    pub n_test: usize,
}

/// Per-clip predictions on a test set and their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipEvaluation {
    pub predictions: Vec<f64>,
    pub truths: Vec<f64>,
    pub mse: f64,
    pub pcc: Option<f64>,
}

impl ClipEvaluation {
    pub fn from_predictions(predictions: Vec<f64>, truths: Vec<f64>) -> Result<Self> {
        let mse = mse(&predictions, &truths)?;
        let pcc = if predictions.len() >= 2 {
            pcc(&predictions, &truths)?
        } else {
            None
        };
        Ok(ClipEvaluation {
            predictions,
            truths,
            mse,
            pcc,
        })
    }

    pub fn into_report(self, system: impl Into<String>, train_size: usize, seed: u64) -> EvalReport {
        EvalReport {
            system: system.into(),
            train_size,
            seed,
            mse: self.mse,
            pcc: self.pcc,
            n_test: self.predictions.len(),
        }
    }
}

/// Predicts every test clip (in order) and scores against the labels.
///
/// Recurrent models emit one value per clip. Feed-forward models predict
/// each segment and reconstruct the clip value through `envelope`, which is
/// then required.
pub fn evaluate_clip_level(
    model: &TrainedModel,
    test: &Dataset,
    envelope: Option<&Envelope>,
) -> Result<ClipEvaluation> {
    if model.is_segment_wise() && envelope.is_none() {
        return Err(Error::MissingEnvelope);
    }
    check_len("model input vs dataset features", model.d_in(), test.feature_dim)?;
    let predictions = test
        .clips
        .iter()
        .map(|c| model.predict_clip(c, envelope))
        .collect::<Result<Vec<_>>>()?;
    ClipEvaluation::from_predictions(predictions, test.labels())
}

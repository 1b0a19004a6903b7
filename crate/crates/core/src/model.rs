//! Model families and the closed set of trained models the rest of the
//! crate evaluates.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::Clip;
use crate::error::{invalid, Error, Result};
use crate::ffnn::FfnnModel;
use crate::knowledge::{reconstruct_clip, Envelope, DEFAULT_EPSILON};
use crate::linalg::{sigmoid, sigmoid_prime_from_output, Vector};
use crate::lstm::LstmModel;
use crate::params::Parameters;
use crate::rnn::RnnModel;

/// Activation of the single output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputActivation {
    #[default]
    Linear,
    Sigmoid,
}

impl OutputActivation {
    #[inline]
    pub fn apply(self, z: f64, lambda: f64) -> f64 {
        match self {
            OutputActivation::Linear => z,
            OutputActivation::Sigmoid => sigmoid(z, lambda),
        }
    }

    /// `do/dz` given the output `o`.
    #[inline]
    pub fn derivative_from_output(self, o: f64, lambda: f64) -> f64 {
        match self {
            OutputActivation::Linear => 1.0,
            OutputActivation::Sigmoid => sigmoid_prime_from_output(o, lambda),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputActivation::Linear => "linear",
            OutputActivation::Sigmoid => "sigmoid",
        }
    }
}

impl FromStr for OutputActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OutputActivation::Linear),
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            other => Err(invalid(alloc::format!("unknown output activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Ffnn,
    Rnn,
    Lstm,
    Blstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ffnn, ModelKind::Rnn, ModelKind::Lstm, ModelKind::Blstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ffnn => "ffnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Blstm => "blstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown model kind `{s}`")))
    }
}

/// Any trained network. Feed-forward models predict per segment and need an
/// envelope to recover a clip value; recurrent ones emit one value per clip.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Ffnn(FfnnModel),
    Rnn(RnnModel),
    Lstm(LstmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Ffnn(_) => ModelKind::Ffnn,
            TrainedModel::Rnn(_) => ModelKind::Rnn,
            TrainedModel::Lstm(m) if m.is_bidirectional() => ModelKind::Blstm,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            TrainedModel::Ffnn(m) => m.d_in(),
            TrainedModel::Rnn(m) => m.d_in(),
            TrainedModel::Lstm(m) => m.d_in(),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            TrainedModel::Ffnn(m) => m.hidden(),
            TrainedModel::Rnn(m) => m.hidden(),
            TrainedModel::Lstm(m) => m.hidden(),
        }
    }

    pub fn is_segment_wise(&self) -> bool {
        matches!(self, TrainedModel::Ffnn(_))
    }

    pub fn parameters(&self) -> &dyn Parameters {
        match self {
            TrainedModel::Ffnn(m) => m,
            TrainedModel::Rnn(m) => m,
            TrainedModel::Lstm(m) => m,
        }
    }

    pub fn parameters_mut(&mut self) -> &mut dyn Parameters {
        match self {
            TrainedModel::Ffnn(m) => m,
            TrainedModel::Rnn(m) => m,
            TrainedModel::Lstm(m) => m,
        }
    }

    /// Clip-level prediction. Feed-forward models reconstruct the clip value
    /// from per-segment outputs through `envelope`.
    pub fn predict_clip(&self, clip: &Clip, envelope: Option<&Envelope>) -> Result<f64> {
        let seq: Vec<&Vector> = clip.segments.iter().map(|s| &s.features).collect();
        match self {
            TrainedModel::Ffnn(m) => {
                let env = envelope.ok_or(Error::MissingEnvelope)?;
                let preds = seq
                    .iter()
                    .map(|g| m.predict(g))
                    .collect::<Result<Vec<f64>>>()?;
                reconstruct_clip(&preds, env, DEFAULT_EPSILON)
            }
            TrainedModel::Rnn(m) => m.predict(&seq),
            TrainedModel::Lstm(m) => m.predict(&seq),
        }
    }
}

impl From<FfnnModel> for TrainedModel {
    fn from(m: FfnnModel) -> Self {
        TrainedModel::Ffnn(m)
    }
}

impl From<RnnModel> for TrainedModel {
    fn from(m: RnnModel) -> Self {
        TrainedModel::Rnn(m)
    }
}

impl From<LstmModel> for TrainedModel {
    fn from(m: LstmModel) -> Self {
        TrainedModel::Lstm(m)
    }
}

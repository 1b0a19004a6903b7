//! Names for the systems a sweep can train, and envelope arguments.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use kffnn_core::dataset::LabelDistribution;
use kffnn_core::{Envelope, ModelKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable configuration: an architecture plus, for feed-forward
/// networks, the envelope used to build targets and reconstruct clips.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// FFNN on envelope-scaled targets.
    Kffnn(Envelope),
    /// FFNN on raw clip labels; clips are scored by the mean segment output.
    Ffnn,
    Rnn,
    Lstm,
    Blstm,
}

impl System {
    pub const NAMES: [&'static str; 8] = [
        "kffnn-fn1",
        "kffnn-fn2",
        "kffnn-fn3",
        "kffnn-linear",
        "ffnn",
        "rnn",
        "lstm",
        "blstm",
    ];

    pub fn name(&self) -> String {
        match self {
            System::Kffnn(env) => format!("kffnn-{}", env.name()),
            System::Ffnn => "ffnn".into(),
            System::Rnn => "rnn".into(),
            System::Lstm => "lstm".into(),
            System::Blstm => "blstm".into(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            System::Kffnn(_) | System::Ffnn => ModelKind::Ffnn,
            System::Rnn => ModelKind::Rnn,
            System::Lstm => ModelKind::Lstm,
            System::Blstm => ModelKind::Blstm,
        }
    }

    /// Envelope for target construction and clip reconstruction, if the
    /// system predicts per segment.
    pub fn envelope(&self) -> Option<Envelope> {
        match self {
            System::Kffnn(env) => Some(env.clone()),
            System::Ffnn => Some(Envelope::Constant),
            _ => None,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sys = match s {
            "ffnn" => System::Ffnn,
            "rnn" => System::Rnn,
            "lstm" => System::Lstm,
            "blstm" => System::Blstm,
            _ => {
                let env = s
                    .strip_prefix("kffnn-")
                    .and_then(|e| e.parse::<Envelope>().ok())
                    .filter(|e| !matches!(e, Envelope::Constant | Envelope::Custom(_)));
                match env {
                    Some(env) => System::Kffnn(env),
                    None => {
                        return Err(Error::usage(format!(
                            "unknown system `{s}` (expected one of {})",
                            System::NAMES.join(", ")
                        )))
                    }
                }
            }
        };
        Ok(sys)
    }
}

/// Parses an envelope argument: a name (`fn1`, `constant`, ...), a
/// comma-separated list of values, or `@path` to a file holding the values
/// separated by whitespace or commas.
pub fn parse_envelope(arg: &str) -> Result<Envelope> {
    if let Some(path) = arg.strip_prefix('@') {
        return read_envelope_file(Path::new(path));
    }
    if let Ok(env) = arg.parse::<Envelope>() {
        return Ok(env);
    }
    if arg.contains(',') || arg.parse::<f64>().is_ok() {
        return parse_values(arg).map_err(Error::usage);
    }
    Err(Error::usage(format!(
        "unknown envelope `{arg}` (expected constant, fn1, fn2, fn3, linear, a value list or @file)"
    )))
}

pub fn read_envelope_file(path: &Path) -> Result<Envelope> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_values(&text).map_err(|msg| Error::parse(path, 1, msg))
}

fn parse_values(text: &str) -> std::result::Result<Envelope, String> {
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad envelope value `{t}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Envelope::custom(values).map_err(|e| e.to_string())
}

/// Envelope as it appears in JSON: a name or an explicit value list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvelopeDef {
    Name(String),
    Values(Vec<f64>),
}

impl EnvelopeDef {
    pub fn resolve(&self) -> Result<Envelope> {
        match self {
            EnvelopeDef::Name(n) => n
                .parse()
                .map_err(|_| Error::usage(format!("unknown envelope `{n}`"))),
            EnvelopeDef::Values(v) => Envelope::custom(v.clone()).map_err(|e| Error::usage(e.to_string())),
        }
    }
}

impl From<&Envelope> for EnvelopeDef {
    fn from(env: &Envelope) -> Self {
        match env {
            Envelope::Custom(v) => EnvelopeDef::Values(v.clone()),
            other => EnvelopeDef::Name(other.name().into()),
        }
    }
}

pub fn parse_labels(s: &str) -> Result<LabelDistribution> {
    match s {
        "uniform" => Ok(LabelDistribution::Uniform),
        "skewed" => Ok(LabelDistribution::Skewed),
        other => Err(Error::usage(format!(
            "unknown label distribution `{other}` (expected uniform or skewed)"
        ))),
    }
}

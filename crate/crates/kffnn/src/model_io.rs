//! Flat-text model files.
//!
//! ```text
//! kffnn-model 1
//! kind rnn
//! d_in 4
//! hidden 2
//! lambda 1
//! output linear
//! block w_ih 4 2
//! 0.1 -0.2
//! ...
//! ```
//!
//! Every weight block of the model follows in its canonical order, rows one
//! per line. Values use the shortest decimal form that parses back to the
//! same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kffnn_core::lstm::Direction;
use kffnn_core::{FfnnModel, LstmModel, ModelKind, OutputActivation, RnnModel, TrainedModel};

use crate::error::{Error, Result};

const MAGIC: &str = "kffnn-model 1";

pub fn to_text(model: &TrainedModel) -> String {
    let lambda = match model {
        TrainedModel::Ffnn(m) => m.lambda,
        TrainedModel::Rnn(m) => m.lambda,
        TrainedModel::Lstm(_) => 1.0,
    };
    let output = match model {
        TrainedModel::Ffnn(m) => m.output,
        TrainedModel::Rnn(m) => m.output,
        TrainedModel::Lstm(m) => m.output,
    };
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "kind {}", model.kind());
    let _ = writeln!(s, "d_in {}", model.d_in());
    let _ = writeln!(s, "hidden {}", model.hidden());
    let _ = writeln!(s, "lambda {lambda}");
    let _ = writeln!(s, "output {}", output.name());
    for (name, m) in model.parameters().blocks() {
        let _ = writeln!(s, "block {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    if !l.trim().is_empty() {
                        return Ok(l.trim());
                    }
                }
                None => return Err(Error::parse(self.path, self.line + 1, "unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{key} <value>`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad {key} `{v}`")))
    }
}

pub fn from_text(text: &str, path: &Path) -> Result<TrainedModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        line: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a kffnn model file"));
    }
    let kind: ModelKind = {
        let k = lines.field("kind")?;
        k.parse().map_err(|_| lines.err(format!("unknown model kind `{k}`")))?
    };
    let d_in: usize = lines.parsed("d_in")?;
    let hidden: usize = lines.parsed("hidden")?;
    let lambda: f64 = lines.parsed("lambda")?;
    let output: OutputActivation = {
        let o = lines.field("output")?;
        o.parse().map_err(|_| lines.err(format!("unknown output activation `{o}`")))?
    };
    if d_in == 0 || hidden == 0 {
        return Err(lines.err("d_in and hidden must be positive"));
    }
    let mut model: TrainedModel = match kind {
        ModelKind::Ffnn => FfnnModel::zeros(d_in, hidden, lambda, output)?.into(),
        ModelKind::Rnn => RnnModel::zeros(d_in, hidden, lambda, output)?.into(),
        ModelKind::Lstm => LstmModel::zeros(d_in, hidden, Direction::Forward, output)?.into(),
        ModelKind::Blstm => LstmModel::zeros(d_in, hidden, Direction::Bidirectional, output)?.into(),
    };
    for (name, block) in model.parameters_mut().blocks_mut() {
        let header = lines.next()?;
        let expect = format!("block {name} {} {}", block.rows(), block.cols());
        if header.split_whitespace().ne(expect.split_whitespace()) {
            return Err(lines.err(format!("expected `{expect}`, found `{header}`")));
        }
        for r in 0..block.rows() {
            let row = lines.next()?;
            let values = row
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| lines.err(format!("bad number in block {name}")))?;
            if values.len() != block.cols() {
                return Err(lines.err(format!(
                    "block {name} row {r} has {} values, expected {}",
                    values.len(),
                    block.cols()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(lines.err(format!("non-finite weight in block {name}")));
            }
            for (c, v) in values.into_iter().enumerate() {
                block.set(r, c, v);
            }
        }
    }
    if let Ok(extra) = lines.next() {
        return Err(lines.err(format!("unexpected trailing content `{extra}`")));
    }
    Ok(model)
}

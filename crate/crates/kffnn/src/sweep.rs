//! Training-size sweeps: every `(system, size, seed)` cell is trained and
//! scored on one fixed test set.

use std::fmt::Write as _;

use kffnn_core::dataset::Dataset;
use kffnn_core::knowledge::infuse_labels;
use kffnn_core::lstm::{self, Direction};
use kffnn_core::metrics::evaluate_clip_level;
use kffnn_core::{ffnn, rnn, Envelope, TrainConfig, TrainedModel, Vector};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::system::System;

pub const RESULTS_HEADER: &str = "system,train_size,seed,mse,pcc,n_test";
pub const AGGREGATE_HEADER: &str = "system,train_size,median_mse,median_pcc,runs,failed";

/// Per-segment training pairs for a feed-forward system.
pub fn segment_pairs(train: &Dataset, env: &Envelope) -> kffnn_core::Result<Vec<(Vector, f64)>> {
    let mut out = Vec::new();
    for clip in &train.clips {
        out.extend(infuse_labels(clip, env)?);
    }
    Ok(out)
}

pub fn train_system(system: &System, train: &Dataset, cfg: &TrainConfig) -> kffnn_core::Result<TrainedModel> {
    Ok(match system {
        System::Kffnn(_) | System::Ffnn => {
            let env = system.envelope().expect("feed-forward systems carry an envelope");
            ffnn::train(&segment_pairs(train, &env)?, cfg)?.into()
        }
        System::Rnn => rnn::train(&train.sequences(), cfg)?.into(),
        System::Lstm => lstm::train(&train.sequences(), Direction::Forward, cfg)?.into(),
        System::Blstm => lstm::train(&train.sequences(), Direction::Bidirectional, cfg)?.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Scored { mse: f64, pcc: Option<f64> },
    /// Training produced non-finite weights or loss.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub system: String,
    pub train_size: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub n_test: usize,
    pub hidden: usize,
}

fn is_divergence(e: &kffnn_core::Error) -> bool {
    matches!(e, kffnn_core::Error::Diverged { .. } | kffnn_core::Error::NonFinite(_))
}

/// Trains and scores one model; divergence is an outcome, not an error.
fn score(system: &System, train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<Outcome> {
    let model = match train_system(system, train, cfg) {
        Ok(m) => m,
        Err(e) if is_divergence(&e) => return Ok(Outcome::Diverged),
        Err(e) => return Err(e.into()),
    };
    let env = system.envelope();
    match evaluate_clip_level(&model, test, env.as_ref()) {
        Ok(ev) if ev.mse.is_finite() => Ok(Outcome::Scored { mse: ev.mse, pcc: ev.pcc }),
        Ok(_) => Ok(Outcome::Diverged),
        Err(e) if is_divergence(&e) => Ok(Outcome::Diverged),
        Err(e) => Err(e.into()),
    }
}

/// Picks the hidden size with the lowest validation MSE, holding out the
/// last tenth (at least one clip) of the training set. Ties go to the
/// smaller size.
fn select_hidden(system: &System, train: &Dataset, candidates: &[usize], cfg: &TrainConfig) -> Result<usize> {
    let n = train.len();
    let n_val = ((n as f64 * 0.1).round() as usize).max(1);
    if n_val >= n {
        return Ok(cfg.hidden);
    }
    let idx: Vec<usize> = (0..n).collect();
    let inner = train.subset(&idx[..n - n_val]);
    let val = train.subset(&idx[n - n_val..]);
    let mut best = (f64::INFINITY, cfg.hidden);
    for &h in candidates {
        let c = TrainConfig { hidden: h, ..cfg.clone() };
        if let Outcome::Scored { mse, .. } = score(system, &inner, &val, &c)? {
            if mse < best.0 {
                best = (mse, h);
            }
        }
    }
    Ok(best.1)
}

/// Runs every cell of the sweep. Rows come back sorted by system name,
/// training size and seed whatever order the cells finish in.
pub fn run_sweep(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<Row>> {
    cfg.validate()?;
    let mut systems = cfg.parsed_systems()?;
    systems.sort_by_key(|s| s.name());
    systems.dedup();
    let mut sizes = cfg.train_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let plan = cfg.split.plan(ds.len())?;
    let max = *sizes.last().expect("validated nonempty");
    if max > plan.pool.len() {
        return Err(Error::usage(format!(
            "training size {max} exceeds the {} clips left after the test split",
            plan.pool.len()
        )));
    }
    let test = ds.subset(&plan.test);
    let trains: Vec<Dataset> = sizes
        .iter()
        .map(|&s| Ok(ds.subset(plan.train(s)?)))
        .collect::<kffnn_core::Result<_>>()?;

    let mut cells = Vec::new();
    for sys in &systems {
        for (si, &size) in sizes.iter().enumerate() {
            for &seed in &seeds {
                cells.push((sys, si, size, seed));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(sys, si, size, seed)| {
            let mut tc = cfg.train.config(sys, seed)?;
            if let Some(cands) = &cfg.hidden_candidates {
                tc.hidden = select_hidden(sys, &trains[si], cands, &tc)?;
            }
            let outcome = score(sys, &trains[si], &test, &tc)?;
            Ok(Row {
                system: sys.name(),
                train_size: size,
                seed,
                outcome,
                n_test: test.len(),
                hidden: tc.hidden,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

pub fn results_csv(rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{RESULTS_HEADER}");
    for r in rows {
        let (mse, pcc) = match r.outcome {
            Outcome::Scored { mse, pcc } => (mse.to_string(), fmt_opt(pcc)),
            Outcome::Diverged => ("diverged".into(), "diverged".into()),
        };
        let _ = writeln!(s, "{},{},{},{mse},{pcc},{}", r.system, r.train_size, r.seed, r.n_test);
    }
    s
}

/// Hidden size used by each cell.
pub fn selection_csv(rows: &[Row]) -> String {
    let mut s = String::from("system,train_size,seed,hidden\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.system, r.train_size, r.seed, r.hidden);
    }
    s
}

/// Reads rows back from [`results_csv`] output. Hidden sizes are not part
/// of the table and come back as 0.
pub fn parse_results_csv(text: &str) -> Result<Vec<Row>> {
    let path = std::path::Path::new("results.csv");
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing results header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::parse(path, i + 1, format!("bad row `{l}`"));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let outcome = if f[3] == "diverged" {
                Outcome::Diverged
            } else {
                Outcome::Scored {
                    mse: f[3].parse().map_err(|_| bad())?,
                    pcc: if f[4] == "NA" { None } else { Some(f[4].parse().map_err(|_| bad())?) },
                }
            };
            Ok(Row {
                system: f[0].into(),
                train_size: f[1].parse().map_err(|_| bad())?,
                seed: f[2].parse().map_err(|_| bad())?,
                outcome,
                n_test: f[5].parse().map_err(|_| bad())?,
                hidden: 0,
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub system: String,
    pub train_size: usize,
    pub median_mse: Option<f64>,
    /// Over the runs with a defined correlation.
    pub median_pcc: Option<f64>,
    pub runs: usize,
    pub failed: usize,
}

/// Medians over seeds for each `(system, size)`, in first-seen order.
pub fn aggregate(rows: &[Row]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.system.clone(), r.train_size);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(system, train_size)| {
            let group: Vec<&Row> = rows
                .iter()
                .filter(|r| r.system == system && r.train_size == train_size)
                .collect();
            let mut mses = Vec::new();
            let mut pccs = Vec::new();
            let mut failed = 0;
            for r in &group {
                match r.outcome {
                    Outcome::Scored { mse, pcc } => {
                        mses.push(mse);
                        pccs.extend(pcc);
                    }
                    Outcome::Diverged => failed += 1,
                }
            }
            AggregateRow {
                system,
                train_size,
                median_mse: median(&mut mses),
                median_pcc: median(&mut pccs),
                runs: group.len() - failed,
                failed,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{AGGREGATE_HEADER}");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.system,
            r.train_size,
            fmt_opt(r.median_mse),
            fmt_opt(r.median_pcc),
            r.runs,
            r.failed
        );
    }
    s
}

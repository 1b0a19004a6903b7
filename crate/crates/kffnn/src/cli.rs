use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kffnn_core::dataset::{generate_synthetic, Dataset, SyntheticSpec};
use kffnn_core::gradcheck::{self, GradReport};
use kffnn_core::metrics::evaluate_clip_level;
use kffnn_core::{Envelope, ModelKind, TrainedModel};

use crate::config::{ExperimentConfig, TrainSection};
use crate::error::{Error, Result};
use crate::jsonl::{load_jsonl, save_jsonl};
use crate::model_io::{load_model, save_model};
use crate::sweep::{aggregate, aggregate_csv, results_csv, run_sweep, selection_csv, train_system};
use crate::system::{parse_envelope, parse_labels, System};

/// Seed used for gradient checks run on behalf of a sweep.
pub const GRADCHECK_SEED: u64 = 1;
pub const STAMP_FILE: &str = "gradcheck.txt";

#[derive(Parser, Debug)]
#[command(name = "kffnn", version, about = "Knowledge-infused feed-forward networks and recurrent baselines for sequence regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset as JSON lines plus a metadata sidecar.
    Generate(GenerateArgs),
    /// Train one system on a dataset and save the model.
    Train(TrainArgs),
    /// Write per-clip predictions as CSV (id,truth,prediction).
    Predict(PredictArgs),
    /// Score a model on a dataset at clip level.
    Evaluate(PredictArgs),
    /// Train and score every (system, size, seed) cell of an experiment.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Output JSONL path.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 8)]
    pub n_min: usize,
    #[arg(long, default_value_t = 12)]
    pub n_max: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 21, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    /// Envelope shaping segment evidence: name, value list or @file.
    #[arg(long, default_value = "fn1")]
    pub envelope: String,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label distribution: uniform or skewed.
    #[arg(long, default_value = "uniform")]
    pub labels: String,
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub init_range: Option<f64>,
    /// Output unit: linear or sigmoid.
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Keep the data order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
}

impl TrainOpts {
    fn apply(&self, t: &mut TrainSection) {
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lambda {
            t.lambda = v;
        }
        if let Some(v) = self.hidden {
            t.hidden = v;
            t.hidden_overrides.clear();
        }
        if let Some(v) = self.init_range {
            t.init_range = Some(v);
        }
        if let Some(v) = &self.output {
            t.output = v.clone();
        }
        if let Some(v) = self.grad_clip {
            t.grad_clip = Some(v);
        }
        if self.no_shuffle {
            t.shuffle_each_epoch = false;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub data: PathBuf,
    /// kffnn-fn1, kffnn-fn2, kffnn-fn3, kffnn-linear, ffnn, rnn, lstm or blstm.
    #[arg(short, long)]
    pub system: String,
    /// Envelope for a feed-forward system, replacing the one its name implies.
    #[arg(long)]
    pub envelope: Option<String>,
    /// Where to write the model.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    #[arg(short, long)]
    pub data: PathBuf,
    /// Reconstruction envelope; required for feed-forward models.
    #[arg(long)]
    pub envelope: Option<String>,
    /// Write here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Experiment config (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated systems.
    #[arg(long, value_delimiter = ',')]
    pub systems: Option<Vec<String>>,
    /// Comma-separated training sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Choose each cell's hidden size from 11, 22, 33 and 44.
    #[arg(long)]
    pub select_hidden: bool,
    /// Skip the gradient-check prerequisite.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// ffnn, rnn, lstm or blstm.
    #[arg(value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = GRADCHECK_SEED)]
    pub seed: u64,
    /// Record a passing result in this directory's stamp file.
    #[arg(long)]
    pub stamp: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|_| format!("expected one of ffnn, rnn, lstm, blstm; got `{s}`"))
}

/// Parses arguments and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

/// Label counts in unit-wide bins over `[0, 5]`; values outside land in
/// the nearest bin.
pub fn label_histogram(labels: &[f64]) -> [usize; 5] {
    let mut bins = [0; 5];
    for &v in labels {
        let b = (v.floor().max(0.0) as usize).min(4);
        bins[b] += 1;
    }
    bins
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        count: a.count,
        n_range: (a.n_min, a.n_max),
        feature_dim: a.dim as usize,
        envelope: parse_envelope(&a.envelope)?,
        noise_sigma: a.noise,
        seed: a.seed,
        labels: parse_labels(&a.labels)?,
    };
    spec.validate().map_err(|e| Error::usage(e.to_string()))?;
    let ds = generate_synthetic(&spec)?;
    save_jsonl(&ds, &a.out)?;
    let bins = label_histogram(&ds.labels());
    let peak = bins.iter().copied().max().unwrap_or(1).max(1);
    let mut report = format!("{} clips written to {}\nlabel histogram:\n", ds.len(), a.out.display());
    for (i, n) in bins.iter().enumerate() {
        let close = if i == 4 { ']' } else { ')' };
        let bar = "#".repeat(n * 40 / peak);
        let _ = writeln!(report, "  [{i}, {}{close} {n:>6} {bar}", i + 1);
    }
    print!("{report}");
    Ok(())
}

fn resolve_system(name: &str, envelope: Option<&str>) -> Result<System> {
    let sys: System = name.parse()?;
    match envelope {
        None => Ok(sys),
        Some(e) if sys.envelope().is_some() => Ok(System::Kffnn(parse_envelope(e)?)),
        Some(_) => Err(Error::usage(format!("system {sys} does not take an envelope"))),
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let system = resolve_system(&a.system, a.envelope.as_deref())?;
    let ds = load_jsonl(&a.data)?;
    let mut section = TrainSection::default();
    a.opts.apply(&mut section);
    let cfg = section.config(&system, a.seed)?;
    let model = train_system(&system, &ds, &cfg)?;
    save_model(&model, &a.out)?;
    println!(
        "trained {system} ({} inputs, {} hidden) on {} clips for {} epochs; model written to {}",
        model.d_in(),
        model.hidden(),
        ds.len(),
        cfg.epochs,
        a.out.display()
    );
    Ok(())
}

fn load_for_prediction(a: &PredictArgs) -> Result<(TrainedModel, Dataset, Option<Envelope>)> {
    let model = load_model(&a.model)?;
    let ds = load_jsonl(&a.data)?;
    let env = a.envelope.as_deref().map(parse_envelope).transpose()?;
    if model.is_segment_wise() && env.is_none() {
        return Err(Error::usage(
            "feed-forward models need --envelope to turn segment outputs into clip values",
        ));
    }
    if model.d_in() != ds.feature_dim {
        return Err(Error::usage(format!(
            "model expects {} features, dataset has {}",
            model.d_in(),
            ds.feature_dim
        )));
    }
    Ok((model, ds, env))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let (model, ds, env) = load_for_prediction(a)?;
    let mut s = String::from("id,truth,prediction\n");
    for clip in &ds.clips {
        let p = model.predict_clip(clip, env.as_ref())?;
        let _ = writeln!(s, "{},{},{p}", clip.id, clip.label);
    }
    emit(a.out.as_deref(), &s)
}

pub fn cmd_evaluate(a: &PredictArgs) -> Result<()> {
    let (model, ds, env) = load_for_prediction(a)?;
    let ev = evaluate_clip_level(&model, &ds, env.as_ref())?;
    let pcc = ev.pcc.map_or_else(|| "NA".to_string(), |p| p.to_string());
    let s = format!("model,mse,pcc,n_test\n{},{},{pcc},{}\n", model.kind(), ev.mse, ev.predictions.len());
    emit(a.out.as_deref(), &s)
}

fn format_report(kind: ModelKind, trials: usize, seed: u64, r: &GradReport) -> String {
    let worst = r
        .worst_weight
        .as_ref()
        .map_or_else(|| "-".to_string(), |w| format!("{}[{},{}]", w.block, w.row, w.col));
    format!(
        "{kind} trials={trials} seed={seed} {} checked={} max_rel_err={:.3e} max_abs_err={:.3e} worst={worst}",
        if r.passed { "passed" } else { "FAILED" },
        r.checked,
        r.max_rel_err,
        r.max_abs_err,
    )
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::usage("trials must be at least 1"));
    }
    let r = gradcheck::check(a.kind, a.trials, a.seed)?;
    let line = format_report(a.kind, a.trials, a.seed, &r);
    println!("{line}");
    if !r.passed {
        return Err(Error::GradCheckFailed(a.kind.to_string()));
    }
    if let Some(dir) = &a.stamp {
        append_stamp(dir, &line)?;
    }
    Ok(())
}

fn append_stamp(dir: &Path, line: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(STAMP_FILE);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

/// Trials run for each model kind when a sweep has to check gradients
/// itself.
pub fn stamp_trials(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Ffnn | ModelKind::Rnn => 100,
        ModelKind::Lstm | ModelKind::Blstm => 20,
    }
}

fn stamped_kinds(dir: &Path) -> Vec<ModelKind> {
    let Ok(text) = fs::read_to_string(dir.join(STAMP_FILE)) else {
        return Vec::new();
    };
    text.lines()
        .filter(|l| l.split_whitespace().any(|w| w == "passed"))
        .filter_map(|l| l.split_whitespace().next()?.parse().ok())
        .collect()
}

/// Makes sure every model kind in the sweep has a passing gradient check
/// recorded in `dir`, running the missing ones.
pub fn ensure_gradcheck(dir: &Path, kinds: &[ModelKind]) -> Result<()> {
    let done = stamped_kinds(dir);
    for &kind in kinds {
        if done.contains(&kind) {
            continue;
        }
        let trials = stamp_trials(kind);
        let r = gradcheck::check(kind, trials, GRADCHECK_SEED)?;
        let line = format_report(kind, trials, GRADCHECK_SEED, &r);
        eprintln!("{line}");
        if !r.passed {
            return Err(Error::GradCheckFailed(kind.to_string()));
        }
        append_stamp(dir, &line)?;
    }
    Ok(())
}

/// Config after command-line overrides.
pub fn effective_config(a: &SweepArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = &a.systems {
        cfg.systems = s.clone();
    }
    if let Some(s) = &a.sizes {
        cfg.train_sizes = s.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if a.select_hidden {
        cfg.hidden_candidates = Some(vec![11, 22, 33, 44]);
    }
    a.opts.apply(&mut cfg.train);
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `config.json`, `results.csv`, `aggregate.csv` and, with hidden
/// selection, `selection.csv` into the output directory. Returns the
/// results table.
pub fn cmd_sweep(a: &SweepArgs) -> Result<String> {
    let cfg = effective_config(a)?;
    sweep_with(&cfg, a.force)
}

pub fn sweep_with(cfg: &ExperimentConfig, force: bool) -> Result<String> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !force {
        let mut kinds: Vec<ModelKind> = cfg.parsed_systems()?.iter().map(System::kind).collect();
        kinds.sort();
        kinds.dedup();
        ensure_gradcheck(dir, &kinds)?;
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("config.json", &cfg.to_json())?;
    let ds = cfg.load_dataset()?;
    let rows = run_sweep(cfg, &ds)?;
    let results = results_csv(&rows);
    write("results.csv", &results)?;
    write("aggregate.csv", &aggregate_csv(&aggregate(&rows)))?;
    if cfg.hidden_candidates.is_some() {
        write("selection.csv", &selection_csv(&rows))?;
    }
    let failed = rows
        .iter()
        .filter(|r| r.outcome == crate::sweep::Outcome::Diverged)
        .count();
    println!(
        "{} cells ({failed} diverged); results in {}",
        rows.len(),
        dir.join("results.csv").display()
    );
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kffnn_core::TrainConfig;

    #[test]
    fn histogram_bins() {
        assert_eq!(label_histogram(&[0.0, 0.99, 1.0, 4.5, 5.0, -0.1]), [3, 1, 0, 0, 2]);
    }

    #[test]
    fn stamp_parsing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(stamped_kinds(dir.path()).is_empty());
        append_stamp(dir.path(), "rnn trials=1 seed=1 passed checked=3").unwrap();
        append_stamp(dir.path(), "ffnn trials=1 seed=1 FAILED checked=3").unwrap();
        assert_eq!(stamped_kinds(dir.path()), vec![ModelKind::Rnn]);
    }

    #[test]
    fn train_config_defaults() {
        let cfg = TrainSection::default().config(&System::Rnn, 4).unwrap();
        assert_eq!(cfg, TrainConfig { seed: 4, ..TrainConfig::default() });
    }
}

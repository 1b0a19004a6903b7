//! Experiment configuration: one JSON document, every field but the dataset
//! and training sizes optional.
//!
//! ```json
//! {
//!   "dataset": { "generate": { "count": 2100, "envelope": "fn1", "seed": 7 } },
//!   "systems": ["kffnn-fn1", "rnn"],
//!   "train_sizes": [200, 2000],
//!   "seeds": [0, 1, 2],
//!   "split": { "test_count": 100, "seed": 1 },
//!   "train": { "eta": 0.01, "epochs": 200 },
//!   "output_dir": "runs/fn1"
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kffnn_core::dataset::{generate_synthetic, Dataset, SplitPlan, SyntheticSpec};
use kffnn_core::{OutputActivation, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::load_jsonl;
use crate::system::{parse_labels, EnvelopeDef, System};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Generate(GenerateParams),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateParams {
    pub count: usize,
    pub n_range: [usize; 2],
    pub feature_dim: usize,
    pub envelope: EnvelopeDef,
    pub noise_sigma: f64,
    pub seed: u64,
    pub labels: String,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams::from_spec(&SyntheticSpec::default())
    }
}

impl GenerateParams {
    pub fn from_spec(s: &SyntheticSpec) -> Self {
        GenerateParams {
            count: s.count,
            n_range: [s.n_range.0, s.n_range.1],
            feature_dim: s.feature_dim,
            envelope: EnvelopeDef::from(&s.envelope),
            noise_sigma: s.noise_sigma,
            seed: s.seed,
            labels: s.labels.name().into(),
        }
    }

    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        let spec = SyntheticSpec {
            count: self.count,
            n_range: (self.n_range[0], self.n_range[1]),
            feature_dim: self.feature_dim,
            envelope: self.envelope.resolve()?,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            labels: parse_labels(&self.labels)?,
        };
        spec.validate().map_err(|e| Error::usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Exact test-set size; overrides `test_fraction`.
    pub test_count: Option<usize>,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.1,
            test_count: None,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn plan(&self, total: usize) -> Result<SplitPlan> {
        let plan = match self.test_count {
            Some(n) => SplitPlan::with_test_count(total, n, self.seed),
            None => SplitPlan::new(total, self.test_fraction, self.seed),
        };
        plan.map_err(|e| Error::usage(e.to_string()))
    }
}

/// Training hyperparameters shared by every system in a sweep. The seed
/// comes from the sweep's seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub init_range: Option<f64>,
    pub shuffle_each_epoch: bool,
    pub hidden: usize,
    /// Per-system hidden sizes, keyed by system name.
    pub hidden_overrides: BTreeMap<String, usize>,
    pub output: String,
    pub grad_clip: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            eta: d.eta,
            epochs: d.epochs,
            lambda: d.lambda,
            init_range: d.init_range,
            shuffle_each_epoch: d.shuffle_each_epoch,
            hidden: d.hidden,
            hidden_overrides: BTreeMap::from([("ffnn".to_string(), 22)]),
            output: d.output.name().into(),
            grad_clip: d.grad_clip,
        }
    }
}

impl TrainSection {
    pub fn hidden_for(&self, system: &System) -> usize {
        self.hidden_overrides
            .get(&system.name())
            .copied()
            .unwrap_or(self.hidden)
    }

    pub fn config(&self, system: &System, seed: u64) -> Result<TrainConfig> {
        let output: OutputActivation = self
            .output
            .parse()
            .map_err(|_| Error::usage(format!("unknown output activation `{}`", self.output)))?;
        let cfg = TrainConfig {
            eta: self.eta,
            epochs: self.epochs,
            lambda: self.lambda,
            seed,
            init_range: self.init_range,
            shuffle_each_epoch: self.shuffle_each_epoch,
            hidden: self.hidden_for(system),
            output,
            grad_clip: self.grad_clip,
        };
        cfg.validate().map_err(|e| Error::usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn default_systems() -> Vec<String> {
    System::NAMES.iter().map(|s| s.to_string()).collect()
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sweep-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_systems")]
    pub systems: Vec<String>,
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub train: TrainSection,
    /// When set, each cell picks its hidden size from these candidates on
    /// a validation slice of its training set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_candidates: Option<Vec<usize>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config file. A relative dataset path is taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        if let DatasetSource::Path(p) = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn parsed_systems(&self) -> Result<Vec<System>> {
        self.systems.iter().map(|s| s.parse()).collect()
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::usage("no systems selected"));
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return Err(Error::usage("training sizes must be a nonempty list of positive counts"));
        }
        if self.seeds.is_empty() {
            return Err(Error::usage("seed list is empty"));
        }
        for sys in self.parsed_systems()? {
            self.train.config(&sys, 0)?;
        }
        if let Some(c) = &self.hidden_candidates {
            if c.is_empty() || c.contains(&0) {
                return Err(Error::usage("hidden candidates must be positive"));
            }
        }
        if let DatasetSource::Generate(g) = &self.dataset {
            g.to_spec()?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Generate(g) => Ok(generate_synthetic(&g.to_spec()?)?),
            DatasetSource::Path(p) => load_jsonl(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"generate": {"count": 50}}, "train_sizes": [10]}"#).unwrap();
        assert_eq!(cfg.seeds.len(), 10);
        assert_eq!(cfg.systems.len(), 8);
        assert_eq!(cfg.train.hidden_for(&System::Ffnn), 22);
        assert_eq!(cfg.train.hidden_for(&System::Rnn), 21);
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        let base = r#"{"dataset": {"generate": {"feature_dim": 0}}, "train_sizes": [10]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(base).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));

        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"path": "x"}, "train_sizes": [10], "systems": ["svm"]}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));

        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"path": "x"}, "train_sizes": [10], "seeds": []}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));

        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"dataset": {"path": "x"}, "train_sizes": [1], "typo": 1}"#).is_err());
    }

    #[test]
    fn relative_dataset_path_follows_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"dataset": {"path": "d.jsonl"}, "train_sizes": [1]}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Path(dir.path().join("d.jsonl")));
    }
}

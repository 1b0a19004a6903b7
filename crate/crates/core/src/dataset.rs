//! Labelled clips, the synthetic fade-envelope generator and train/test
//! splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::knowledge::Envelope;
use crate::linalg::{Rng, Vector};

/// One slice `c_ki` of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// 1-based position within the clip.
    pub index: usize,
    pub features: Vector,
}

/// A labelled sequence of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub segments: Vec<Segment>,
    pub label: f64,
}

impl Clip {
    /// Builds a clip from per-segment features, numbering segments from 1.
    pub fn from_features(id: impl Into<String>, features: Vec<Vector>, label: f64) -> Self {
        Clip {
            id: id.into(),
            segments: features
                .into_iter()
                .enumerate()
                .map(|(i, features)| Segment {
                    index: i + 1,
                    features,
                })
                .collect(),
            label,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn features(&self) -> Vec<Vector> {
        self.segments.iter().map(|s| s.features.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelDistribution {
    /// `uniform[0, 5)`.
    #[default]
    Uniform,
    /// `1.5 + 0.6·N(0,1)` clamped to `[0, 5]`: most mass near 1.5.
    Skewed,
}

impl LabelDistribution {
    pub fn name(self) -> &'static str {
        match self {
            LabelDistribution::Uniform => "uniform",
            LabelDistribution::Skewed => "skewed",
        }
    }
}

/// Parameters of [`generate_synthetic`], kept with the dataset it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub count: usize,
    /// Inclusive range of segments per clip.
    pub n_range: (usize, usize),
    pub feature_dim: usize,
    pub envelope: Envelope,
    pub noise_sigma: f64,
    pub seed: u64,
    pub labels: LabelDistribution,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 1000,
            n_range: (8, 12),
            feature_dim: 21,
            envelope: Envelope::Fn1,
            noise_sigma: 0.1,
            seed: 0,
            labels: LabelDistribution::Uniform,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(invalid("clip count must be at least 1"));
        }
        if self.feature_dim == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        let (lo, hi) = self.n_range;
        if lo == 0 || lo > hi {
            return Err(invalid(format!("bad segment range {lo}..={hi}")));
        }
        for n in [lo, hi] {
            self.envelope.check_len(n)?;
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clips: Vec<Clip>,
    pub feature_dim: usize,
    /// Set when the dataset came from [`generate_synthetic`].
    pub meta: Option<SyntheticSpec>,
}

impl Dataset {
    /// Validates uniform feature dimension, unique ids, finite labels and
    /// segment numbering.
    pub fn new(clips: Vec<Clip>) -> Result<Self> {
        let d = clips
            .first()
            .and_then(|c| c.segments.first())
            .map(|s| s.features.len())
            .ok_or(Error::Empty("dataset"))?;
        let mut ids = BTreeSet::new();
        for clip in &clips {
            if clip.segments.is_empty() {
                return Err(invalid(format!("clip `{}` has no segments", clip.id)));
            }
            if !clip.label.is_finite() {
                return Err(Error::NonFinite(format!("label of clip `{}`", clip.id)));
            }
            if !ids.insert(clip.id.as_str()) {
                return Err(invalid(format!("duplicate clip id `{}`", clip.id)));
            }
            for (i, s) in clip.segments.iter().enumerate() {
                if s.index != i + 1 {
                    return Err(invalid(format!(
                        "clip `{}`: segment {} numbered {}",
                        clip.id,
                        i + 1,
                        s.index
                    )));
                }
                if s.features.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "segment feature dimension",
                        expected: d,
                        found: s.features.len(),
                    });
                }
            }
        }
        Ok(Dataset {
            clips,
            feature_dim: d,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Clips at `indices`, in that order, without generation metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            clips: indices.iter().map(|&i| self.clips[i].clone()).collect(),
            feature_dim: self.feature_dim,
            meta: None,
        }
    }

    /// `(sequence, label)` pairs for recurrent training.
    pub fn sequences(&self) -> Vec<(Vec<Vector>, f64)> {
        self.clips.iter().map(|c| (c.features(), c.label)).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.label).collect()
    }
}

/// Synthetic clips whose segment evidence follows `spec.envelope`.
///
/// For each clip, in this draw order: segment count `n` uniform in
/// `n_range`; label `v` from `spec.labels`; a direction `u` with coordinates
/// `uniform[0.5, 1.5)` normalised to unit length; then `n·d` Gaussian noise
/// terms, row by row. Segment `i` has features `f(i)·v·u + σ·noise`. Noise
/// is drawn even when `σ = 0` so the stream does not depend on `σ`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (lo, hi) = spec.n_range;
    let d = spec.feature_dim;
    let width = libm::log10(spec.count as f64) as usize + 1;
    let mut clips = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let n = lo + rng.below(hi - lo + 1);
        let label = match spec.labels {
            LabelDistribution::Uniform => rng.uniform_unchecked(0.0, 5.0),
            LabelDistribution::Skewed => (1.5 + 0.6 * rng.normal()).clamp(0.0, 5.0),
        };
        let mut u: Vec<f64> = (0..d).map(|_| rng.uniform_unchecked(0.5, 1.5)).collect();
        let norm = libm::sqrt(u.iter().map(|x| x * x).sum());
        u.iter_mut().for_each(|x| *x /= norm);
        let f = spec.envelope.values(n)?;
        let features = f
            .iter()
            .map(|fi| {
                let row: Vec<f64> = u
                    .iter()
                    .map(|uj| fi * label * uj + spec.noise_sigma * rng.normal())
                    .collect();
                Vector::new(row)
            })
            .collect::<Result<Vec<_>>>()?;
        clips.push(Clip::from_features(format!("clip{:0width$}", k + 1), features, label));
    }
    let mut ds = Dataset::new(clips)?;
    ds.meta = Some(spec.clone());
    Ok(ds)
}

/// A fixed held-out test set plus a shuffled pool from which nested
/// training sets are taken as prefixes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub test: Vec<usize>,
    pub pool: Vec<usize>,
}

impl SplitPlan {
    /// `round(test_fraction · total)` clips (at least one) go to test.
    pub fn new(total: usize, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(invalid("test fraction must lie in (0, 1)"));
        }
        let test = (libm::round(test_fraction * total as f64) as usize).max(1);
        Self::with_test_count(total, test, seed)
    }

    pub fn with_test_count(total: usize, test_count: usize, seed: u64) -> Result<Self> {
        if test_count == 0 || test_count >= total {
            return Err(invalid(format!(
                "test set of {test_count} clips does not fit {total} clips"
            )));
        }
        let mut order: Vec<usize> = (0..total).collect();
        Rng::new(seed).shuffle(&mut order);
        let pool = order.split_off(test_count);
        Ok(SplitPlan { test: order, pool })
    }

    /// First `size` clips of the pool; smaller sizes are prefixes of larger.
    pub fn train(&self, size: usize) -> Result<&[usize]> {
        if size == 0 || size > self.pool.len() {
            return Err(invalid(format!(
                "training size {size} exceeds the {} clips available",
                self.pool.len()
            )));
        }
        Ok(&self.pool[..size])
    }
}

/// One `(train, test)` pair per requested size, sharing a single test set.
pub fn split(
    ds: &Dataset,
    train_sizes: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<(Dataset, Dataset)>> {
    let plan = SplitPlan::new(ds.len(), test_fraction, seed)?;
    let test = ds.subset(&plan.test);
    train_sizes
        .iter()
        .map(|&size| Ok((ds.subset(plan.train(size)?), test.clone())))
        .collect()
}

//! Hyperparameters and the per-sample steepest-descent loop shared by every
//! model.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::Rng;
use crate::model::OutputActivation;
use crate::params::{self, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate.
    pub eta: f64,
    pub epochs: usize,
    /// Sigmoid steepness.
    pub lambda: f64,
    pub seed: u64,
    /// Weights start in `uniform[-r, r)`. `None` uses `r = 1/sqrt(fan_in)`
    /// per weight matrix.
    pub init_range: Option<f64>,
    pub shuffle_each_epoch: bool,
    pub hidden: usize,
    pub output: OutputActivation,
    /// Rescale each per-sample gradient to this L2 norm when it is larger.
    /// Off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.01,
            epochs: 200,
            lambda: 1.0,
            seed: 0,
            init_range: None,
            shuffle_each_epoch: true,
            hidden: 21,
            output: OutputActivation::Linear,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("learning rate must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be positive and finite"));
        }
        if let Some(r) = self.init_range {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("init range must be positive and finite"));
            }
        }
        if self.hidden == 0 {
            return Err(invalid("hidden size must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(invalid("gradient clip must be positive"));
            }
        }
        Ok(())
    }

    pub(crate) fn init_range_for(&self, fan_in: usize) -> f64 {
        self.init_range
            .unwrap_or_else(|| 1.0 / libm::sqrt(fan_in as f64))
    }

    /// Generator for weight initialisation. Models draw their shared blocks
    /// (`w_ih` then `w_ho`) first so equal seeds give equal starting weights
    /// across architectures where shapes agree.
    pub(crate) fn init_rng(&self) -> Rng {
        Rng::new(self.seed)
    }

    fn order_rng(&self) -> Rng {
        Rng::new(self.seed ^ 0xD1B5_4A32_D192_ED03)
    }
}

/// A trained model and its mean per-sample loss for each epoch, measured
/// before each sample's update.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub epoch_losses: Vec<f64>,
}

/// Plain per-sample SGD: for every sample, `step` writes the loss gradient
/// into `grads` (overwriting it) and returns the loss; weights then move by
/// `-eta * grads`.
pub(crate) fn fit<M, G, S, F>(
    mut model: M,
    mut grads: G,
    samples: &[S],
    cfg: &TrainConfig,
    mut step: F,
) -> Result<Trained<M>>
where
    M: Parameters,
    G: Parameters,
    F: FnMut(&M, &S, &mut G) -> f64,
{
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = cfg.order_rng();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for &i in &order {
            let loss = step(&model, &samples[i], &mut grads);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, sample: i });
            }
            total += loss;
            if let Some(cap) = cfg.grad_clip {
                let norm = libm::sqrt(params::squared_norm(&grads));
                if norm > cap {
                    params::scale(&mut grads, cap / norm);
                }
            }
            params::descend(&mut model, &grads, cfg.eta);
        }
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                sample: *order.last().unwrap(),
            });
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    Ok(Trained {
        model,
        epoch_losses,
    })
}

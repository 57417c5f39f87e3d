use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::batch_terms;
use super::{CompressedDataset, LearnError};
use crate::model::{check_theta, DecomposableModel};

/// Learning rates tried by [`select_learning_rate`].
pub const LR_GRID: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaInit {
    /// Uniform in `[0.5, 1.5]` times each parameter's scale.
    Random,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Timesteps per update.
    pub batch_size: usize,
    pub lambda: f64,
    pub init: ThetaInit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 100,
            batch_size: 32,
            lambda: 1.0,
            init: ThetaInit::Random,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(LearnError::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(LearnError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch size must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LearnError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub theta: Vec<f64>,
    pub theta_init: Vec<f64>,
    /// Sum of the per-timestep losses seen during each epoch.
    pub loss_history: Vec<f64>,
    /// Parameters at the end of each epoch.
    pub theta_history: Vec<Vec<f64>>,
    pub epoch_ms: Vec<f64>,
    pub lr: f64,
}

pub fn initial_theta(model: &dyn DecomposableModel, init: &ThetaInit, seed: u64) -> Result<Vec<f64>, LearnError> {
    match init {
        ThetaInit::Fixed(t) => {
            check_theta(model, t)?;
            Ok(t.clone())
        }
        ThetaInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(model
                .param_scales()
                .iter()
                .map(|s| s * rng.random_range(0.5..1.5))
                .collect())
        }
    }
}

/// Mini-batch SGD over timesteps.
///
/// The iterate is `z = theta / scale` with the model's parameter scales, and
/// the objective is the batch-mean loss divided by the mean per-timestep
/// ground-truth energy. Both are constant rescalings, so the minimizer is
/// unchanged, but one learning-rate grid then works across models.
pub fn train(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    cfg: &TrainConfig,
) -> Result<TrainResult, LearnError> {
    cfg.validate()?;
    let t_steps = cds.n_steps();
    if t_steps == 0 {
        return Err(LearnError::Config("dataset has no timesteps".into()));
    }
    let theta_init = initial_theta(model, &cfg.init, cfg.seed)?;
    let scale = model.param_scales();
    let mut z: Vec<f64> = theta_init.iter().zip(&scale).map(|(t, s)| t / s).collect();

    let energy = target_energy(cds, cfg.lambda) / t_steps as f64;
    let norm = if energy > 0.0 { 1.0 / energy } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..t_steps).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut theta_history = Vec::with_capacity(cfg.epochs);
    let mut epoch_ms = Vec::with_capacity(cfg.epochs);
    let mut step_loss = vec![0.0; t_steps];

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let theta: Vec<f64> = z.iter().zip(&scale).map(|(v, s)| v * s).collect();
            let (per, grad) = batch_terms(cds, model, &theta, cfg.lambda, batch)?;
            if per.iter().chain(&grad).any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite { epoch, lr: cfg.lr });
            }
            for (&t, l) in batch.iter().zip(per) {
                step_loss[t] = l;
            }
            let w = norm / batch.len() as f64;
            for ((zj, gj), sj) in z.iter_mut().zip(&grad).zip(&scale) {
                *zj -= cfg.lr * w * gj * sj;
            }
        }
        let theta: Vec<f64> = z.iter().zip(&scale).map(|(v, s)| v * s).collect();
        epoch_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let total: f64 = step_loss.iter().sum();
        if !total.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite { epoch, lr: cfg.lr });
        }
        loss_history.push(total);
        theta_history.push(theta);
    }
    Ok(TrainResult {
        theta: theta_history.last().cloned().unwrap_or_else(|| theta_init.clone()),
        theta_init,
        loss_history,
        theta_history,
        epoch_ms,
        lr: cfg.lr,
    })
}

fn target_energy(cds: &CompressedDataset, lambda: f64) -> f64 {
    cds.steps
        .iter()
        .flat_map(|s| &s.channels)
        .map(|c| {
            c.val_target.iter().map(|v| v * v).sum::<f64>()
                + lambda * c.freq_target.iter().map(|v| v.norm_sqr()).sum::<f64>()
        })
        .sum()
}

/// Short training runs at each candidate rate; returns the rate with the
/// lowest final full-dataset loss and every candidate's outcome (`None`
/// for rates that diverged).
pub fn select_learning_rate(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    cfg: &TrainConfig,
    candidates: &[f64],
    probe_epochs: usize,
) -> Result<(f64, Vec<(f64, Option<f64>)>), LearnError> {
    let mut outcomes = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64)> = None;
    for &lr in candidates {
        let probe = TrainConfig {
            lr,
            epochs: probe_epochs.max(1),
            ..cfg.clone()
        };
        let final_loss = match train(cds, model, &probe) {
            Ok(res) => {
                let l = super::loss_reel(cds, model, &res.theta, cfg.lambda)?;
                l.is_finite().then_some(l)
            }
            Err(LearnError::NonFinite { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(l) = final_loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((lr, l));
            }
        }
        outcomes.push((lr, final_loss));
    }
    let (lr, _) = best.ok_or_else(|| LearnError::Config("every candidate learning rate diverged".into()))?;
    Ok((lr, outcomes))
}

use rayon::prelude::*;

use super::{ChannelInfo, ChannelSketch, CompressedDataset, LearnError, StepSketch};
use crate::field::ScalarField;
use crate::model::{DecomposableModel, DomainRouting, ModelState};
use crate::sim::Trajectory;
use crate::sketch::{identity_projection, make_projection, projected_dim, Projection, ProjectionSpec};
use crate::spectral::{BetaRule, Fft2, FrequencyMask, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sketching {
    /// Gaussian projections to `ceil(ratio * d)` rows; the value domain uses
    /// `seed`, the frequency domain `seed + 1`.
    Gaussian { ratio: f64, seed: u64 },
    /// No compression; reproduces the plain decomposed loss.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub beta: BetaRule,
    pub sketching: Sketching,
    pub lambda: f64,
}

impl PreprocessConfig {
    pub fn new(beta: BetaRule, ratio: f64, seed: u64) -> Self {
        Self {
            beta,
            sketching: Sketching::Gaussian { ratio, seed },
            lambda: 1.0,
        }
    }
}

/// One channel of one timestep after the spectral split, before projection.
/// `None` marks a domain that received no data.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedChannel {
    pub mask: Option<FrequencyMask>,
    pub val_target: Option<ScalarField>,
    pub val_features: Vec<ScalarField>,
    pub freq_target: Option<Spectrum>,
    pub freq_features: Vec<Spectrum>,
}

/// Splits the ground-truth change of every channel and, with the same mask,
/// every feature. The mask comes from the change alone, so predicted and
/// ground-truth components are split identically.
pub fn decompose_step(
    model: &dyn DecomposableModel,
    fft: &Fft2,
    state: &ModelState,
    next: &ModelState,
    beta: Option<BetaRule>,
) -> Result<Vec<DecomposedChannel>, LearnError> {
    let features = model.features(state)?;
    let mut out = Vec::with_capacity(features.len());
    for (ch, feats) in model.channels().iter().zip(features) {
        let change = next.require(&ch.field)?.zip_map(state.require(&ch.field)?, |a, b| a - b)
            .map_err(crate::model::ModelError::from)?;
        let routing = if beta.is_none() {
            DomainRouting::ValueOnly
        } else {
            ch.routing
        };
        out.push(match routing {
            DomainRouting::ValueOnly => DecomposedChannel {
                mask: None,
                val_target: Some(change),
                val_features: feats,
                freq_target: None,
                freq_features: Vec::new(),
            },
            DomainRouting::FrequencyOnly => DecomposedChannel {
                mask: None,
                val_target: None,
                val_features: Vec::new(),
                freq_target: Some(fft.forward(&change)),
                freq_features: feats.iter().map(|f| fft.forward(f)).collect(),
            },
            DomainRouting::Split => {
                let rule = beta.expect("split routing implies a threshold rule");
                let pair = fft.vfdd_rule(&change, rule)?;
                let mask = pair.mask.clone();
                let kept = mask.count();
                let has_val = kept < mask.keep().len();
                let has_freq = kept > 0;
                let mut val_features = Vec::new();
                let mut freq_features = Vec::new();
                for f in &feats {
                    let p = fft.decompose_with_mask(f, &mask)?;
                    if has_val {
                        val_features.push(p.s_val);
                    }
                    if has_freq {
                        freq_features.push(p.s_freq);
                    }
                }
                DecomposedChannel {
                    mask: Some(mask),
                    val_target: has_val.then_some(pair.s_val),
                    val_features,
                    freq_target: has_freq.then_some(pair.s_freq),
                    freq_features,
                }
            }
        });
    }
    Ok(out)
}

fn sketch_channel(
    dc: DecomposedChannel,
    pval: &Projection,
    pfreq: &Projection,
) -> Result<ChannelSketch, LearnError> {
    let (val_target, val_features) = match &dc.val_target {
        Some(t) => {
            let mut xs: Vec<&[f64]> = vec![t.data()];
            xs.extend(dc.val_features.iter().map(|f| f.data()));
            let mut out = pval.apply_many_real(&xs)?.into_iter();
            let target = out.next().expect("target sketch");
            (target, out.flatten().collect())
        }
        None => (Vec::new(), Vec::new()),
    };
    let (freq_target, freq_features) = match &dc.freq_target {
        Some(t) => {
            let support: Vec<usize> = match &dc.mask {
                Some(m) => m.keep().iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect(),
                None => (0..t.coeffs().len()).collect(),
            };
            let mut zs = vec![t.coeffs()];
            zs.extend(dc.freq_features.iter().map(|f| f.coeffs()));
            // unitary scaling: by Parseval the two domains then carry the
            // same energy as the signal, so lambda = 1 weighs them equally
            let unit = 1.0 / (t.coeffs().len() as f64).sqrt();
            let mut out = pfreq
                .apply_many_sparse_complex(&support, &zs)?
                .into_iter()
                .map(|v| v.into_iter().map(|z| z * unit).collect::<Vec<_>>());
            let target = out.next().expect("target sketch");
            (target, out.flatten().collect())
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(ChannelSketch {
        mask: dc.mask,
        val_target,
        val_features,
        freq_target,
        freq_features,
    })
}

fn build(
    traj: &Trajectory,
    model: &dyn DecomposableModel,
    beta: Option<BetaRule>,
    sketching: Sketching,
    lambda: f64,
) -> Result<CompressedDataset, LearnError> {
    traj.check_model(model)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LearnError::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if let Some(b) = beta {
        b.validate()?;
    }
    if traj.states.len() < 2 {
        return Err(crate::sim::SimError::TooShort {
            needed: 2,
            got: traj.states.len(),
        }
        .into());
    }
    let d = traj.grid.len();
    let (val_spec, freq_spec, ratio): (ProjectionSpec, ProjectionSpec, f64) = match sketching {
        Sketching::Gaussian { ratio, seed } => {
            let n = projected_dim(ratio, d)?;
            (
                make_projection(n, d, seed)?,
                make_projection(n, d, seed.wrapping_add(1))?,
                ratio,
            )
        }
        Sketching::Identity => (identity_projection(d)?, identity_projection(d)?, 1.0),
    };
    let uses_freq = beta.is_some()
        && model
            .channels()
            .iter()
            .any(|c| c.routing != DomainRouting::ValueOnly);
    let pval = val_spec.materialize();
    // skip generating a matrix no channel will use
    let pfreq = if uses_freq {
        freq_spec.materialize()
    } else {
        identity_projection(d)?.materialize()
    };
    let fft = Fft2::new(&traj.grid);

    let steps: Vec<StepSketch> = (0..traj.n_steps())
        .into_par_iter()
        .map(|t| {
            let parts = decompose_step(model, &fft, &traj.states[t], &traj.states[t + 1], beta)?;
            let channels = parts
                .into_iter()
                .map(|dc| sketch_channel(dc, &pval, &pfreq))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(StepSketch { channels })
        })
        .collect::<Result<_, LearnError>>()?;

    let channels = model
        .channels()
        .iter()
        .map(|c| ChannelInfo {
            field: c.field.clone(),
            n_features: c.n_features,
            routing: if beta.is_none() {
                DomainRouting::ValueOnly
            } else {
                c.routing
            },
        })
        .collect();
    Ok(CompressedDataset {
        model: traj.model,
        config_text: traj.config_text.clone(),
        grid: traj.grid,
        channels,
        param_names: traj.param_names.clone(),
        theta_true: traj.theta_true.clone(),
        beta,
        ratio,
        val_spec,
        freq_spec,
        lambda,
        steps,
    })
}

/// Spectral split plus projection of every timestep, in parallel across
/// timesteps. A pure function of its inputs.
pub fn preprocess(
    traj: &Trajectory,
    model: &dyn DecomposableModel,
    cfg: &PreprocessConfig,
) -> Result<CompressedDataset, LearnError> {
    build(traj, model, Some(cfg.beta), cfg.sketching, cfg.lambda)
}

/// Uncompressed, undecomposed training data for the baseline loss.
pub fn raw_dataset(traj: &Trajectory, model: &dyn DecomposableModel) -> Result<CompressedDataset, LearnError> {
    build(traj, model, None, Sketching::Identity, 1.0)
}

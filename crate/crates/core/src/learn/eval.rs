use rayon::prelude::*;

use super::LearnError;
use crate::model::{check_theta, DecomposableModel, ModelError};
use crate::sim::{run_to_end, SimError};

/// Final-step rollout error of learned parameters against the true ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    pub fields: Vec<String>,
    /// Mean over the non-diverged initial conditions and all cells.
    pub mse: Vec<f64>,
    pub n_ics: usize,
    /// Seeds whose learned-parameter rollout diverged or broke the
    /// stability guard. They are excluded from `mse`.
    pub diverged: Vec<u64>,
}

/// Rolls out from each seeded initial condition under `theta_hat` and under
/// the model's true parameters and compares the final states. Initial
/// conditions run in parallel.
pub fn evaluate_rollout_mse(
    theta_hat: &[f64],
    model: &dyn DecomposableModel,
    ic_seeds: &[u64],
    n_steps: usize,
) -> Result<RolloutReport, LearnError> {
    check_theta(model, theta_hat)?;
    let fields = model.field_names();
    let per_ic: Vec<Option<Vec<f64>>> = ic_seeds
        .par_iter()
        .map(|&seed| -> Result<Option<Vec<f64>>, LearnError> {
            let s0 = model.initial_state(seed)?;
            let truth = run_to_end(model, s0.clone(), model.true_theta(), n_steps, seed)?;
            let pred = match run_to_end(model, s0, theta_hat, n_steps, seed) {
                Ok(p) => p,
                Err(SimError::Divergence { .. }) | Err(SimError::Model(ModelError::Unstable { .. })) => {
                    return Ok(None)
                }
                Err(e) => return Err(e.into()),
            };
            let mut out = Vec::with_capacity(fields.len());
            for name in &fields {
                let a = truth.require(name)?;
                let b = pred.require(name)?;
                let se: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
                out.push(se / a.data().len() as f64);
            }
            Ok(Some(out))
        })
        .collect::<Result<_, _>>()?;

    let mut mse = vec![0.0; fields.len()];
    let mut diverged = Vec::new();
    let mut kept = 0usize;
    for (seed, r) in ic_seeds.iter().zip(&per_ic) {
        match r {
            Some(v) => {
                kept += 1;
                for (m, x) in mse.iter_mut().zip(v) {
                    *m += x;
                }
            }
            None => diverged.push(*seed),
        }
    }
    for m in &mut mse {
        *m = if kept > 0 { *m / kept as f64 } else { f64::NAN };
    }
    Ok(RolloutReport {
        fields,
        mse,
        n_ics: ic_seeds.len(),
        diverged,
    })
}

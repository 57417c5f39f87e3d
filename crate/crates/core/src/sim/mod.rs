//! Explicit-Euler forward simulation and trajectory persistence.

mod dataset;

use thiserror::Error;

use crate::field::{GridSpec, ScalarField};
use crate::io::FormatError;
use crate::model::{
    build_model, check_stability, check_theta, evaluate_rhs, DecomposableModel, ModelError, ModelKind,
    ModelState, SimConfig,
};

pub use dataset::{load, read_header, save, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("divergence at step {step}: field '{field}' reached {value:e}")]
    Divergence {
        step: usize,
        field: String,
        value: f64,
    },
    #[error("trajectory needs at least {needed} states, has {got}")]
    TooShort { needed: usize, got: usize },
    #[error("trajectory does not match the model: {0}")]
    Mismatch(String),
}

/// States `u(0), ..., u(T)` of one explicit-Euler run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model: ModelKind,
    pub grid: GridSpec,
    /// Evolving fields, in channel order.
    pub field_names: Vec<String>,
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    /// Seed of the initial condition and of any stochastic sources.
    pub seed: u64,
    /// TOML text of the generating configuration.
    pub config_text: String,
    pub states: Vec<ModelState>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn config(&self) -> Result<SimConfig, ModelError> {
        SimConfig::from_toml_str(&self.config_text)
    }

    /// Checks that the trajectory was produced by a model of the same shape.
    pub fn check_model(&self, model: &dyn DecomposableModel) -> Result<(), SimError> {
        if self.model != model.kind() {
            return Err(SimError::Mismatch(format!(
                "trajectory model {} vs {}",
                self.model,
                model.kind()
            )));
        }
        self.grid
            .check_compatible(&model.grid())
            .map_err(ModelError::from)?;
        if self.field_names != model.field_names() {
            return Err(SimError::Mismatch(format!(
                "fields {:?} vs {:?}",
                self.field_names,
                model.field_names()
            )));
        }
        Ok(())
    }

    /// The first `n + 1` states.
    pub fn truncated(&self, n_steps: usize) -> Trajectory {
        let mut t = self.clone();
        t.states.truncate(n_steps + 1);
        t
    }
}

fn advance(
    model: &dyn DecomposableModel,
    state: &ModelState,
    theta: &[f64],
    dt: f64,
    step_index: usize,
) -> Result<ModelState, SimError> {
    check_theta(model, theta)?;
    check_stability(model, state, theta, dt)?;
    let rhs = evaluate_rhs(model, state, theta)?;
    let limit = model.hard_limit();
    let mut next = state.clone();
    for (ch, r) in model.channels().iter().zip(rhs) {
        let f = next
            .get_mut(&ch.field)
            .ok_or_else(|| ModelError::MissingField(ch.field.clone()))?;
        f.axpy(dt, &r).map_err(ModelError::from)?;
        if let Some(&bad) = f.data().iter().find(|v| !v.is_finite() || v.abs() > limit) {
            return Err(SimError::Divergence {
                step: step_index,
                field: ch.field.clone(),
                value: bad,
            });
        }
    }
    Ok(next)
}

/// One explicit-Euler step under the model's true parameters.
pub fn step(model: &dyn DecomposableModel, state: &ModelState, dt: f64) -> Result<ModelState, SimError> {
    advance(model, state, model.true_theta(), dt, 0)
}

/// One explicit-Euler step under arbitrary parameters.
pub fn step_with_theta(
    model: &dyn DecomposableModel,
    state: &ModelState,
    theta: &[f64],
    dt: f64,
) -> Result<ModelState, SimError> {
    advance(model, state, theta, dt, 0)
}

/// Runs `n_steps` steps from `initial` under `theta`, refreshing the
/// time-dependent sources (seeded by `seed`) before each step.
pub fn rollout_with_theta(
    model: &dyn DecomposableModel,
    initial: ModelState,
    theta: &[f64],
    n_steps: usize,
    seed: u64,
) -> Result<Vec<ModelState>, SimError> {
    let dt = model.grid().dt;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(initial);
    for k in 0..n_steps {
        let mut next = advance(model, &states[k], theta, dt, k)?;
        model.refresh_sources(&mut next, seed, k + 1)?;
        states.push(next);
    }
    Ok(states)
}

/// Like [`rollout_with_theta`] but keeps only the final state.
pub fn run_to_end(
    model: &dyn DecomposableModel,
    initial: ModelState,
    theta: &[f64],
    n_steps: usize,
    seed: u64,
) -> Result<ModelState, SimError> {
    let dt = model.grid().dt;
    let mut state = initial;
    for k in 0..n_steps {
        state = advance(model, &state, theta, dt, k)?;
        model.refresh_sources(&mut state, seed, k + 1)?;
    }
    Ok(state)
}

pub fn rollout(
    model: &dyn DecomposableModel,
    initial: ModelState,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if n_steps == 0 {
        return Err(SimError::TooShort { needed: 2, got: 1 });
    }
    let states = rollout_with_theta(model, initial, model.true_theta(), n_steps, seed)?;
    Ok(Trajectory {
        model: model.kind(),
        grid: model.grid(),
        field_names: model.field_names(),
        param_names: model.param_names().to_vec(),
        theta_true: model.true_theta().to_vec(),
        seed,
        config_text: model.config().to_toml_string(),
        states,
    })
}

/// Builds the configured model and runs it from its seeded initial condition.
pub fn simulate(config: &SimConfig) -> Result<Trajectory, SimError> {
    let model = build_model(config)?;
    let initial = model.initial_state(config.seed)?;
    rollout(model.as_ref(), initial, config.steps, config.seed)
}

/// `u(t + 1) - u(t)` for every step, indexed `[t][channel]`.
pub fn extract_changes(traj: &Trajectory) -> Result<Vec<Vec<ScalarField>>, SimError> {
    if traj.states.len() < 2 {
        return Err(SimError::TooShort {
            needed: 2,
            got: traj.states.len(),
        });
    }
    traj.states
        .windows(2)
        .map(|w| {
            traj.field_names
                .iter()
                .map(|name| {
                    let a = w[0].require(name)?;
                    let b = w[1].require(name)?;
                    Ok(b.zip_map(a, |x, y| x - y).map_err(ModelError::from)?)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeatModel, LaserConfig};
    use std::f64::consts::PI;

    fn heat_config(n: usize, gamma: f64) -> SimConfig {
        let mut cfg = SimConfig::preset(ModelKind::Heat, n);
        cfg.laser = LaserConfig {
            gamma,
            omega: 2.0,
            center: None,
        };
        cfg
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let m = HeatModel::new(heat_config(16, 0.0)).unwrap();
        let s = ModelState::new()
            .with("T", ScalarField::constant(m.grid(), 1.3))
            .unwrap()
            .with("Q", ScalarField::zeros(m.grid()))
            .unwrap();
        assert_eq!(step(&m, &s, 0.1).unwrap(), s);
    }

    #[test]
    fn single_mode_decay_matches_closed_form() {
        let m = HeatModel::new(heat_config(32, 0.0)).unwrap();
        let g = m.grid();
        let mode = ScalarField::from_fn(g, |i, j| (2.0 * PI * (i as f64 / 32.0 + 2.0 * j as f64 / 32.0)).cos());
        let lam = 2.0 * ((2.0 * PI / 32.0).cos() - 1.0) + 2.0 * ((4.0 * PI / 32.0).cos() - 1.0);
        let s = ModelState::new()
            .with("T", mode.clone())
            .unwrap()
            .with("Q", ScalarField::zeros(g))
            .unwrap();
        let th = m.true_theta();
        let factor = 1.0 + 0.1 * th[0] / th[1] * lam;
        let mut cur = s;
        for n in 1..=20 {
            cur = step(&m, &cur, 0.1).unwrap();
            let expect = factor.powi(n);
            let t = cur.require("T").unwrap();
            for (a, b) in t.data().iter().zip(mode.data()) {
                assert!((a - expect * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rollout_composes_steps() {
        let m = HeatModel::new(heat_config(16, 2.0)).unwrap();
        let s0 = m.initial_state(3).unwrap();
        let traj = rollout(&m, s0.clone(), 2, 3).unwrap();
        let s1 = step(&m, &s0, 0.1).unwrap();
        let s2 = step(&m, &s1, 0.1).unwrap();
        assert_eq!(traj.states, vec![s0, s1, s2]);
    }

    #[test]
    fn rollout_is_deterministic() {
        let cfg = SimConfig {
            steps: 20,
            ..SimConfig::preset(ModelKind::Nanovoid, 16)
        };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn changes_telescope() {
        let cfg = SimConfig {
            steps: 15,
            ..heat_config(16, 3.0)
        };
        let traj = simulate(&cfg).unwrap();
        let changes = extract_changes(&traj).unwrap();
        assert_eq!(changes.len(), 15);
        let mut acc = traj.states[0].require("T").unwrap().clone();
        for c in &changes {
            acc.axpy(1.0, &c[0]).unwrap();
        }
        let last = traj.states[15].require("T").unwrap();
        for (a, b) in acc.data().iter().zip(last.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_trajectory_has_zero_changes() {
        let m = HeatModel::new(heat_config(8, 0.0)).unwrap();
        let s = ModelState::new()
            .with("T", ScalarField::constant(m.grid(), 2.0))
            .unwrap()
            .with("Q", ScalarField::zeros(m.grid()))
            .unwrap();
        let traj = rollout(&m, s, 3, 0).unwrap();
        for c in extract_changes(&traj).unwrap() {
            assert_eq!(c[0].max_abs(), 0.0);
        }
        let short = traj.truncated(0);
        assert!(matches!(extract_changes(&short), Err(SimError::TooShort { .. })));
    }

    #[test]
    fn oversized_step_is_rejected_with_budget() {
        let m = HeatModel::new(heat_config(8, 1.0)).unwrap();
        let s = m.initial_state(0).unwrap();
        let err = step(&m, &s, 5.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("budget"), "{msg}");
    }

    #[test]
    fn divergence_names_field_and_step() {
        let mut cfg = heat_config(8, 1.0);
        // Loosen the guard so the unstable step actually runs.
        cfg.c_stab = 100.0;
        cfg.dt = 3.0;
        let m = HeatModel::new(cfg).unwrap();
        let s = m.initial_state(0).unwrap();
        match rollout(&m, s, 200, 0) {
            Err(SimError::Divergence { field, step, .. }) => {
                assert_eq!(field, "T");
                assert!(step > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sintering_density_is_conserved() {
        let cfg = SimConfig {
            steps: 100,
            ..SimConfig::preset(ModelKind::SinteringLite, 24)
        };
        let traj = simulate(&cfg).unwrap();
        let s0 = traj.states[0].require("phi").unwrap().sum();
        let s1 = traj.states[100].require("phi").unwrap().sum();
        assert!(((s1 - s0) / s0).abs() < 1e-10);
        assert_ne!(traj.states[0], traj.states[100]);
    }
}

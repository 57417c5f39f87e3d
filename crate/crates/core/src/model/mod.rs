//! Decomposable phase-field models.
//!
//! Every model writes the time derivative of each evolving field as
//! `du/dt = sum_i phi_i(theta) W_i(u)`: parameter-only coefficients times
//! parameter-free feature fields. Learning only ever touches the
//! coefficients, so the features can be computed (and compressed) once.

mod config;
mod heat;
mod nanovoid;
mod sintering;
mod state;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{FieldError, GridSpec, ScalarField};
use crate::taylor::TaylorError;

pub use config::{
    HeatConfig, Interpolation, LaserConfig, ModelKind, NanovoidConfig, SimConfig, SinteringConfig,
};
pub use heat::HeatModel;
pub use nanovoid::NanovoidModel;
pub use sintering::{FreeEnergy, SinteringModel, MECHANISMS};
pub use state::ModelState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Taylor(#[from] TaylorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("state is missing field '{0}'")]
    MissingField(String),
    #[error("parameter vector has {got} entries, model expects {expected}")]
    ThetaLength { expected: usize, got: usize },
    #[error("time step {dt} exceeds the stability budget {budget:.4e} of channel '{channel}'")]
    Unstable {
        channel: String,
        dt: f64,
        budget: f64,
    },
}

/// Which spectral domains a channel's data is routed to during preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainRouting {
    /// Threshold split into value and frequency parts.
    Split,
    /// Everything goes to the value domain.
    ValueOnly,
    /// Everything goes to the frequency domain.
    FrequencyOnly,
}

/// One evolving field and the number of feature terms in its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub field: String,
    pub n_features: usize,
    pub routing: DomainRouting,
}

pub trait DecomposableModel: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn config(&self) -> &SimConfig;
    fn grid(&self) -> GridSpec;
    fn channels(&self) -> &[ChannelSpec];
    /// Non-evolving fields the features read from the state.
    fn aux_fields(&self) -> &[String];
    fn param_names(&self) -> &[String];
    fn true_theta(&self) -> &[f64];

    /// Characteristic magnitudes used to nondimensionalize optimization.
    fn param_scales(&self) -> Vec<f64> {
        self.true_theta().iter().map(|v| v.abs().max(1e-12)).collect()
    }

    /// Coefficients `phi_i(theta)`, one vector per channel.
    fn param_values(&self, theta: &[f64]) -> Vec<Vec<f64>>;

    /// `d phi_i / d theta_j`, indexed `[channel][feature][param]`.
    fn param_jacobian(&self, theta: &[f64]) -> Vec<Vec<Vec<f64>>>;

    /// Feature fields `W_i(u)`, one vector per channel.
    fn features(&self, state: &ModelState) -> Result<Vec<Vec<ScalarField>>, ModelError>;

    /// Upper estimate of the spectral radius of each channel's linearized
    /// right-hand side.
    fn stiffness(&self, state: &ModelState, theta: &[f64]) -> Result<Vec<f64>, ModelError>;

    fn initial_state(&self, seed: u64) -> Result<ModelState, ModelError>;

    /// Updates time-dependent auxiliary fields before step `step` of the
    /// trajectory started from `seed` is taken.
    fn refresh_sources(
        &self,
        _state: &mut ModelState,
        _seed: u64,
        _step: usize,
    ) -> Result<(), ModelError> {
        Ok(())
    }

    /// Values beyond this magnitude count as divergence.
    fn hard_limit(&self) -> f64 {
        1e6
    }

    /// Soft physical-range violations; informational only.
    fn range_warnings(&self, _state: &ModelState) -> Vec<String> {
        Vec::new()
    }

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    fn n_features(&self) -> usize {
        self.channels().iter().map(|c| c.n_features).sum()
    }

    fn field_names(&self) -> Vec<String> {
        self.channels().iter().map(|c| c.field.clone()).collect()
    }
}

pub fn check_theta(model: &dyn DecomposableModel, theta: &[f64]) -> Result<(), ModelError> {
    if theta.len() != model.n_params() {
        return Err(ModelError::ThetaLength {
            expected: model.n_params(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// A parameter vector bound to the model that interprets it.
#[derive(Clone, Copy)]
pub struct ParamVector<'a> {
    model: &'a dyn DecomposableModel,
    theta: &'a [f64],
}

impl<'a> ParamVector<'a> {
    pub fn new(model: &'a dyn DecomposableModel, theta: &'a [f64]) -> Result<Self, ModelError> {
        check_theta(model, theta)?;
        Ok(Self { model, theta })
    }

    pub fn theta(&self) -> &[f64] {
        self.theta
    }

    /// Coefficients of all channels, concatenated in channel order.
    pub fn values(&self) -> Vec<f64> {
        self.model.param_values(self.theta).concat()
    }

    /// Jacobian rows of all channels, concatenated in channel order.
    pub fn jacobian(&self) -> Vec<Vec<f64>> {
        self.model.param_jacobian(self.theta).concat()
    }
}

pub fn build_model(config: &SimConfig) -> Result<Box<dyn DecomposableModel>, ModelError> {
    config.validate()?;
    Ok(match config.model {
        ModelKind::Heat => Box::new(HeatModel::new(config.clone())?),
        ModelKind::Sintering | ModelKind::SinteringLite => {
            Box::new(SinteringModel::new(config.clone())?)
        }
        ModelKind::Nanovoid => Box::new(NanovoidModel::new(config.clone())?),
    })
}

/// Right-hand side `sum_i phi_i(theta) W_i(u)` of every channel.
pub fn evaluate_rhs(
    model: &dyn DecomposableModel,
    state: &ModelState,
    theta: &[f64],
) -> Result<Vec<ScalarField>, ModelError> {
    check_theta(model, theta)?;
    let features = model.features(state)?;
    let coeffs = model.param_values(theta);
    let grid = model.grid();
    let mut out = Vec::with_capacity(features.len());
    for (feats, phis) in features.iter().zip(&coeffs) {
        let mut acc = ScalarField::zeros(grid);
        for (w, &p) in feats.iter().zip(phis) {
            acc.axpy(p, w)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Explicit-Euler stability guard: `dt * lambda_max <= 8 c_stab` per channel.
///
/// For a diffusion channel this is `dt <= c_stab dx^2 / D`; at `c_stab = 0.2`
/// it keeps every channel at 80% of the forward-Euler limit.
pub fn check_stability(
    model: &dyn DecomposableModel,
    state: &ModelState,
    theta: &[f64],
    dt: f64,
) -> Result<(), ModelError> {
    let c_stab = model.config().c_stab;
    let lambdas = model.stiffness(state, theta)?;
    for (ch, lam) in model.channels().iter().zip(lambdas) {
        if lam > 0.0 {
            let budget = 8.0 * c_stab / lam;
            if dt > budget {
                return Err(ModelError::Unstable {
                    channel: ch.field.clone(),
                    dt,
                    budget,
                });
            }
        }
    }
    Ok(())
}

/// Gaussian beam `2 Gamma / (pi omega^2) exp(-r^2 / (2 omega^2))` with `r`
/// the minimum-image distance on the periodic grid.
pub fn laser_flux(grid: GridSpec, laser: &LaserConfig) -> Result<ScalarField, ModelError> {
    let (gamma, omega) = (laser.gamma, laser.omega);
    if !(omega > 0.0 && omega.is_finite()) || !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(ModelError::Config(format!(
            "laser needs omega > 0 and gamma >= 0 (got omega={omega}, gamma={gamma})"
        )));
    }
    let [cx, cy] = laser
        .center
        .unwrap_or([grid.nx as f64 / 2.0, grid.ny as f64 / 2.0]);
    let amp = 2.0 * gamma / (PI * omega * omega);
    let wrap = |d: f64, n: f64| {
        let d = d.rem_euclid(n);
        d.min(n - d)
    };
    Ok(ScalarField::from_fn(grid, |i, j| {
        let rx = wrap(i as f64 - cx, grid.nx as f64) * grid.dx;
        let ry = wrap(j as f64 - cy, grid.ny as f64) * grid.dx;
        amp * (-(rx * rx + ry * ry) / (2.0 * omega * omega)).exp()
    }))
}

/// Smooth random periodic field: a few low-wavenumber sinusoids with seeded
/// wavevectors, phases and amplitudes, normalized to peak `amplitude`.
pub(crate) fn smooth_random_field(grid: GridSpec, modes: usize, amplitude: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..modes)
        .map(|_| {
            let kx = rng.random_range(1..=3) as f64;
            let ky = rng.random_range(0..=3) as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            let a = rng.random_range(0.5..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            (kx, ky, phase, a)
        })
        .collect();
    let (nx, ny) = (grid.nx as f64, grid.ny as f64);
    let mut f = ScalarField::from_fn(grid, |i, j| {
        waves
            .iter()
            .map(|&(kx, ky, ph, a)| a * (2.0 * PI * (kx * i as f64 / nx + ky * j as f64 / ny) + ph).sin())
            .sum()
    });
    let peak = f.max_abs();
    if peak > 0.0 {
        f = f.scale(amplitude / peak);
    }
    f
}

/// Smoothed indicator of a disc, `0.5 (1 - tanh(2 (r - R) / w))`, with
/// periodic minimum-image distances in cell units.
pub(crate) fn disc_profile(grid: GridSpec, center: [f64; 2], radius: f64, width: f64) -> ScalarField {
    let wrap = |d: f64, n: f64| {
        let d = d.rem_euclid(n);
        d.min(n - d)
    };
    ScalarField::from_fn(grid, |i, j| {
        let rx = wrap(i as f64 - center[0], grid.nx as f64);
        let ry = wrap(j as f64 - center[1], grid.ny as f64);
        let r = (rx * rx + ry * ry).sqrt();
        0.5 * (1.0 - (2.0 * (r - radius) / width).tanh())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laser_peak_value() {
        let g = GridSpec::new(16, 16, 1.0, 0.1).unwrap();
        let laser = LaserConfig {
            gamma: PI,
            omega: 1.0,
            center: Some([4.0, 5.0]),
        };
        let q = laser_flux(g, &laser).unwrap();
        assert!((q[(4, 5)] - 2.0).abs() < 1e-12);
        assert!(q.data().iter().all(|&v| v <= 2.0 + 1e-12 && v > 0.0));
    }

    #[test]
    fn laser_is_periodic_around_edges() {
        let g = GridSpec::new(16, 16, 1.0, 0.1).unwrap();
        let laser = LaserConfig {
            gamma: 1.0,
            omega: 2.0,
            center: Some([0.0, 0.0]),
        };
        let q = laser_flux(g, &laser).unwrap();
        assert!((q[(1, 0)] - q[(15, 0)]).abs() < 1e-15);
        assert!((q[(0, 2)] - q[(0, 14)]).abs() < 1e-15);
    }

    #[test]
    fn laser_rejects_bad_width() {
        let g = GridSpec::new(8, 8, 1.0, 0.1).unwrap();
        for (gamma, omega) in [(1.0, 0.0), (1.0, -1.0), (-1.0, 1.0), (1.0, f64::NAN)] {
            let laser = LaserConfig {
                gamma,
                omega,
                center: None,
            };
            assert!(laser_flux(g, &laser).is_err());
        }
    }

    #[test]
    fn smooth_field_is_seeded_and_bounded() {
        let g = GridSpec::new(16, 12, 1.0, 0.1).unwrap();
        let a = smooth_random_field(g, 3, 0.4, 9);
        let b = smooth_random_field(g, 3, 0.4, 9);
        let c = smooth_random_field(g, 3, 0.4, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.max_abs() - 0.4).abs() < 1e-12);
    }
}

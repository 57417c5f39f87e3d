use crate::field::{laplacian, GridSpec, ScalarField};

use super::{
    check_theta, laser_flux, smooth_random_field, ChannelSpec, DecomposableModel, DomainRouting,
    ModelError, ModelKind, ModelState, SimConfig,
};

/// Heat conduction with a laser source:
/// `dT/dt = (k / rho_cp) lap T + (1 / rho_cp) Q`.
#[derive(Debug, Clone)]
pub struct HeatModel {
    config: SimConfig,
    grid: GridSpec,
    names: Vec<String>,
    theta: Vec<f64>,
    channels: Vec<ChannelSpec>,
    aux: Vec<String>,
    source: ScalarField,
}

pub const HEAT_DEFAULTS: [f64; 2] = [0.5, 2.0];

impl HeatModel {
    pub fn new(config: SimConfig) -> Result<Self, ModelError> {
        let grid = config.grid()?;
        let names = vec!["k".to_string(), "rho_cp".to_string()];
        let theta = config.resolve_theta(&names, &HEAT_DEFAULTS)?;
        let source = laser_flux(grid, &config.laser)?;
        Ok(Self {
            config,
            grid,
            names,
            theta,
            channels: vec![ChannelSpec {
                field: "T".into(),
                n_features: 2,
                routing: DomainRouting::Split,
            }],
            aux: vec!["Q".into()],
            source,
        })
    }

    pub fn source(&self) -> &ScalarField {
        &self.source
    }
}

impl DecomposableModel for HeatModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Heat
    }

    fn config(&self) -> &SimConfig {
        &self.config
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    fn aux_fields(&self) -> &[String] {
        &self.aux
    }

    fn param_names(&self) -> &[String] {
        &self.names
    }

    fn true_theta(&self) -> &[f64] {
        &self.theta
    }

    fn param_values(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let (k, c) = (theta[0], theta[1]);
        vec![vec![k / c, 1.0 / c]]
    }

    fn param_jacobian(&self, theta: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let (k, c) = (theta[0], theta[1]);
        vec![vec![vec![1.0 / c, -k / (c * c)], vec![0.0, -1.0 / (c * c)]]]
    }

    fn features(&self, state: &ModelState) -> Result<Vec<Vec<ScalarField>>, ModelError> {
        let t = state.require("T")?;
        let q = state.require("Q")?;
        self.grid.check_compatible(t.grid())?;
        Ok(vec![vec![laplacian(t), q.clone()]])
    }

    fn stiffness(&self, _state: &ModelState, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let dx2 = self.grid.dx * self.grid.dx;
        Ok(vec![8.0 * (theta[0] / theta[1]).abs() / dx2])
    }

    fn initial_state(&self, seed: u64) -> Result<ModelState, ModelError> {
        let h = &self.config.heat;
        let t = smooth_random_field(self.grid, h.modes, h.perturbation, seed).map(|v| v + h.ambient);
        ModelState::new().with("T", t)?.with("Q", self.source.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::evaluate_rhs;

    fn model() -> HeatModel {
        HeatModel::new(SimConfig::preset(ModelKind::Heat, 16)).unwrap()
    }

    #[test]
    fn doubling_coefficients_doubles_rhs() {
        let m = model();
        let s = m.initial_state(3).unwrap();
        let th = m.true_theta().to_vec();
        let a = evaluate_rhs(&m, &s, &th).unwrap();
        // Halving rho_cp doubles both coefficients.
        let b = evaluate_rhs(&m, &s, &[th[0], th[1] / 2.0]).unwrap();
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = model();
        let th = [0.7, 1.3];
        let jac = m.param_jacobian(&th);
        for p in 0..2 {
            let h = 1e-6;
            let mut tp = th;
            let mut tm = th;
            tp[p] += h;
            tm[p] -= h;
            let vp = m.param_values(&tp);
            let vm = m.param_values(&tm);
            for f in 0..2 {
                let fd = (vp[0][f] - vm[0][f]) / (2.0 * h);
                assert!((fd - jac[0][f][p]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn missing_source_is_an_error() {
        let m = model();
        let s = ModelState::new().with("T", ScalarField::zeros(m.grid())).unwrap();
        assert!(matches!(m.features(&s), Err(ModelError::MissingField(n)) if n == "Q"));
    }
}

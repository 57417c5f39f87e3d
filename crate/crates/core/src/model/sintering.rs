//! Solid-state sintering: a conserved density field `phi`, non-conserved
//! grain order parameters `eta_1..eta_m` and a temperature field `T`.
//!
//! The density mobility sums four diffusion mechanisms (volume, vapor,
//! surface, grain boundary), each with an Arrhenius factor. The Taylor
//! expansion of those factors is what makes the `phi` equation linear in its
//! parameters: mechanism `l` contributes features
//! `div(c_l(phi, eta) s_i(T) grad mu)` with coefficients `D_l Q_l^i`.

use crate::field::{div_flux, laplacian, GridSpec, ScalarField};
use crate::taylor::{arrhenius_feature_scale, arrhenius_param_derivs, arrhenius_params, ArrheniusTerm};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_theta, disc_profile, laser_flux, smooth_random_field, ChannelSpec, DecomposableModel,
    DomainRouting, Interpolation, ModelError, ModelKind, ModelState, SimConfig,
};

/// Bulk free-energy density
/// `A phi^2 (1-phi)^2 + B [phi^2 + 6 (1-phi) S2 - 4 (2-phi) S3 + 3 S2^2]`
/// with `S2 = sum eta^2`, `S3 = sum eta^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub a: f64,
    pub b: f64,
}

impl FreeEnergy {
    pub fn density(&self, phi: f64, s2: f64, s3: f64) -> f64 {
        self.a * phi * phi * (1.0 - phi) * (1.0 - phi)
            + self.b * (phi * phi + 6.0 * (1.0 - phi) * s2 - 4.0 * (2.0 - phi) * s3 + 3.0 * s2 * s2)
    }

    pub fn df_dphi(&self, phi: f64, s2: f64, s3: f64) -> f64 {
        self.a * dwell_a(phi) + self.b * dwell_b(phi, s2, s3)
    }

    pub fn df_deta(&self, phi: f64, eta: f64, s2: f64) -> f64 {
        self.b * dgrain(phi, eta, s2)
    }

    pub fn d2f_dphi2(&self, phi: f64) -> f64 {
        self.a * (2.0 - 12.0 * phi + 12.0 * phi * phi) + 2.0 * self.b
    }

    /// Diagonal second derivative in one order parameter.
    pub fn d2f_deta2(&self, phi: f64, eta: f64, s2: f64) -> f64 {
        12.0 * self.b * ((1.0 - phi) - 2.0 * (2.0 - phi) * eta + s2 + 2.0 * eta * eta)
    }
}

fn dwell_a(phi: f64) -> f64 {
    2.0 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

fn dwell_b(phi: f64, s2: f64, s3: f64) -> f64 {
    2.0 * phi - 6.0 * s2 + 4.0 * s3
}

fn dgrain(phi: f64, eta: f64, s2: f64) -> f64 {
    12.0 * ((1.0 - phi) * eta - (2.0 - phi) * eta * eta + s2 * eta)
}

impl Interpolation {
    pub fn eval(&self, phi: f64) -> f64 {
        let p3 = phi * phi * phi;
        match self {
            Interpolation::Paper => p3 * (15.0 - 10.0 * phi + 6.0 * phi * phi),
            Interpolation::Standard => p3 * (10.0 - 15.0 * phi + 6.0 * phi * phi),
        }
    }
}

pub const MECHANISMS: [&str; 4] = ["vol", "vap", "surf", "gb"];

const LITE_NAMES: [&str; 11] = [
    "k", "rho_cp", "d_vol", "d_vap", "d_surf", "d_gb", "q_vol", "q_vap", "q_surf", "q_gb", "l",
];
const LITE_DEFAULTS: [f64; 11] = [0.5, 2.0, 0.02, 0.005, 0.05, 0.02, 0.5, 0.3, 0.2, 0.4, 0.5];
const FULL_EXTRA: [&str; 4] = ["a", "b", "eps_phi", "eps_eta"];

// Parameter slots.
const K: usize = 0;
const RHO: usize = 1;
const D0: usize = 2;
const Q0: usize = 6;
const L: usize = 10;
const A: usize = 11;
const B: usize = 12;
const EPS_PHI: usize = 13;
const EPS_ETA: usize = 14;

#[derive(Debug, Clone)]
pub struct SinteringModel {
    config: SimConfig,
    grid: GridSpec,
    /// Whether A, B, eps_phi, eps_eta are learned.
    full: bool,
    order: usize,
    grains: usize,
    names: Vec<String>,
    theta: Vec<f64>,
    channels: Vec<ChannelSpec>,
    aux: Vec<String>,
    source: ScalarField,
}

impl SinteringModel {
    pub fn new(config: SimConfig) -> Result<Self, ModelError> {
        let grid = config.grid()?;
        let full = config.model == ModelKind::Sintering;
        if !matches!(config.model, ModelKind::Sintering | ModelKind::SinteringLite) {
            return Err(ModelError::Config(format!("{} is not a sintering model", config.model)));
        }
        let s = &config.sintering;
        let mut names: Vec<String> = LITE_NAMES.iter().map(|n| n.to_string()).collect();
        let mut defaults = LITE_DEFAULTS.to_vec();
        if full {
            names.extend(FULL_EXTRA.iter().map(|n| n.to_string()));
            defaults.extend([s.a, s.b, s.eps_phi, s.eps_eta]);
        }
        let theta = config.resolve_theta(&names, &defaults)?;
        for l in 0..4 {
            ArrheniusTerm::new(theta[D0 + l], theta[Q0 + l], config.taylor_order, s.kb, s.vm)?;
        }
        let order = config.taylor_order;
        let grains = s.grains;
        let parts = if full { 3 } else { 1 };
        let mut channels = vec![ChannelSpec {
            field: "phi".into(),
            n_features: 4 * (order + 1) * parts,
            routing: DomainRouting::ValueOnly,
        }];
        for k in 1..=grains {
            channels.push(ChannelSpec {
                field: format!("eta{k}"),
                n_features: if full { 2 } else { 1 },
                routing: DomainRouting::ValueOnly,
            });
        }
        channels.push(ChannelSpec {
            field: "T".into(),
            n_features: 2,
            routing: DomainRouting::FrequencyOnly,
        });
        let source = laser_flux(grid, &config.laser)?;
        Ok(Self {
            config,
            grid,
            full,
            order,
            grains,
            names,
            theta,
            channels,
            aux: vec!["Q".into()],
            source,
        })
    }

    pub fn grains(&self) -> usize {
        self.grains
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn energy(&self, theta: &[f64]) -> (FreeEnergy, f64, f64) {
        if self.full {
            (
                FreeEnergy {
                    a: theta[A],
                    b: theta[B],
                },
                theta[EPS_PHI],
                theta[EPS_ETA],
            )
        } else {
            let s = &self.config.sintering;
            (FreeEnergy { a: s.a, b: s.b }, s.eps_phi, s.eps_eta)
        }
    }

    fn etas<'a>(&self, state: &'a ModelState) -> Result<Vec<&'a ScalarField>, ModelError> {
        (1..=self.grains)
            .map(|k| state.require(&format!("eta{k}")))
            .collect()
    }

    /// `S2 = sum eta^2` and `S3 = sum eta^3`, cellwise.
    fn grain_sums(&self, etas: &[&ScalarField]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let mut s2 = vec![0.0; n];
        let mut s3 = vec![0.0; n];
        for e in etas {
            for (c, &v) in e.data().iter().enumerate() {
                s2[c] += v * v;
                s3[c] += v * v * v;
            }
        }
        (s2, s3)
    }

    /// Mechanism carriers: `h(phi)`, `1 - h(phi)`, `phi (1 - phi)` and
    /// `sum_{i != j} eta_i eta_j`.
    pub fn carriers(&self, state: &ModelState) -> Result<[ScalarField; 4], ModelError> {
        let phi = state.require("phi")?;
        let etas = self.etas(state)?;
        let interp = self.config.sintering.interpolation;
        let vol = phi.map(|p| interp.eval(p));
        let vap = vol.map(|h| 1.0 - h);
        let surf = phi.map(|p| p * (1.0 - p));
        let mut s1 = ScalarField::zeros(self.grid);
        let mut s2 = ScalarField::zeros(self.grid);
        for e in &etas {
            s1.axpy(1.0, e)?;
            s2.axpy(1.0, &e.map(|v| v * v))?;
        }
        let gb = s1.zip_map(&s2, |a, b| a * a - b)?;
        Ok([vol, vap, surf, gb])
    }

    /// Parts of the chemical potential that multiply A, B and eps_phi.
    fn mu_parts(&self, state: &ModelState) -> Result<[ScalarField; 3], ModelError> {
        let phi = state.require("phi")?;
        let etas = self.etas(state)?;
        let (s2, s3) = self.grain_sums(&etas);
        let pa = phi.map(dwell_a);
        let pb = ScalarField::new(
            self.grid,
            phi.data()
                .iter()
                .zip(s2.iter().zip(&s3))
                .map(|(&p, (&a, &b))| dwell_b(p, a, b))
                .collect(),
        )?;
        let pe = laplacian(phi).scale(-1.0);
        Ok([pa, pb, pe])
    }

    /// `mu = df/dphi - eps_phi lap phi`.
    pub fn chemical_potential(&self, state: &ModelState, theta: &[f64]) -> Result<ScalarField, ModelError> {
        check_theta(self, theta)?;
        let (fe, eps_phi, _) = self.energy(theta);
        let [pa, pb, pe] = self.mu_parts(state)?;
        let mut mu = pa.scale(fe.a);
        mu.axpy(fe.b, &pb)?;
        mu.axpy(eps_phi, &pe)?;
        Ok(mu)
    }

    /// `delta F / delta eta_k = df/deta_k - eps_eta lap eta_k` for `k` in `1..=grains`.
    pub fn grain_driving_force(
        &self,
        state: &ModelState,
        theta: &[f64],
        k: usize,
    ) -> Result<ScalarField, ModelError> {
        check_theta(self, theta)?;
        let (fe, _, eps_eta) = self.energy(theta);
        let phi = state.require("phi")?;
        let etas = self.etas(state)?;
        let eta = etas
            .get(k.wrapping_sub(1))
            .ok_or_else(|| ModelError::MissingField(format!("eta{k}")))?;
        let (s2, _) = self.grain_sums(&etas);
        let lap = laplacian(eta);
        Ok(ScalarField::new(
            self.grid,
            (0..self.grid.len())
                .map(|c| fe.df_deta(phi.data()[c], eta.data()[c], s2[c]) - eps_eta * lap.data()[c])
                .collect(),
        )?)
    }

    /// Density rate with the exact Arrhenius factors instead of the
    /// truncated series.
    pub fn exact_phi_rate(&self, state: &ModelState, theta: &[f64]) -> Result<ScalarField, ModelError> {
        let mu = self.chemical_potential(state, theta)?;
        let t = state.require("T")?;
        let carriers = self.carriers(state)?;
        let s = &self.config.sintering;
        let mut m = ScalarField::zeros(self.grid);
        for (l, c) in carriers.iter().enumerate() {
            let (d, q) = (theta[D0 + l], theta[Q0 + l]);
            let ml = c.zip_map(t, |cv, tv| {
                let kt = s.kb * tv;
                cv * d * (-q / kt).exp() * s.vm / kt
            })?;
            m.axpy(1.0, &ml)?;
        }
        Ok(div_flux(&m, &mu)?)
    }

    /// Initial condition without seeding noise: overlapping grains placed
    /// around the grid center, jittered by `seed`.
    fn grain_layout(&self, seed: u64) -> Vec<([f64; 2], f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = &self.config.sintering;
        let (cx, cy) = (self.grid.nx as f64 / 2.0, self.grid.ny as f64 / 2.0);
        let r0 = s.radius * self.grid.nx.min(self.grid.ny) as f64;
        let m = self.grains;
        (0..m)
            .map(|k| {
                let r = r0 * rng.random_range(0.95..1.05);
                let ring = match m {
                    1 => 0.0,
                    2 => 0.95 * r0,
                    _ => 0.95 * r0 / (std::f64::consts::PI / m as f64).sin(),
                };
                let ang = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                let jx = rng.random_range(-1.0..1.0);
                let jy = rng.random_range(-1.0..1.0);
                ([cx + ring * ang.cos() + jx, cy + ring * ang.sin() + jy], r)
            })
            .collect()
    }
}

impl DecomposableModel for SinteringModel {
    fn kind(&self) -> ModelKind {
        self.config.model
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
        let mut phi = Vec::with_capacity(self.channels[0].n_features);
        for l in 0..4 {
            for p in arrhenius_params(theta[D0 + l], theta[Q0 + l], self.order) {
                if self.full {
                    phi.extend([p * theta[A], p * theta[B], p * theta[EPS_PHI]]);
                } else {
                    phi.push(p);
                }
            }
        }
        let mut out = vec![phi];
        let eta = if self.full {
            vec![theta[L] * theta[B], theta[L] * theta[EPS_ETA]]
        } else {
            vec![theta[L]]
        };
        out.extend(std::iter::repeat_n(eta, self.grains));
        out.push(vec![theta[K] / theta[RHO], 1.0 / theta[RHO]]);
        out
    }

    fn param_jacobian(&self, theta: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let np = self.names.len();
        let mut phi = Vec::with_capacity(self.channels[0].n_features);
        for l in 0..4 {
            let params = arrhenius_params(theta[D0 + l], theta[Q0 + l], self.order);
            for (i, &p) in params.iter().enumerate() {
                let (dd, dq) = arrhenius_param_derivs(theta[D0 + l], theta[Q0 + l], i);
                if self.full {
                    for slot in [A, B, EPS_PHI] {
                        let mut row = vec![0.0; np];
                        row[D0 + l] = dd * theta[slot];
                        row[Q0 + l] = dq * theta[slot];
                        row[slot] = p;
                        phi.push(row);
                    }
                } else {
                    let mut row = vec![0.0; np];
                    row[D0 + l] = dd;
                    row[Q0 + l] = dq;
                    phi.push(row);
                }
            }
        }
        let mut out = vec![phi];
        let eta = if self.full {
            let mut r1 = vec![0.0; np];
            r1[L] = theta[B];
            r1[B] = theta[L];
            let mut r2 = vec![0.0; np];
            r2[L] = theta[EPS_ETA];
            r2[EPS_ETA] = theta[L];
            vec![r1, r2]
        } else {
            let mut r = vec![0.0; np];
            r[L] = 1.0;
            vec![r]
        };
        out.extend(std::iter::repeat_n(eta, self.grains));
        let (k, c) = (theta[K], theta[RHO]);
        let mut t1 = vec![0.0; np];
        t1[K] = 1.0 / c;
        t1[RHO] = -k / (c * c);
        let mut t2 = vec![0.0; np];
        t2[RHO] = -1.0 / (c * c);
        out.push(vec![t1, t2]);
        out
    }

    fn features(&self, state: &ModelState) -> Result<Vec<Vec<ScalarField>>, ModelError> {
        let t = state.require("T")?;
        let q = state.require("Q")?;
        self.grid.check_compatible(t.grid())?;
        let s = &self.config.sintering;
        let carriers = self.carriers(state)?;
        let mu_parts = self.mu_parts(state)?;
        let mu_lite;
        let mus: Vec<&ScalarField> = if self.full {
            mu_parts.iter().collect()
        } else {
            let mut m = mu_parts[0].scale(s.a);
            m.axpy(s.b, &mu_parts[1])?;
            m.axpy(s.eps_phi, &mu_parts[2])?;
            mu_lite = m;
            vec![&mu_lite]
        };

        let mut phi_feats = Vec::with_capacity(self.channels[0].n_features);
        for c in &carriers {
            for i in 0..=self.order {
                let base = t.zip_map(c, |tv, cv| cv * arrhenius_feature_scale(s.kb, s.vm, tv, i))?;
                for mu in &mus {
                    phi_feats.push(div_flux(&base, mu)?);
                }
            }
        }
        let mut out = vec![phi_feats];

        let phi = state.require("phi")?;
        let etas = self.etas(state)?;
        let (s2, _) = self.grain_sums(&etas);
        for eta in &etas {
            let lap = laplacian(eta);
            let raw: Vec<f64> = (0..self.grid.len())
                .map(|c| dgrain(phi.data()[c], eta.data()[c], s2[c]))
                .collect();
            if self.full {
                let neg = ScalarField::new(self.grid, raw.iter().map(|v| -v).collect())?;
                out.push(vec![neg, lap]);
            } else {
                let force: Vec<f64> = raw
                    .iter()
                    .zip(lap.data())
                    .map(|(r, l)| -(s.b * r - s.eps_eta * l))
                    .collect();
                out.push(vec![ScalarField::new(self.grid, force)?]);
            }
        }
        out.push(vec![laplacian(t), q.clone()]);
        Ok(out)
    }

    fn stiffness(&self, state: &ModelState, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let s = &self.config.sintering;
        let (fe, eps_phi, eps_eta) = self.energy(theta);
        let t = state.require("T")?;
        let phi = state.require("phi")?;
        let carriers = self.carriers(state)?;
        let etas = self.etas(state)?;
        let (s2, _) = self.grain_sums(&etas);
        let dx2 = self.grid.dx * self.grid.dx;

        let terms: Vec<ArrheniusTerm> = (0..4)
            .map(|l| ArrheniusTerm::new(theta[D0 + l].abs().max(1e-300), theta[Q0 + l].abs(), self.order, s.kb, s.vm))
            .collect::<Result<_, _>>()?;
        let mut m_max: f64 = 0.0;
        let mut fpp_max: f64 = 0.0;
        for c in 0..self.grid.len() {
            let tv = t.data()[c];
            let m: f64 = terms
                .iter()
                .zip(&carriers)
                .map(|(term, car)| {
                    car.data()[c].abs() * (term.truncated(tv).abs() + term.truncation_bound(tv))
                })
                .sum();
            m_max = m_max.max(m);
            fpp_max = fpp_max.max(fe.d2f_dphi2(phi.data()[c]).abs());
        }
        let lam_phi = 8.0 * m_max * (fpp_max / dx2 + 8.0 * eps_phi.abs() / (dx2 * dx2));

        let mut out = vec![lam_phi];
        for eta in &etas {
            let mut g_max: f64 = 0.0;
            for c in 0..self.grid.len() {
                g_max = g_max.max(fe.d2f_deta2(phi.data()[c], eta.data()[c], s2[c]).abs());
            }
            out.push(theta[L].abs() * (g_max + 8.0 * eps_eta.abs() / dx2));
        }
        out.push(8.0 * (theta[K] / theta[RHO]).abs() / dx2);
        Ok(out)
    }

    fn initial_state(&self, seed: u64) -> Result<ModelState, ModelError> {
        let s = &self.config.sintering;
        let mut state = ModelState::new();
        let mut solid = ScalarField::constant(self.grid, 1.0);
        let mut grains = Vec::with_capacity(self.grains);
        for (center, radius) in self.grain_layout(seed) {
            let p = disc_profile(self.grid, center, radius, s.interface_width);
            solid = solid.zip_map(&p, |a, b| a * (1.0 - b))?;
            grains.push(p);
        }
        state.insert("phi", solid.map(|v| 1.0 - v))?;
        for (k, p) in grains.into_iter().enumerate() {
            state.insert(&format!("eta{}", k + 1), p)?;
        }
        let t = smooth_random_field(self.grid, 2, 0.05, seed ^ 0x5eed).map(|v| v + s.ambient);
        state.insert("T", t)?;
        state.insert("Q", self.source.clone())?;
        Ok(state)
    }

    fn hard_limit(&self) -> f64 {
        10.0
    }

    fn range_warnings(&self, state: &ModelState) -> Vec<String> {
        let mut out = Vec::new();
        for ch in &self.channels[..self.channels.len() - 1] {
            if let Some(f) = state.get(&ch.field) {
                let (lo, hi) = f
                    .data()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                if lo < -0.1 || hi > 1.1 {
                    out.push(format!("{} outside [-0.1, 1.1]: min {lo:.3}, max {hi:.3}", ch.field));
                }
            }
        }
        out
    }
}

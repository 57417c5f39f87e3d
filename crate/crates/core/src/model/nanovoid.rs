//! Void growth in an irradiated solid: vacancy and interstitial
//! concentrations `cv`, `ci` (Cahn-Hilliard with sources and
//! recombination) and a void order parameter `eta` (Allen-Cahn).
//!
//! Free energy: `h(eta) E_s f_s + j(eta) E_v f_v + gradient terms` with
//! `h = (eta - 1)^2`, `j = eta^2`,
//! `f_s = (cv - cv_eq)^2 + (ci - ci_eq)^2` and `f_v = (cv - 1)^2 + ci^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::{laplacian, GridSpec, ScalarField};

use super::{
    check_theta, disc_profile, smooth_random_field, ChannelSpec, DecomposableModel, DomainRouting,
    ModelError, ModelKind, ModelState, SimConfig,
};

const NAMES: [&str; 12] = [
    "m_v", "m_i", "e_s", "e_v", "kappa_v", "kappa_i", "kappa_eta", "l", "r", "s_v", "s_i", "s_eta",
];
const DEFAULTS: [f64; 12] = [0.1, 0.2, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0];

const MV: usize = 0;
const MI: usize = 1;
const ES: usize = 2;
const EV: usize = 3;
const KV: usize = 4;
const KI: usize = 5;
const KE: usize = 6;
const L: usize = 7;
const R: usize = 8;
const SV: usize = 9;
const SI: usize = 10;
const SE: usize = 11;

#[derive(Debug, Clone)]
pub struct NanovoidModel {
    config: SimConfig,
    grid: GridSpec,
    names: Vec<String>,
    theta: Vec<f64>,
    channels: Vec<ChannelSpec>,
    aux: Vec<String>,
}

impl NanovoidModel {
    pub fn new(config: SimConfig) -> Result<Self, ModelError> {
        let grid = config.grid()?;
        let names: Vec<String> = NAMES.iter().map(|n| n.to_string()).collect();
        let theta = config.resolve_theta(&names, &DEFAULTS)?;
        let channels = [("cv", 5), ("ci", 5), ("eta", 4)]
            .iter()
            .map(|&(f, n)| ChannelSpec {
                field: f.into(),
                n_features: n,
                routing: DomainRouting::Split,
            })
            .collect();
        let aux = ["xi", "zeta", "pv", "pi", "peta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Ok(Self {
            config,
            grid,
            names,
            theta,
            channels,
            aux,
        })
    }

    fn sources_on(&self) -> bool {
        self.config.nanovoid.sources
    }

    /// Cascade pattern: unit background plus a few Gaussian spots.
    fn production_pattern(&self, seed: u64) -> ScalarField {
        let n = &self.config.nanovoid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca5cade);
        let g = self.grid;
        let spots: Vec<[f64; 2]> = (0..n.cascades)
            .map(|_| [rng.random_range(0.0..g.nx as f64), rng.random_range(0.0..g.ny as f64)])
            .collect();
        let mut f = ScalarField::constant(g, 1.0);
        for c in spots {
            let spot = disc_profile(g, c, 2.0, 2.0);
            f.axpy(5.0, &spot).expect("same grid");
        }
        f
    }

    fn noise(&self, seed: u64, step: usize, which: u64) -> ScalarField {
        let sd = self.config.nanovoid.noise;
        let mix = seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add((step as u64) << 1 | which);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        ScalarField::from_fn(self.grid, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
    }
}

impl DecomposableModel for NanovoidModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Nanovoid
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

    fn param_values(&self, t: &[f64]) -> Vec<Vec<f64>> {
        vec![
            vec![t[MV] * t[ES], t[MV] * t[EV], t[MV] * t[KV], t[SV], t[R]],
            vec![t[MI] * t[ES], t[MI] * t[EV], t[MI] * t[KI], t[SI], t[R]],
            vec![t[L] * t[ES], t[L] * t[EV], t[L] * t[KE], t[SE]],
        ]
    }

    fn param_jacobian(&self, t: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let np = NAMES.len();
        let row = |entries: &[(usize, f64)]| {
            let mut r = vec![0.0; np];
            for &(k, v) in entries {
                r[k] += v;
            }
            r
        };
        let mobility = |m: usize, kappa: usize, s: usize| {
            vec![
                row(&[(m, t[ES]), (ES, t[m])]),
                row(&[(m, t[EV]), (EV, t[m])]),
                row(&[(m, t[kappa]), (kappa, t[m])]),
                row(&[(s, 1.0)]),
                row(&[(R, 1.0)]),
            ]
        };
        vec![
            mobility(MV, KV, SV),
            mobility(MI, KI, SI),
            vec![
                row(&[(L, t[ES]), (ES, t[L])]),
                row(&[(L, t[EV]), (EV, t[L])]),
                row(&[(L, t[KE]), (KE, t[L])]),
                row(&[(SE, 1.0)]),
            ],
        ]
    }

    fn features(&self, state: &ModelState) -> Result<Vec<Vec<ScalarField>>, ModelError> {
        let cv = state.require("cv")?;
        let ci = state.require("ci")?;
        let eta = state.require("eta")?;
        let xi = state.require("xi")?;
        let zeta = state.require("zeta")?;
        let pv = state.require("pv")?;
        let pi = state.require("pi")?;
        let peta = state.require("peta")?;
        self.grid.check_compatible(cv.grid())?;
        let nv = &self.config.nanovoid;
        let g = self.grid;
        let n = g.len();
        let (cvd, cid, ed) = (cv.data(), ci.data(), eta.data());

        let field = |f: &dyn Fn(usize) -> f64| ScalarField::new(g, (0..n).map(f).collect());
        let h = |c: usize| (ed[c] - 1.0) * (ed[c] - 1.0);
        let j = |c: usize| ed[c] * ed[c];

        let recomb = if self.sources_on() {
            field(&|c| -cvd[c] * cid[c])?
        } else {
            ScalarField::zeros(g)
        };

        let cv_feats = vec![
            laplacian(&field(&|c| 2.0 * h(c) * (cvd[c] - nv.cv_eq))?),
            laplacian(&field(&|c| 2.0 * j(c) * (cvd[c] - 1.0))?),
            laplacian(&laplacian(cv)).scale(-1.0),
            xi + pv,
            recomb.clone(),
        ];
        let ci_feats = vec![
            laplacian(&field(&|c| 2.0 * h(c) * (cid[c] - nv.ci_eq))?),
            laplacian(&field(&|c| 2.0 * j(c) * cid[c])?),
            laplacian(&laplacian(ci)).scale(-1.0),
            zeta + pi,
            recomb,
        ];
        let fs = |c: usize| (cvd[c] - nv.cv_eq).powi(2) + (cid[c] - nv.ci_eq).powi(2);
        let fv = |c: usize| (cvd[c] - 1.0).powi(2) + cid[c] * cid[c];
        let eta_feats = vec![
            field(&|c| -2.0 * (ed[c] - 1.0) * fs(c))?,
            field(&|c| -2.0 * ed[c] * fv(c))?,
            laplacian(eta),
            peta.clone(),
        ];
        Ok(vec![cv_feats, ci_feats, eta_feats])
    }

    fn stiffness(&self, state: &ModelState, t: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_theta(self, t)?;
        let cv = state.require("cv")?;
        let ci = state.require("ci")?;
        let eta = state.require("eta")?;
        let nv = &self.config.nanovoid;
        let dx2 = self.grid.dx * self.grid.dx;
        let (mut fpp, mut fe, mut cv_max, mut ci_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for c in 0..self.grid.len() {
            let (v, i, e) = (cv.data()[c], ci.data()[c], eta.data()[c]);
            let (h, j) = ((e - 1.0).powi(2), e * e);
            fpp = fpp.max(2.0 * (t[ES].abs() * h + t[EV].abs() * j));
            let fs = (v - nv.cv_eq).powi(2) + (i - nv.ci_eq).powi(2);
            let fv = (v - 1.0).powi(2) + i * i;
            fe = fe.max(2.0 * (t[ES].abs() * fs + t[EV].abs() * fv));
            cv_max = cv_max.max(v.abs());
            ci_max = ci_max.max(i.abs());
        }
        let r = if self.sources_on() { t[R].abs() } else { 0.0 };
        let ch = |m: f64, kappa: f64, other: f64| {
            8.0 * m.abs() * (fpp / dx2 + 8.0 * kappa.abs() / (dx2 * dx2)) + r * other
        };
        Ok(vec![
            ch(t[MV], t[KV], ci_max),
            ch(t[MI], t[KI], cv_max),
            t[L].abs() * (fe + 8.0 * t[KE].abs() / dx2),
        ])
    }

    fn initial_state(&self, seed: u64) -> Result<ModelState, ModelError> {
        let nv = &self.config.nanovoid;
        let g = self.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = [
            g.nx as f64 / 2.0 + rng.random_range(-2.0..2.0),
            g.ny as f64 / 2.0 + rng.random_range(-2.0..2.0),
        ];
        let radius = nv.radius * g.nx.min(g.ny) as f64 * rng.random_range(0.9..1.1);
        let void = disc_profile(g, center, radius, nv.interface_width);
        let wiggle = smooth_random_field(g, 3, 0.01, seed ^ 0xc0ffee);
        let cv = void.zip_map(&wiggle, |p, w| nv.cv_eq + (1.0 - nv.cv_eq) * p + w)?;
        let ci = void.map(|p| nv.ci_eq * (1.0 - p));

        let (pv, peta) = if self.sources_on() {
            let pattern = self.production_pattern(seed);
            (pattern.scale(nv.production), pattern.scale(nv.eta_production))
        } else {
            (ScalarField::zeros(g), ScalarField::zeros(g))
        };
        let mut state = ModelState::new()
            .with("cv", cv)?
            .with("ci", ci)?
            .with("eta", void)?
            .with("xi", ScalarField::zeros(g))?
            .with("zeta", ScalarField::zeros(g))?
            .with("pv", pv.clone())?
            .with("pi", pv)?
            .with("peta", peta)?;
        self.refresh_sources(&mut state, seed, 0)?;
        Ok(state)
    }

    fn refresh_sources(&self, state: &mut ModelState, seed: u64, step: usize) -> Result<(), ModelError> {
        if !self.sources_on() || self.config.nanovoid.noise == 0.0 {
            return Ok(());
        }
        state.insert("xi", self.noise(seed, step, 0))?;
        state.insert("zeta", self.noise(seed, step, 1))?;
        Ok(())
    }

    fn hard_limit(&self) -> f64 {
        10.0
    }

    fn range_warnings(&self, state: &ModelState) -> Vec<String> {
        let mut out = Vec::new();
        for name in ["cv", "ci", "eta"] {
            if let Some(f) = state.get(name) {
                let (lo, hi) = f
                    .data()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                if lo < -0.1 || hi > 1.1 {
                    out.push(format!("{name} outside [-0.1, 1.1]: min {lo:.3}, max {hi:.3}"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_stability, evaluate_rhs};

    fn model(sources: bool) -> NanovoidModel {
        let mut cfg = SimConfig::preset(ModelKind::Nanovoid, 24);
        cfg.nanovoid.sources = sources;
        NanovoidModel::new(cfg).unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = model(true);
        let th: Vec<f64> = m.true_theta().iter().enumerate().map(|(k, v)| v * (1.0 + 0.1 * k as f64)).collect();
        let jac = m.param_jacobian(&th);
        for p in 0..th.len() {
            let h = 1e-6;
            let mut tp = th.clone();
            let mut tm = th.clone();
            tp[p] += h;
            tm[p] -= h;
            let (vp, vm) = (m.param_values(&tp), m.param_values(&tm));
            for ch in 0..3 {
                for f in 0..vp[ch].len() {
                    let fd = (vp[ch][f] - vm[ch][f]) / (2.0 * h);
                    assert!((fd - jac[ch][f][p]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn missing_noise_field_is_an_error() {
        let m = model(true);
        let s = m.initial_state(1).unwrap();
        let mut partial = ModelState::new();
        for (name, f) in s.names().iter().zip(s.fields()) {
            if name != "xi" {
                partial.insert(name, f.clone()).unwrap();
            }
        }
        assert!(matches!(m.features(&partial), Err(ModelError::MissingField(n)) if n == "xi"));
    }

    #[test]
    fn concentrations_conserved_without_sources() {
        let m = model(false);
        let s = m.initial_state(4).unwrap();
        let rhs = evaluate_rhs(&m, &s, m.true_theta()).unwrap();
        for ch in &rhs[..2] {
            assert!(ch.sum().abs() < 1e-11 * (1.0 + ch.max_abs()) * 576.0);
        }
    }

    #[test]
    fn noise_is_seeded_per_step() {
        let m = model(true);
        let mut a = m.initial_state(4).unwrap();
        let b = m.initial_state(4).unwrap();
        assert_eq!(a, b);
        let xi0 = a.require("xi").unwrap().clone();
        m.refresh_sources(&mut a, 4, 1).unwrap();
        assert_ne!(&xi0, a.require("xi").unwrap());
        assert!(xi0.max_abs() > 0.0);
    }

    #[test]
    fn default_step_is_stable() {
        let m = model(true);
        let s = m.initial_state(1).unwrap();
        check_stability(&m, &s, m.true_theta(), m.config().dt).unwrap();
    }
}

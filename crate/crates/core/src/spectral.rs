//! Two-dimensional DFTs and the value/frequency domain decomposition.
//!
//! A signal `s` is split by thresholding its spectrum: bins whose magnitude
//! exceeds `beta` stay in the frequency component, everything else is
//! transformed back and forms the value component. The split is exact,
//! `s = s_val + idft(s_freq)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::field::{FieldError, GridSpec, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("threshold must be a non-negative number, got {0}")]
    BadThreshold(f64),
    #[error("percentile must lie in [0, 100], got {0}")]
    BadPercentile(f64),
    #[error("mask has {got} bins, grid needs {expected}")]
    MaskLength { expected: usize, got: usize },
}

/// Full complex spectrum of a field, unnormalized forward convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            }
            .into());
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Row-major index of the bin holding the conjugate partner of bin `k`.
pub fn conjugate_bin(grid: &GridSpec, k: usize) -> usize {
    let (kx, ky) = (k / grid.ny, k % grid.ny);
    grid.index((grid.nx - kx) % grid.nx, (grid.ny - ky) % grid.ny)
}

/// Which bins belong to the frequency component.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    grid: GridSpec,
    keep: Vec<bool>,
}

impl FrequencyMask {
    /// Builds a mask and closes it under conjugation (`keep[k] |= keep[-k]`).
    pub fn new(grid: GridSpec, mut keep: Vec<bool>) -> Result<Self, SpectralError> {
        if keep.len() != grid.len() {
            return Err(SpectralError::MaskLength {
                expected: grid.len(),
                got: keep.len(),
            });
        }
        for k in 0..keep.len() {
            let c = conjugate_bin(&grid, k);
            if keep[k] || keep[c] {
                keep[k] = true;
                keep[c] = true;
            }
        }
        Ok(Self { grid, keep })
    }

    pub fn all(grid: GridSpec, value: bool) -> Self {
        Self {
            grid,
            keep: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.keep.len()).all(|k| self.keep[k] == self.keep[conjugate_bin(&self.grid, k)])
    }
}

/// Result of splitting one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct VfddPair {
    pub s_val: ScalarField,
    pub s_freq: Spectrum,
    pub mask: FrequencyMask,
    /// Threshold that produced the mask; `None` when the mask was supplied.
    pub beta: Option<f64>,
}

impl VfddPair {
    /// `s_val + idft(s_freq)`.
    pub fn reconstruct(&self) -> ScalarField {
        let plan = Fft2::new(self.s_val.grid());
        let back = plan.inverse_real(&self.s_freq);
        &self.s_val + &back
    }
}

/// Cached row/column FFT plans for one grid shape.
#[derive(Clone)]
pub struct Fft2 {
    grid: GridSpec,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("grid", &self.grid).finish()
    }
}

impl Fft2 {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            row_fwd: planner.plan_fft_forward(grid.ny),
            row_inv: planner.plan_fft_inverse(grid.ny),
            col_fwd: planner.plan_fft_forward(grid.nx),
            col_inv: planner.plan_fft_inverse(grid.nx),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        // rows are contiguous runs of ny values
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                column[i] = buf[i * ny + j];
            }
            col.process(&mut column);
            for i in 0..nx {
                buf[i * ny + j] = column[i];
            }
        }
    }

    pub fn forward(&self, f: &ScalarField) -> Spectrum {
        debug_assert!(self.grid.same_layout(f.grid()));
        let mut buf: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        Spectrum {
            grid: *f.grid(),
            coeffs: buf,
        }
    }

    /// Normalized inverse transform, complex output.
    pub fn inverse(&self, s: &Spectrum) -> Vec<Complex64> {
        let mut buf = s.coeffs.clone();
        self.transform(&mut buf, true);
        let inv_n = 1.0 / self.grid.len() as f64;
        for v in &mut buf {
            *v *= inv_n;
        }
        buf
    }

    /// Normalized inverse transform keeping only the real part.
    pub fn inverse_real(&self, s: &Spectrum) -> ScalarField {
        let data = self.inverse(s).into_iter().map(|c| c.re).collect();
        ScalarField::new(s.grid, data).expect("spectrum length matches grid")
    }

    /// Splits `f` with a caller-supplied mask.
    pub fn decompose_with_mask(
        &self,
        f: &ScalarField,
        mask: &FrequencyMask,
    ) -> Result<VfddPair, SpectralError> {
        f.grid().check_compatible(mask.grid())?;
        let spec = self.forward(f);
        Ok(self.split(spec, mask.clone(), None))
    }

    /// Threshold split: bins with `|F(f)| > beta` go to the frequency part.
    pub fn vfdd(&self, f: &ScalarField, beta: f64) -> Result<VfddPair, SpectralError> {
        if beta.is_nan() || beta < 0.0 {
            return Err(SpectralError::BadThreshold(beta));
        }
        let spec = self.forward(f);
        let keep = spec.coeffs.iter().map(|c| c.norm() > beta).collect();
        let mask = FrequencyMask::new(*f.grid(), keep)?;
        Ok(self.split(spec, mask, Some(beta)))
    }

    fn split(&self, spec: Spectrum, mask: FrequencyMask, beta: Option<f64>) -> VfddPair {
        let zero = Complex64::new(0.0, 0.0);
        let mut rest = spec.coeffs.clone();
        let mut kept = spec.coeffs;
        for (k, &keep) in mask.keep.iter().enumerate() {
            if keep {
                rest[k] = zero;
            } else {
                kept[k] = zero;
            }
        }
        let rest = Spectrum {
            grid: spec.grid,
            coeffs: rest,
        };
        // the mask is conjugate-closed, so the residue is real up to rounding
        let s_val = if mask.count() == mask.keep.len() {
            ScalarField::zeros(spec.grid)
        } else {
            self.inverse_real(&rest)
        };
        VfddPair {
            s_val,
            s_freq: Spectrum {
                grid: spec.grid,
                coeffs: kept,
            },
            mask,
            beta,
        }
    }
}

pub fn dft2(f: &ScalarField) -> Spectrum {
    Fft2::new(f.grid()).forward(f)
}

pub fn idft2(s: &Spectrum) -> ScalarField {
    Fft2::new(s.grid()).inverse_real(s)
}

pub fn vfdd(f: &ScalarField, beta: f64) -> Result<VfddPair, SpectralError> {
    Fft2::new(f.grid()).vfdd(f, beta)
}

pub fn decompose_with_mask(
    f: &ScalarField,
    mask: &FrequencyMask,
) -> Result<VfddPair, SpectralError> {
    Fft2::new(f.grid()).decompose_with_mask(f, mask)
}

/// Counts of entries above `tol` in magnitude: `(k_val, k_freq)`.
pub fn sparsity_report(p: &VfddPair, tol: f64) -> (usize, usize) {
    let k_val = p.s_val.data().iter().filter(|v| v.abs() > tol).count();
    let k_freq = p.s_freq.coeffs().iter().filter(|c| c.norm() > tol).count();
    (k_val, k_freq)
}

/// How the threshold for a signal is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// Fixed magnitude threshold. Scales with grid size because the DFT is
    /// unnormalized.
    Fixed(f64),
    /// Threshold at the given percentile (0..=100) of the signal's own
    /// spectral magnitudes; `Percentile(90.0)` keeps roughly the top 10% of bins.
    Percentile(f64),
}

impl BetaRule {
    /// Percentile rule that keeps approximately the top `q` percent of bins.
    pub fn keep_top(q: f64) -> Result<Self, SpectralError> {
        if !(0.0..=100.0).contains(&q) {
            return Err(SpectralError::BadPercentile(q));
        }
        Ok(BetaRule::Percentile(100.0 - q))
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        match *self {
            BetaRule::Fixed(b) if b.is_nan() || b < 0.0 => Err(SpectralError::BadThreshold(b)),
            BetaRule::Percentile(p) if !(0.0..=100.0).contains(&p) => {
                Err(SpectralError::BadPercentile(p))
            }
            _ => Ok(()),
        }
    }

    /// Resolves the threshold for one spectrum.
    pub fn threshold(&self, spec: &Spectrum) -> f64 {
        match *self {
            BetaRule::Fixed(b) => b,
            BetaRule::Percentile(p) => {
                let mut mags: Vec<f64> = spec.coeffs.iter().map(|c| c.norm()).collect();
                percentile(&mut mags, p)
            }
        }
    }
}

/// Nearest-rank percentile; sorts `values` in place.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    if p <= 0.0 {
        return values[0];
    }
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

impl Fft2 {
    /// Threshold split under a [`BetaRule`].
    pub fn vfdd_rule(&self, f: &ScalarField, rule: BetaRule) -> Result<VfddPair, SpectralError> {
        rule.validate()?;
        let spec = self.forward(f);
        let beta = rule.threshold(&spec);
        let keep = spec.coeffs.iter().map(|c| c.norm() > beta).collect();
        let mask = FrequencyMask::new(*f.grid(), keep)?;
        Ok(self.split(spec, mask, Some(beta)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, n, 1.0, 0.1).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(g, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_dft(f: &ScalarField) -> Vec<Complex64> {
        let g = *f.grid();
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for kx in 0..g.nx {
            for ky in 0..g.ny {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in 0..g.nx {
                    for y in 0..g.ny {
                        let ang = -2.0 * PI
                            * ((kx * x) as f64 / g.nx as f64 + (ky * y) as f64 / g.ny as f64);
                        acc += f.at(x, y) * Complex64::from_polar(1.0, ang);
                    }
                }
                out[g.index(kx, ky)] = acc;
            }
        }
        out
    }

    fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
        (a - b).norm_sq().sqrt() / b.norm_sq().sqrt().max(1e-300)
    }

    #[test]
    fn dft_of_ones_and_delta() {
        let g = grid(4);
        let s = dft2(&ScalarField::constant(g, 1.0));
        assert!((s.coeffs()[0] - Complex64::new(16.0, 0.0)).norm() < 1e-12);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-12));

        let mut d = ScalarField::zeros(g);
        d[(0, 0)] = 1.0;
        let s = dft2(&d);
        assert!(s.coeffs().iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn dft_matches_direct_summation() {
        let g = GridSpec::new(8, 6, 1.0, 0.1).unwrap();
        let f = random_field(g, 3);
        let fast = dft2(&f);
        let slow = naive_dft(&f);
        for (a, b) in fast.coeffs().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn spectrum_is_conjugate_symmetric_and_parseval_holds() {
        let g = GridSpec::new(8, 12, 1.0, 0.1).unwrap();
        let f = random_field(g, 4);
        let s = dft2(&f);
        for k in 0..g.len() {
            let c = conjugate_bin(&g, k);
            assert!((s.coeffs()[k] - s.coeffs()[c].conj()).norm() < 1e-10);
        }
        let lhs = s.norm_sq();
        let rhs = g.len() as f64 * f.norm_sq();
        assert!((lhs - rhs).abs() / rhs < 1e-9);
        assert!(rel_err(&idft2(&s), &f) < 1e-10);
    }

    #[test]
    fn vfdd_ones_keeps_dc() {
        let g = grid(4);
        let p = vfdd(&ScalarField::constant(g, 1.0), 2.0).unwrap();
        assert_eq!(p.mask.count(), 1);
        assert!(p.mask.keep()[0]);
        assert!((p.s_freq.coeffs()[0].re - 16.0).abs() < 1e-12);
        assert!(p.s_val.max_abs() < 1e-12);
        assert_eq!(sparsity_report(&p, 1e-9), (0, 1));
    }

    #[test]
    fn vfdd_delta_stays_in_value_domain() {
        let g = grid(4);
        let mut d = ScalarField::zeros(g);
        d[(0, 0)] = 1.0;
        let p = vfdd(&d, 2.0).unwrap();
        assert_eq!(p.mask.count(), 0);
        assert!(p.s_freq.coeffs().iter().all(|c| c.norm() == 0.0));
        assert!(rel_err(&p.s_val, &d) < 1e-12);
        assert_eq!(sparsity_report(&p, 1e-9), (1, 0));
    }

    #[test]
    fn vfdd_zero_threshold_moves_everything_to_frequency() {
        let g = grid(8);
        let f = random_field(g, 5);
        let p = vfdd(&f, 0.0).unwrap();
        assert!(p.s_val.max_abs() == 0.0);
        let full = dft2(&f);
        assert_eq!(p.s_freq.coeffs(), full.coeffs());
    }

    #[test]
    fn vfdd_tie_goes_to_value_domain() {
        // DC of the all-ones 4x4 field is exactly 16
        let p = vfdd(&ScalarField::constant(grid(4), 1.0), 16.0).unwrap();
        assert_eq!(p.mask.count(), 0);
    }

    #[test]
    fn vfdd_rejects_bad_threshold() {
        let f = ScalarField::zeros(grid(4));
        assert!(vfdd(&f, -1.0).is_err());
        assert!(vfdd(&f, f64::NAN).is_err());
    }

    #[test]
    fn vfdd_reconstructs_at_median_threshold() {
        let g = grid(16);
        let f = random_field(g, 6);
        let mut mags: Vec<f64> = dft2(&f).coeffs().iter().map(|c| c.norm()).collect();
        let beta = percentile(&mut mags, 50.0);
        let p = vfdd(&f, beta).unwrap();
        assert!(p.mask.is_symmetric());
        assert!(rel_err(&p.reconstruct(), &f) < 1e-10);
        for (k, &keep) in p.mask.keep().iter().enumerate() {
            if !keep {
                assert_eq!(p.s_freq.coeffs()[k].norm(), 0.0);
            }
        }
    }

    #[test]
    fn value_residue_is_real() {
        let g = grid(16);
        let f = random_field(g, 7);
        let plan = Fft2::new(&g);
        let p = plan.vfdd(&f, 3.0).unwrap();
        let mut rest = plan.forward(&f).into_coeffs();
        for (k, &keep) in p.mask.keep().iter().enumerate() {
            if keep {
                rest[k] = Complex64::new(0.0, 0.0);
            }
        }
        let back = plan.inverse(&Spectrum::new(g, rest).unwrap());
        let max_im = back.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        assert!(max_im < 1e-10 * f.norm_sq().sqrt());
    }

    #[test]
    fn mask_extremes() {
        let g = grid(8);
        let f = random_field(g, 8);
        let all = decompose_with_mask(&f, &FrequencyMask::all(g, true)).unwrap();
        assert!(all.s_val.max_abs() == 0.0);
        assert_eq!(all.s_freq.coeffs(), dft2(&f).coeffs());
        let none = decompose_with_mask(&f, &FrequencyMask::all(g, false)).unwrap();
        assert!(none.s_freq.norm_sq() == 0.0);
        assert!(rel_err(&none.s_val, &f) < 1e-12);
    }

    #[test]
    fn mask_is_closed_under_conjugation() {
        let g = GridSpec::new(6, 8, 1.0, 0.1).unwrap();
        let mut keep = vec![false; g.len()];
        keep[g.index(1, 3)] = true;
        let m = FrequencyMask::new(g, keep).unwrap();
        assert!(m.keep()[g.index(5, 5)]);
        assert_eq!(m.count(), 2);
        assert!(m.is_symmetric());
        let other = GridSpec::new(8, 8, 1.0, 0.1).unwrap();
        assert!(decompose_with_mask(&ScalarField::zeros(other), &m).is_err());
    }

    #[test]
    fn keep_top_rule() {
        let g = grid(16);
        let f = random_field(g, 9);
        let plan = Fft2::new(&g);
        let p = plan.vfdd_rule(&f, BetaRule::keep_top(10.0).unwrap()).unwrap();
        let frac = p.mask.count() as f64 / g.len() as f64;
        assert!(frac > 0.05 && frac <= 0.12, "{frac}");
        assert!(BetaRule::keep_top(120.0).is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(seed in 0u64..10_000, beta in 0.0f64..20.0) {
            let g = GridSpec::new(8, 10, 1.0, 0.1).unwrap();
            let f = random_field(g, seed);
            let p = vfdd(&f, beta).unwrap();
            prop_assert!(rel_err(&p.reconstruct(), &f) < 1e-10);
        }

        #[test]
        fn masked_split_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = grid(8);
            let f = random_field(g, s1);
            let h = random_field(g, s2);
            let mask = vfdd(&random_field(g, s1 + s2 + 1), 3.0).unwrap().mask;
            let mut comb = f.scale(a);
            comb.axpy(b, &h).unwrap();
            let pc = decompose_with_mask(&comb, &mask).unwrap();
            let pf = decompose_with_mask(&f, &mask).unwrap();
            let ph = decompose_with_mask(&h, &mask).unwrap();
            for k in 0..g.len() {
                let v = a * pf.s_val.data()[k] + b * ph.s_val.data()[k];
                prop_assert!((pc.s_val.data()[k] - v).abs() < 1e-10);
                let c = pf.s_freq.coeffs()[k] * a + ph.s_freq.coeffs()[k] * b;
                prop_assert!((pc.s_freq.coeffs()[k] - c).norm() < 1e-10);
            }
        }
    }
}

//! Uniform 2D periodic grids, scalar fields and the finite-difference
//! stencils shared by every model.
//!
//! Fields are stored row-major: cell `(i, j)` lives at `i * ny + j`, where
//! `i` runs along x and `j` along y. This flattening is the one used by the
//! spectral decomposition and by the random projections, so masks and
//! sketches line up with the field data without any reindexing.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid requires nx, ny >= 4 (got {nx}x{ny})")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid spacing and timestep must be positive and finite (dx={dx}, dt={dt})")]
    BadSpacing { dx: f64, dt: f64 },
    #[error("field data has {got} values, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("incompatible fields: {0:?} vs {1:?}")]
    GridMismatch(GridSpec, GridSpec),
}

/// Discretization of a periodic rectangle: cell counts, spacing and the
/// explicit time step used with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dt: f64) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 {
            return Err(FieldError::GridTooSmall { nx, ny });
        }
        if !(dx > 0.0 && dx.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(FieldError::BadSpacing { dx, dt });
        }
        Ok(Self { nx, ny, dx, dt })
    }

    /// Number of cells, `nx * ny`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Spatial layout equality, ignoring the time step.
    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx
    }

    pub fn check_compatible(&self, other: &GridSpec) -> Result<(), FieldError> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(FieldError::GridMismatch(*self, *other))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Builds a field by evaluating `f(i, j)` at every cell.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                data.push(f(i, j));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, FieldError> {
        self.grid.check_compatible(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) -> Result<(), FieldError> {
        self.grid.check_compatible(&other.grid)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for ScalarField {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[self.grid.index(i, j)]
    }
}

impl IndexMut<(usize, usize)> for ScalarField {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        let k = self.grid.index(i, j);
        &mut self.data[k]
    }
}

// Operator impls panic on grid mismatch, like slice arithmetic on length
// mismatch. Use `zip_map` for the fallible form.
impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b).expect("grid mismatch in field addition")
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
            .expect("grid mismatch in field subtraction")
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
            .expect("grid mismatch in field product")
    }
}

#[inline]
fn up(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
fn down(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

/// Five-point periodic Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv = 1.0 / (g.dx * g.dx);
    let d = &f.data;
    let mut out = vec![0.0; g.len()];
    for i in 0..nx {
        let (ip, im) = (up(i, nx), down(i, nx));
        for j in 0..ny {
            let (jp, jm) = (up(j, ny), down(j, ny));
            out[i * ny + j] = (d[ip * ny + j] + d[im * ny + j] + d[i * ny + jp] + d[i * ny + jm]
                - 4.0 * d[i * ny + j])
                * inv;
        }
    }
    ScalarField { grid: g, data: out }
}

/// Squared gradient magnitude from centered differences.
pub fn grad_sq(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv2 = 1.0 / (2.0 * g.dx);
    let d = &f.data;
    let mut out = vec![0.0; g.len()];
    for i in 0..nx {
        let (ip, im) = (up(i, nx), down(i, nx));
        for j in 0..ny {
            let (jp, jm) = (up(j, ny), down(j, ny));
            let gx = (d[ip * ny + j] - d[im * ny + j]) * inv2;
            let gy = (d[i * ny + jp] - d[i * ny + jm]) * inv2;
            out[i * ny + j] = gx * gx + gy * gy;
        }
    }
    ScalarField { grid: g, data: out }
}

/// Conservative discretization of `div(m grad mu)`.
///
/// Each face carries the flux `0.5 (m_a + m_b) (mu_b - mu_a) / dx`; a cell's
/// value is its net face flux over `dx`. Every face flux enters exactly two
/// cells with opposite signs, so the grid sum of the result vanishes up to
/// rounding.
pub fn div_flux(m: &ScalarField, mu: &ScalarField) -> Result<ScalarField, FieldError> {
    m.grid.check_compatible(&mu.grid)?;
    let g = m.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv = 1.0 / (g.dx * g.dx);
    let (md, ud) = (&m.data, &mu.data);
    let mut out = vec![0.0; g.len()];
    for i in 0..nx {
        let ip = up(i, nx);
        for j in 0..ny {
            let jp = up(j, ny);
            let c = i * ny + j;
            let east = ip * ny + j;
            let north = i * ny + jp;
            let fx = 0.5 * (md[c] + md[east]) * (ud[east] - ud[c]) * inv;
            let fy = 0.5 * (md[c] + md[north]) * (ud[north] - ud[c]) * inv;
            out[c] += fx + fy;
            out[east] -= fx;
            out[north] -= fy;
        }
    }
    Ok(ScalarField { grid: g, data: out })
}

/// Sum of absolute face fluxes into each cell, `sum |0.5 (m_a + m_b) (mu_b - mu_a)| / dx^2`.
///
/// Bounds `|div_flux(m', mu)|` for any `m'` with `|m'| <= m` pointwise.
pub fn abs_flux_sum(m: &ScalarField, mu: &ScalarField) -> Result<ScalarField, FieldError> {
    m.grid.check_compatible(&mu.grid)?;
    let g = m.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv = 1.0 / (g.dx * g.dx);
    let (md, ud) = (&m.data, &mu.data);
    let mut out = vec![0.0; g.len()];
    for i in 0..nx {
        let ip = up(i, nx);
        for j in 0..ny {
            let jp = up(j, ny);
            let c = i * ny + j;
            let east = ip * ny + j;
            let north = i * ny + jp;
            let fx = (0.5 * (md[c] + md[east]) * (ud[east] - ud[c]) * inv).abs();
            let fy = (0.5 * (md[c] + md[north]) * (ud[north] - ud[c]) * inv).abs();
            out[c] += fx + fy;
            out[east] += fx;
            out[north] += fy;
        }
    }
    Ok(ScalarField { grid: g, data: out })
}

//! Seeded Gaussian random projections.
//!
//! Entries are `y_ij / sqrt(n)` with `y_ij` i.i.d. standard normal. The entry
//! stream is drawn row-major from [`PRNG_NAME`], so a `(n, d, seed)` triple
//! pins the matrix bit for bit.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Generator used for projection entries. Stored in compressed dataset headers.
pub const PRNG_NAME: &str = "chacha8-seed_from_u64+rand_distr0.5-StandardNormal/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("invalid projection {n}x{d}: need 1 <= n <= d")]
    InvalidSpec { n: usize, d: usize },
    #[error("identity projection needs n == d (got {n}x{d})")]
    IdentityShape { n: usize, d: usize },
    #[error("vector has length {got}, projection expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("compression ratio {ratio} gives fewer than one row for dimension {d}")]
    BadRatio { ratio: f64, d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Gaussian,
    /// `P = I`; only for checking the compressed loss against the plain one.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub kind: ProjectionKind,
}

pub fn make_projection(n: usize, d: usize, seed: u64) -> Result<ProjectionSpec, SketchError> {
    if n == 0 || n > d {
        return Err(SketchError::InvalidSpec { n, d });
    }
    Ok(ProjectionSpec {
        n,
        d,
        seed,
        kind: ProjectionKind::Gaussian,
    })
}

pub fn identity_projection(d: usize) -> Result<ProjectionSpec, SketchError> {
    if d == 0 {
        return Err(SketchError::InvalidSpec { n: 0, d });
    }
    Ok(ProjectionSpec {
        n: d,
        d,
        seed: 0,
        kind: ProjectionKind::Identity,
    })
}

/// Projected dimension for compression ratio `r`: `ceil(r * d)`.
pub fn projected_dim(ratio: f64, d: usize) -> Result<usize, SketchError> {
    if !(ratio > 0.0 && ratio <= 1.0) || ratio * (d as f64) < 1.0 {
        return Err(SketchError::BadRatio { ratio, d });
    }
    // tolerate representation error in ratios like 0.01
    let n = (ratio * d as f64 - 1e-9).ceil() as usize;
    Ok(n.clamp(1, d))
}

impl ProjectionSpec {
    /// Row-major entry stream, already scaled by `1/sqrt(n)`.
    pub fn entries(&self) -> impl Iterator<Item = f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (self.n as f64).sqrt();
        let total = self.n * self.d;
        (0..total).map(move |_| {
            let y: f64 = StandardNormal.sample(&mut rng);
            y * scale
        })
    }

    pub fn materialize(&self) -> Projection {
        let matrix = match self.kind {
            ProjectionKind::Gaussian => self.entries().collect(),
            ProjectionKind::Identity => Vec::new(),
        };
        Projection { spec: *self, matrix }
    }
}

/// A materialized projection matrix.
#[derive(Debug, Clone)]
pub struct Projection {
    spec: ProjectionSpec,
    matrix: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Projection {
    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    /// Row `r` of the matrix (Gaussian kind only).
    pub fn row(&self, r: usize) -> &[f64] {
        &self.matrix[r * self.spec.d..(r + 1) * self.spec.d]
    }

    fn check(&self, len: usize) -> Result<(), SketchError> {
        if len != self.spec.d {
            return Err(SketchError::LengthMismatch {
                expected: self.spec.d,
                got: len,
            });
        }
        Ok(())
    }

    pub fn apply_real(&self, x: &[f64]) -> Result<Vec<f64>, SketchError> {
        self.check(x.len())?;
        Ok(match self.spec.kind {
            ProjectionKind::Identity => x.to_vec(),
            ProjectionKind::Gaussian => (0..self.spec.n).map(|r| dot(self.row(r), x)).collect(),
        })
    }

    /// Applies the real matrix to real and imaginary parts separately.
    pub fn apply_complex(&self, x: &[Complex64]) -> Result<Vec<Complex64>, SketchError> {
        self.check(x.len())?;
        Ok(match self.spec.kind {
            ProjectionKind::Identity => x.to_vec(),
            ProjectionKind::Gaussian => (0..self.spec.n)
                .map(|r| {
                    let row = self.row(r);
                    let (mut re, mut im) = (0.0, 0.0);
                    for (p, v) in row.iter().zip(x) {
                        re += p * v.re;
                        im += p * v.im;
                    }
                    Complex64::new(re, im)
                })
                .collect(),
        })
    }

    /// `P x` for several vectors at once. Each matrix row is read once for all
    /// of them.
    pub fn apply_many_real(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>, SketchError> {
        for x in xs {
            self.check(x.len())?;
        }
        if self.spec.kind == ProjectionKind::Identity {
            return Ok(xs.iter().map(|x| x.to_vec()).collect());
        }
        let mut out = vec![Vec::with_capacity(self.spec.n); xs.len()];
        for r in 0..self.spec.n {
            let row = self.row(r);
            for (o, x) in out.iter_mut().zip(xs) {
                o.push(dot(row, x));
            }
        }
        Ok(out)
    }

    /// `P z` for several complex vectors that vanish outside `support`.
    /// Only the listed columns are read.
    pub fn apply_many_sparse_complex(
        &self,
        support: &[usize],
        zs: &[&[Complex64]],
    ) -> Result<Vec<Vec<Complex64>>, SketchError> {
        for z in zs {
            self.check(z.len())?;
        }
        if let Some(&bad) = support.iter().find(|&&k| k >= self.spec.d) {
            return Err(SketchError::LengthMismatch {
                expected: self.spec.d,
                got: bad + 1,
            });
        }
        if self.spec.kind == ProjectionKind::Identity {
            return Ok(zs.iter().map(|z| z.to_vec()).collect());
        }
        // gather the support once so the inner loops are contiguous
        let packed: Vec<(Vec<f64>, Vec<f64>)> = zs
            .iter()
            .map(|z| support.iter().map(|&k| (z[k].re, z[k].im)).unzip())
            .collect();
        let mut cols = vec![0.0; support.len()];
        let mut out = vec![Vec::with_capacity(self.spec.n); zs.len()];
        for r in 0..self.spec.n {
            let row = self.row(r);
            for (c, &k) in cols.iter_mut().zip(support) {
                *c = row[k];
            }
            for (o, (re, im)) in out.iter_mut().zip(&packed) {
                o.push(Complex64::new(dot(&cols, re), dot(&cols, im)));
            }
        }
        Ok(out)
    }

    pub fn project(&self, x: SketchInput<'_>) -> Result<Sketch, SketchError> {
        let values = match x {
            SketchInput::Real(v) => SketchValues::Real(self.apply_real(v)?),
            SketchInput::Complex(v) => SketchValues::Complex(self.apply_complex(v)?),
        };
        Ok(Sketch {
            spec: self.spec,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SketchInput<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A compressed vector together with the projection that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    spec: ProjectionSpec,
    values: SketchValues,
}

impl Sketch {
    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn values(&self) -> &SketchValues {
        &self.values
    }

    pub fn len(&self) -> usize {
        match &self.values {
            SketchValues::Real(v) => v.len(),
            SketchValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Squared Euclidean (modulus) norm.
    pub fn norm_sq(&self) -> f64 {
        match &self.values {
            SketchValues::Real(v) => v.iter().map(|x| x * x).sum(),
            SketchValues::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum(),
        }
    }
}

/// One-shot `P x`; materializes the matrix.
pub fn project(spec: &ProjectionSpec, x: SketchInput<'_>) -> Result<Sketch, SketchError> {
    spec.materialize().project(x)
}

/// Fraction of seeds for which
/// `(1 - delta) |x - y|^2 <= |P(x - y)|^2 <= (1 + delta) |x - y|^2`.
pub fn jl_sandwich_trial(
    n: usize,
    seeds: &[u64],
    x: &[f64],
    y: &[f64],
    delta: f64,
) -> Result<f64, SketchError> {
    if x.len() != y.len() {
        return Err(SketchError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if seeds.is_empty() {
        return Ok(1.0);
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let base: f64 = diff.iter().map(|v| v * v).sum();
    // only the columns at nonzero entries of the difference contribute
    let support: Vec<usize> = (0..diff.len()).filter(|&k| diff[k] != 0.0).collect();
    let mut hits = 0usize;
    for &seed in seeds {
        let spec = make_projection(n, diff.len(), seed)?;
        let proj = if support.len() * 4 < diff.len() {
            sparse_norm_sq(&spec, &diff, &support)
        } else {
            spec.materialize()
                .apply_real(&diff)?
                .iter()
                .map(|v| v * v)
                .sum()
        };
        if (1.0 - delta) * base <= proj && proj <= (1.0 + delta) * base {
            hits += 1;
        }
    }
    Ok(hits as f64 / seeds.len() as f64)
}

// Streams the matrix without storing it; same entries as `materialize`.
fn sparse_norm_sq(spec: &ProjectionSpec, x: &[f64], support: &[usize]) -> f64 {
    let mut entries = spec.entries();
    let mut total = 0.0;
    for _ in 0..spec.n {
        let mut acc = 0.0;
        let mut next = 0usize;
        for k in 0..spec.d {
            let p = entries.next().expect("entry stream has n*d values");
            if next < support.len() && support[next] == k {
                acc += p * x[k];
                next += 1;
            }
        }
        total += acc * acc;
    }
    total
}

//! Independent reference computations shared by the integration tests.
//! None of these call into the library's numerical kernels.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reel_core::{GridSpec, ScalarField};

pub fn grid(nx: usize, ny: usize) -> GridSpec {
    GridSpec::new(nx, ny, 1.0, 0.1).unwrap()
}

pub fn gaussian_field(g: GridSpec, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_fn(g, |_, _| rng.sample(StandardNormal))
}

/// Dense vector with `k` nonzero entries at random positions.
pub fn sparse_vec(d: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; d];
    let mut placed = 0;
    while placed < k {
        let i = rng.random_range(0..d);
        if v[i] == 0.0 {
            v[i] = rng.sample::<f64, _>(StandardNormal) + 0.1;
            placed += 1;
        }
    }
    v
}

/// Textbook `O(N^2)` two-dimensional DFT, `F[p, q] = sum f[i, j] e^{-2 pi i (p i / nx + q j / ny)}`.
pub fn naive_dft2(f: &ScalarField) -> Vec<Complex64> {
    let g = f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
    for p in 0..nx {
        for q in 0..ny {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..nx {
                for j in 0..ny {
                    let ang = -2.0 * std::f64::consts::PI * ((p * i) as f64 / nx as f64 + (q * j) as f64 / ny as f64);
                    acc += Complex64::from_polar(f[(i, j)], ang);
                }
            }
            out[p * ny + q] = acc;
        }
    }
    out
}

/// `sum_{k=0}^{n} (-x)^k / k!` with each term computed from scratch.
pub fn exp_neg_partial_sum(x: f64, n: usize) -> f64 {
    (0..=n)
        .map(|k| {
            let fact: f64 = (1..=k).map(|v| v as f64).product();
            (-x).powi(k as i32) / fact
        })
        .sum()
}

pub fn lagrange_bound(x: f64, n: usize) -> f64 {
    let fact: f64 = (1..=n + 1).map(|v| v as f64).product();
    x.powi(n as i32 + 1) / fact
}

/// Central differences with a per-coordinate step `rel * max(|theta_j|, floor)`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], rel: f64, floor: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        let h = rel * theta[j].abs().max(floor);
        t[j] = theta[j] + h;
        let fp = f(&t);
        t[j] = theta[j] - h;
        let fm = f(&t);
        t[j] = theta[j];
        g.push((fp - fm) / (2.0 * h));
    }
    g
}

/// `max_j |a_j - b_j| / max_j |b_j|`.
pub fn rel_err_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `|a - b|_2 / |b|_2`.
pub fn rel_err_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

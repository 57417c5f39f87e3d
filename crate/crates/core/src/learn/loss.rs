//! Compressed and uncompressed losses.
//!
//! For one timestep and channel the compressed loss is
//! `|dt sum_i phi_i P W_i,val - P du_val|^2 + lambda |dt sum_i phi_i P W_i,freq - P du_freq|^2`.
//! It is quadratic in the coefficients `phi`, so the gradient is
//! `2 dt Re<r, P W_i>` per coefficient, pulled back through `d phi / d theta`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{CompressedDataset, LearnError};
use crate::model::{check_theta, evaluate_rhs, DecomposableModel};
use crate::sim::Trajectory;
use crate::sketch::dot;

fn check_dataset(cds: &CompressedDataset, model: &dyn DecomposableModel) -> Result<(), LearnError> {
    if cds.model != model.kind() {
        return Err(LearnError::Mismatch(format!("dataset model {} vs {}", cds.model, model.kind())));
    }
    let counts: Vec<usize> = model.channels().iter().map(|c| c.n_features).collect();
    let have: Vec<usize> = cds.channels.iter().map(|c| c.n_features).collect();
    if counts != have {
        return Err(LearnError::Mismatch(format!("feature counts {have:?} vs {counts:?}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), LearnError> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(LearnError::Config(format!("lambda must be finite and >= 0, got {lambda}")))
    }
}

/// Loss of one timestep and its gradient with respect to the flat
/// coefficient vector (all channels concatenated).
fn step_terms(
    cds: &CompressedDataset,
    t: usize,
    coeffs: &[Vec<f64>],
    lambda: f64,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let dt = cds.dt();
    let total: usize = coeffs.iter().map(|c| c.len()).sum();
    let mut grad = if want_grad { vec![0.0; total] } else { Vec::new() };
    let mut loss = 0.0;
    let mut offset = 0;
    for (ch, phi) in cds.steps[t].channels.iter().zip(coeffs) {
        let nf = phi.len();
        let n = ch.val_len();
        if n > 0 {
            let mut r: Vec<f64> = ch.val_target.iter().map(|y| -y).collect();
            for (i, &p) in phi.iter().enumerate() {
                let f = &ch.val_features[i * n..(i + 1) * n];
                let a = dt * p;
                for (ri, fi) in r.iter_mut().zip(f) {
                    *ri += a * fi;
                }
            }
            loss += dot(&r, &r);
            if want_grad {
                for i in 0..nf {
                    grad[offset + i] += 2.0 * dt * dot(&r, &ch.val_features[i * n..(i + 1) * n]);
                }
            }
        }
        let m = ch.freq_len();
        if m > 0 && lambda != 0.0 {
            let mut r: Vec<Complex64> = ch.freq_target.iter().map(|y| -y).collect();
            for (i, &p) in phi.iter().enumerate() {
                let f = &ch.freq_features[i * m..(i + 1) * m];
                let a = dt * p;
                for (ri, fi) in r.iter_mut().zip(f) {
                    *ri += fi * a;
                }
            }
            loss += lambda * r.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if want_grad {
                for i in 0..nf {
                    let f = &ch.freq_features[i * m..(i + 1) * m];
                    let re: f64 = r.iter().zip(f).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
                    grad[offset + i] += 2.0 * dt * lambda * re;
                }
            }
        }
        offset += nf;
    }
    (loss, grad)
}

/// Loss of every timestep, in order.
pub fn per_step_losses(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    theta: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, LearnError> {
    check_dataset(cds, model)?;
    check_theta(model, theta)?;
    check_lambda(lambda)?;
    let coeffs = model.param_values(theta);
    Ok((0..cds.n_steps())
        .into_par_iter()
        .map(|t| step_terms(cds, t, &coeffs, lambda, false).0)
        .collect())
}

pub fn loss_reel(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    theta: &[f64],
    lambda: f64,
) -> Result<f64, LearnError> {
    Ok(per_step_losses(cds, model, theta, lambda)?.iter().sum())
}

/// Loss and gradient over the given timesteps. Per-step results are
/// reduced in the order of `steps`, so the result does not depend on
/// thread scheduling.
pub fn loss_and_grad(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    theta: &[f64],
    lambda: f64,
    steps: &[usize],
) -> Result<(f64, Vec<f64>), LearnError> {
    let (per, grad) = batch_terms(cds, model, theta, lambda, steps)?;
    Ok((per.iter().sum(), grad))
}

/// Per-step losses (in the order of `steps`) and the summed gradient.
pub(crate) fn batch_terms(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    theta: &[f64],
    lambda: f64,
    steps: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
    check_dataset(cds, model)?;
    check_theta(model, theta)?;
    check_lambda(lambda)?;
    if let Some(&bad) = steps.iter().find(|&&t| t >= cds.n_steps()) {
        return Err(LearnError::Config(format!("timestep {bad} out of range")));
    }
    let coeffs = model.param_values(theta);
    let parts: Vec<(f64, Vec<f64>)> = steps
        .par_iter()
        .map(|&t| step_terms(cds, t, &coeffs, lambda, true))
        .collect();
    let n_coeff: usize = coeffs.iter().map(|c| c.len()).sum();
    let mut per = Vec::with_capacity(parts.len());
    let mut gphi = vec![0.0; n_coeff];
    for (l, g) in &parts {
        per.push(*l);
        for (a, b) in gphi.iter_mut().zip(g) {
            *a += b;
        }
    }
    let jac: Vec<Vec<f64>> = model.param_jacobian(theta).concat();
    let mut grad = vec![0.0; theta.len()];
    for (gi, row) in gphi.iter().zip(&jac) {
        for (gj, dj) in grad.iter_mut().zip(row) {
            *gj += gi * dj;
        }
    }
    Ok((per, grad))
}

pub fn grad_reel(
    cds: &CompressedDataset,
    model: &dyn DecomposableModel,
    theta: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, LearnError> {
    let all: Vec<usize> = (0..cds.n_steps()).collect();
    Ok(loss_and_grad(cds, model, theta, lambda, &all)?.1)
}

/// `sum_t sum_fields |dt rhs(theta, u(t)) - (u(t+1) - u(t))|^2` straight
/// from the trajectory.
pub fn loss_baseline(
    theta: &[f64],
    traj: &Trajectory,
    model: &dyn DecomposableModel,
) -> Result<f64, LearnError> {
    traj.check_model(model)?;
    check_theta(model, theta)?;
    let dt = traj.dt();
    let per_step: Vec<f64> = (0..traj.n_steps())
        .into_par_iter()
        .map(|t| -> Result<f64, LearnError> {
            let rhs = evaluate_rhs(model, &traj.states[t], theta)?;
            let mut acc = 0.0;
            for (ch, r) in model.channels().iter().zip(&rhs) {
                let a = traj.states[t].require(&ch.field)?;
                let b = traj.states[t + 1].require(&ch.field)?;
                for ((x, y), z) in r.data().iter().zip(a.data()).zip(b.data()) {
                    let e = dt * x - (z - y);
                    acc += e * e;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_step.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{preprocess, raw_dataset, PreprocessConfig, Sketching};
    use crate::model::{build_model, ModelKind, SimConfig};
    use crate::sim::simulate;
    use crate::spectral::BetaRule;

    fn heat(steps: usize) -> (Trajectory, Box<dyn DecomposableModel>) {
        let cfg = SimConfig {
            steps,
            ..SimConfig::preset(ModelKind::Heat, 16)
        };
        (simulate(&cfg).unwrap(), build_model(&cfg).unwrap())
    }

    #[test]
    fn zero_at_truth() {
        let (traj, model) = heat(10);
        let th = model.true_theta().to_vec();
        let gt_energy: f64 = crate::sim::extract_changes(&traj)
            .unwrap()
            .iter()
            .map(|c| c[0].norm_sq())
            .sum();
        assert!(loss_baseline(&th, &traj, model.as_ref()).unwrap() <= 1e-18 * gt_energy);
        let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(90.0), 0.2, 2)).unwrap();
        let l = loss_reel(&cds, model.as_ref(), &th, 1.0).unwrap();
        let scale = loss_reel(&cds, model.as_ref(), &[0.0, th[1]], 1.0).unwrap();
        assert!(l <= 1e-16 * scale, "{l} vs {scale}");
        let g = grad_reel(&cds, model.as_ref(), &th, 1.0).unwrap();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gn < 1e-8, "{gn}");
    }

    #[test]
    fn doubled_prediction_leaves_the_change_as_residual() {
        let (traj, model) = heat(10);
        let th = model.true_theta();
        let l = loss_baseline(&[th[0], th[1] / 2.0], &traj, model.as_ref()).unwrap();
        let gt: f64 = crate::sim::extract_changes(&traj)
            .unwrap()
            .iter()
            .map(|c| c[0].norm_sq())
            .sum();
        assert!(((l - gt) / gt).abs() < 1e-10);
    }

    #[test]
    fn empty_window_is_zero() {
        let (traj, model) = heat(3);
        let t0 = traj.truncated(0);
        assert_eq!(loss_baseline(model.true_theta(), &t0, model.as_ref()).unwrap(), 0.0);
    }

    #[test]
    fn raw_dataset_reproduces_baseline() {
        let (traj, model) = heat(6);
        let raw = raw_dataset(&traj, model.as_ref()).unwrap();
        let th = [0.3, 1.7];
        let a = loss_baseline(&th, &traj, model.as_ref()).unwrap();
        let b = loss_reel(&raw, model.as_ref(), &th, 1.0).unwrap();
        assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn identity_sketch_equals_split_loss() {
        let (traj, model) = heat(6);
        let cfg = PreprocessConfig {
            beta: BetaRule::Percentile(80.0),
            sketching: Sketching::Identity,
            lambda: 1.0,
        };
        let cds = preprocess(&traj, model.as_ref(), &cfg).unwrap();
        let th = [0.3, 1.7];
        let coeffs = model.param_values(&th);
        let fft = crate::spectral::Fft2::new(&traj.grid);
        let lambda = 0.7;
        let mut direct = 0.0;
        for t in 0..traj.n_steps() {
            let parts = crate::learn::decompose_step(
                model.as_ref(),
                &fft,
                &traj.states[t],
                &traj.states[t + 1],
                Some(BetaRule::Percentile(80.0)),
            )
            .unwrap();
            let dc = &parts[0];
            let vt = dc.val_target.as_ref().unwrap();
            let mut lv = 0.0;
            for c in 0..vt.data().len() {
                let pred: f64 = (0..2).map(|i| traj.dt() * coeffs[0][i] * dc.val_features[i].data()[c]).sum();
                lv += (pred - vt.data()[c]).powi(2);
            }
            let ft = dc.freq_target.as_ref().unwrap();
            let mut lf = 0.0;
            for c in 0..ft.coeffs().len() {
                let pred: Complex64 = (0..2).map(|i| dc.freq_features[i].coeffs()[c] * (traj.dt() * coeffs[0][i])).sum();
                lf += (pred - ft.coeffs()[c]).norm_sqr();
            }
            // frequency sketches carry the unitary 1/sqrt(N) scaling
            direct += lv + lambda * lf / ft.coeffs().len() as f64;
        }
        let l = loss_reel(&cds, model.as_ref(), &th, lambda).unwrap();
        assert!(((l - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn identity_split_at_unit_lambda_is_plain_loss() {
        // value and frequency parts are orthogonal, so Parseval splits the
        // plain squared error exactly
        let (traj, model) = heat(6);
        let cfg = PreprocessConfig {
            beta: BetaRule::Percentile(70.0),
            sketching: Sketching::Identity,
            lambda: 1.0,
        };
        let cds = preprocess(&traj, model.as_ref(), &cfg).unwrap();
        let th = [0.3, 1.7];
        let a = loss_reel(&cds, model.as_ref(), &th, 1.0).unwrap();
        let b = loss_baseline(&th, &traj, model.as_ref()).unwrap();
        assert!(((a - b) / b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn zero_lambda_drops_frequency_part() {
        let (traj, model) = heat(6);
        let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(90.0), 0.3, 9)).unwrap();
        let mut zeroed = cds.clone();
        for s in &mut zeroed.steps {
            for ch in &mut s.channels {
                for z in ch.freq_target.iter_mut().chain(ch.freq_features.iter_mut()) {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
        let th = [0.9, 2.5];
        let a = loss_reel(&cds, model.as_ref(), &th, 0.0).unwrap();
        let b = loss_reel(&zeroed, model.as_ref(), &th, 1.0).unwrap();
        assert_eq!(a, b);
        let all: Vec<usize> = (0..cds.n_steps()).collect();
        let g0 = loss_and_grad(&cds, model.as_ref(), &th, 0.0, &all).unwrap().1;
        let mut value_only = cds.clone();
        for s in &mut value_only.steps {
            for ch in &mut s.channels {
                ch.freq_target.clear();
                ch.freq_features.clear();
            }
        }
        let g1 = loss_and_grad(&value_only, model.as_ref(), &th, 0.0, &all).unwrap().1;
        assert_eq!(g0, g1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (traj, model) = heat(3);
        let cds = raw_dataset(&traj, model.as_ref()).unwrap();
        assert!(loss_reel(&cds, model.as_ref(), &[1.0], 1.0).is_err());
        assert!(loss_reel(&cds, model.as_ref(), &[1.0, 1.0], -1.0).is_err());
        assert!(loss_and_grad(&cds, model.as_ref(), &[1.0, 1.0], 1.0, &[99]).is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reel_core::learn::{grad_reel, initial_theta, loss_reel, preprocess, PreprocessConfig, ThetaInit};
use reel_core::model::{build_model, ModelKind, SimConfig};
use reel_core::sim::simulate;
use reel_core::sketch::jl_sandwich_trial;
use reel_core::spectral::{dft2, vfdd, BetaRule};
use reel_core::taylor::{expand_exp_ratio, remainder_bound_exp, ArrheniusTerm};
use reel_core::{GridSpec, ScalarField};

use crate::error::CliError;

type Check = Result<(bool, String), CliError>;

const SUITES: [&str; 5] = ["vfdd", "jl", "taylor", "gradcheck", "conservation"];

pub fn run(suite: &str, seed: u64) -> Result<(), CliError> {
    let selected: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite '{other}' (expected {} or all)",
                SUITES.join(", ")
            )))
        }
    };
    let mut failed = 0;
    for name in selected {
        let (ok, detail) = match name {
            "vfdd" => vfdd_suite(seed)?,
            "jl" => jl_suite(seed)?,
            "taylor" => taylor_suite()?,
            "gradcheck" => grad_suite(seed)?,
            _ => conservation_suite()?,
        };
        println!("{:<13} {}  {detail}", name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::data(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

fn gaussian(nx: usize, ny: usize, seed: u64) -> ScalarField {
    let g = GridSpec::new(nx, ny, 1.0, 1.0).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_fn(g, |_, _| rng.sample(StandardNormal))
}

fn vfdd_suite(seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    let mut symmetric = true;
    for k in 0..20 {
        let f = gaussian(8 + k % 5, 8 + (3 * k) % 7, seed.wrapping_add(k as u64));
        for p in [0.0, 50.0, 90.0, 100.0] {
            let beta = BetaRule::Percentile(p).threshold(&dft2(&f));
            let pair = vfdd(&f, beta).map_err(CliError::data)?;
            symmetric &= pair.mask.is_symmetric();
            let r = pair.reconstruct();
            let err = r
                .data()
                .iter()
                .zip(f.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err / f.max_abs());
        }
    }
    Ok((
        symmetric && worst < 1e-10,
        format!("80 splits, max reconstruction error {worst:.1e}, masks symmetric: {symmetric}"),
    ))
}

fn jl_suite(seed: u64) -> Check {
    let d = 1024;
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = x.clone();
    for _ in 0..10 {
        let k = rng.random_range(0..d);
        y[k] += rng.sample::<f64, _>(StandardNormal);
    }
    let seeds: Vec<u64> = (0..100).map(|s| seed.wrapping_mul(1000).wrapping_add(s)).collect();
    let rate = jl_sandwich_trial(n, &seeds, &x, &y, 0.5).map_err(CliError::data)?;
    Ok((
        rate >= 0.95,
        format!("n={n}, d={d}, delta 0.5: {:.0}% of 100 projections inside, need 95%", 100.0 * rate),
    ))
}

fn taylor_suite() -> Check {
    let mut worst: f64 = 0.0;
    for order in 0..8 {
        for k in 0..=40 {
            let x = 0.1 * k as f64;
            let err = ((-x).exp() - expand_exp_ratio(order).eval(x)).abs();
            let bound = remainder_bound_exp(x, order).map_err(CliError::data)?.bound_value;
            if bound > 0.0 {
                worst = worst.max(err / bound);
            } else if err > 1e-15 {
                worst = f64::INFINITY;
            }
        }
    }
    let mut arr_ok = true;
    for order in 1..6 {
        let term = ArrheniusTerm::new(0.5, 0.4, order, 1.0, 1.0).map_err(CliError::data)?;
        for t in [0.5f64, 1.0, 2.0, 4.0] {
            let exact = 0.5 * (-0.4 / t).exp() / t;
            arr_ok &= (term.truncated(t) - exact).abs() <= term.truncation_bound(t) * (1.0 + 1e-9) + 1e-15;
        }
    }
    Ok((
        worst <= 1.0 + 1e-9 && arr_ok,
        format!("max error/bound {worst:.3} over orders 0..7, Arrhenius terms within bound: {arr_ok}"),
    ))
}

fn grad_suite(seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for kind in [ModelKind::Heat, ModelKind::SinteringLite, ModelKind::Nanovoid] {
        let cfg = SimConfig {
            steps: 6,
            ..SimConfig::preset(kind, 12)
        };
        let traj = simulate(&cfg)?;
        let model = build_model(&cfg)?;
        let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(85.0), 0.3, seed))?;
        let theta = initial_theta(model.as_ref(), &ThetaInit::Random, seed)?;
        let g = grad_reel(&cds, model.as_ref(), &theta, 1.0)?;
        let mut fd = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            let h = 1e-5 * theta[j].abs().max(1e-3);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            fd[j] = (loss_reel(&cds, model.as_ref(), &tp, 1.0)? - loss_reel(&cds, model.as_ref(), &tm, 1.0)?) / (2.0 * h);
        }
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    Ok((worst < 1e-5, format!("heat, sintering-lite, nanovoid: max relative error {worst:.1e}, limit 1e-5")))
}

fn conservation_suite() -> Check {
    let sint = SimConfig {
        steps: 200,
        ..SimConfig::preset(ModelKind::Sintering, 32)
    };
    let mut nano = SimConfig {
        steps: 200,
        ..SimConfig::preset(ModelKind::Nanovoid, 32)
    };
    nano.nanovoid.sources = false;
    let mut worst: f64 = 0.0;
    for (cfg, fields) in [(sint, vec!["phi"]), (nano, vec!["cv", "ci"])] {
        let traj = simulate(&cfg)?;
        for f in fields {
            let s0 = traj.states[0].require(f)?.sum();
            for s in &traj.states {
                worst = worst.max(((s.require(f)?.sum() - s0) / s0).abs());
            }
        }
    }
    Ok((worst <= 1e-6, format!("phi, cv, ci over 200 steps: max relative drift {worst:.1e}, limit 1e-6")))
}

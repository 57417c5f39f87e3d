mod common;

use reel_core::learn::{
    grad_reel, load_cds, loss_baseline, loss_reel, preprocess, raw_dataset, save_cds, train, CompressedDataset,
    PreprocessConfig, Sketching, ThetaInit, TrainConfig,
};
use reel_core::model::{build_model, laser_flux, DecomposableModel, LaserConfig, ModelKind, SimConfig};
use reel_core::sim::{simulate, Trajectory};
use reel_core::spectral::BetaRule;

fn setup(kind: ModelKind, n: usize, steps: usize) -> (Trajectory, Box<dyn DecomposableModel>) {
    let cfg = SimConfig {
        steps,
        ..SimConfig::preset(kind, n)
    };
    (simulate(&cfg).unwrap(), build_model(&cfg).unwrap())
}

#[test]
fn loss_vanishes_at_true_parameters() {
    for kind in [ModelKind::Heat, ModelKind::SinteringLite, ModelKind::Nanovoid] {
        let (traj, model) = setup(kind, 16, 10);
        let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(90.0), 0.2, 4)).unwrap();
        let th = model.true_theta();
        let scale = loss_reel(&cds, model.as_ref(), &model.param_scales().iter().map(|s| 1.3 * s).collect::<Vec<_>>(), 1.0).unwrap();
        let at_truth = loss_reel(&cds, model.as_ref(), th, 1.0).unwrap();
        assert!(at_truth <= 1e-16 * scale, "{kind}: {at_truth} vs {scale}");
        let g = grad_reel(&cds, model.as_ref(), th, 1.0).unwrap();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gn < 1e-8, "{kind}: gradient norm {gn}");
    }
}

#[test]
fn doubled_parameters_give_target_energy() {
    // prediction = 2 du, so the residual is du itself
    let (traj, model) = setup(ModelKind::Heat, 16, 20);
    let th = model.true_theta();
    let doubled = [th[0], 0.5 * th[1]];
    let energy: f64 = (0..traj.n_steps())
        .map(|t| {
            let a = traj.states[t + 1].require("T").unwrap();
            let b = traj.states[t].require("T").unwrap();
            (a - b).norm_sq()
        })
        .sum();
    let l = loss_baseline(&doubled, &traj, model.as_ref()).unwrap();
    assert!(((l - energy) / energy).abs() < 1e-10);
}

#[test]
fn extreme_thresholds_empty_one_domain() {
    let (traj, model) = setup(ModelKind::Nanovoid, 16, 5);
    let all_val = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Fixed(f64::INFINITY), 0.2, 1)).unwrap();
    let all_freq = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Fixed(0.0), 0.2, 1)).unwrap();
    for s in &all_val.steps {
        assert!(s.channels.iter().all(|c| c.freq_target.is_empty() && c.val_len() > 0));
    }
    for s in &all_freq.steps {
        // bins with an exactly zero coefficient can stay in the value part
        assert!(s.channels.iter().all(|c| c.freq_len() > 0));
    }
}

#[test]
fn preprocessing_is_reproducible_and_files_round_trip() {
    let (traj, model) = setup(ModelKind::SinteringLite, 16, 8);
    let cfg = PreprocessConfig::new(BetaRule::Percentile(90.0), 0.1, 77);
    let a = preprocess(&traj, model.as_ref(), &cfg).unwrap();
    let b = preprocess(&traj, model.as_ref(), &cfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.cds");
    save_cds(&a, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), {
        let q = dir.path().join("y.cds");
        save_cds(&b, &q).unwrap();
        std::fs::read(&q).unwrap()
    });
    assert_eq!(load_cds(&p).unwrap(), a);
}

#[test]
fn training_needs_only_the_compressed_file() {
    let (traj, model) = setup(ModelKind::Heat, 16, 30);
    let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(90.0), 0.2, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.cds");
    save_cds(&cds, &p).unwrap();
    drop(traj);
    let loaded: CompressedDataset = load_cds(&p).unwrap();
    let cfg = TrainConfig {
        lr: 0.1,
        epochs: 10,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = train(&cds, model.as_ref(), &cfg).unwrap();
    let b = train(&loaded, model.as_ref(), &cfg).unwrap();
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.theta, b.theta);
}

#[test]
fn gaussian_sketch_loss_is_unbiased_at_full_ratio() {
    let (traj, model) = setup(ModelKind::Heat, 16, 20);
    let beta = BetaRule::Percentile(90.0);
    let exact = preprocess(
        &traj,
        model.as_ref(),
        &PreprocessConfig {
            beta,
            sketching: Sketching::Identity,
            lambda: 1.0,
        },
    )
    .unwrap();
    let th = reel_core::learn::initial_theta(model.as_ref(), &ThetaInit::Random, 3).unwrap();
    let l_t = loss_reel(&exact, model.as_ref(), &th, 1.0).unwrap();
    let mean: f64 = (0..100)
        .map(|k| {
            let cds = preprocess(&traj, model.as_ref(), &PreprocessConfig::new(beta, 1.0, 500 + 2 * k)).unwrap();
            loss_reel(&cds, model.as_ref(), &th, 1.0).unwrap()
        })
        .sum::<f64>()
        / 100.0;
    assert!((mean / l_t - 1.0).abs() < 0.1, "mean {mean} vs {l_t}");
}

#[test]
fn raw_dataset_reproduces_plain_loss() {
    let (traj, model) = setup(ModelKind::Nanovoid, 16, 6);
    let raw = raw_dataset(&traj, model.as_ref()).unwrap();
    let th = reel_core::learn::initial_theta(model.as_ref(), &ThetaInit::Random, 8).unwrap();
    let a = loss_reel(&raw, model.as_ref(), &th, 1.0).unwrap();
    let b = loss_baseline(&th, &traj, model.as_ref()).unwrap();
    assert!(((a - b) / b).abs() < 1e-12);
}

#[test]
fn laser_beam_integrates_to_four_gamma() {
    // 2 Gamma / (pi w^2) * 2 pi w^2 from the Gaussian integral
    let g = reel_core::GridSpec::new(96, 96, 0.5, 0.1).unwrap();
    let laser = LaserConfig {
        gamma: 3.0,
        omega: 4.0,
        center: None,
    };
    let q = laser_flux(g, &laser).unwrap();
    let integral = q.sum() * g.dx * g.dx;
    assert!((integral - 12.0).abs() < 1e-6, "{integral}");
}

#[test]
fn epoch_time_falls_with_compression() {
    let (traj, model) = setup(ModelKind::SinteringLite, 64, 60);
    let cfg = TrainConfig {
        lr: 1e-3,
        epochs: 5,
        ..TrainConfig::default()
    };
    let time = |cds: &CompressedDataset| common::median(&train(cds, model.as_ref(), &cfg).unwrap().epoch_ms);
    let beta = BetaRule::Percentile(90.0);
    let t1 = time(&preprocess(&traj, model.as_ref(), &PreprocessConfig::new(beta, 0.01, 1)).unwrap());
    let t10 = time(&preprocess(&traj, model.as_ref(), &PreprocessConfig::new(beta, 0.1, 1)).unwrap());
    let traw = time(&raw_dataset(&traj, model.as_ref()).unwrap());
    assert!(t1 < t10 && t10 < traw, "{t1} {t10} {traw}");
}

mod common;

use proptest::prelude::*;
use reel_core::model::{build_model, ModelKind, SimConfig};
use reel_core::sim::{extract_changes, simulate};
use reel_core::sketch::make_projection;
use reel_core::spectral::{dft2, vfdd, BetaRule, Fft2};
use reel_core::taylor::{expand_exp_ratio, remainder_bound_exp, ArrheniusTerm};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vfdd_reconstructs_any_field(seed in 0u64..10_000, nx in 4usize..20, ny in 4usize..20, p in 0.0f64..100.0) {
        let f = common::gaussian_field(common::grid(nx, ny), seed);
        let beta = BetaRule::Percentile(p).threshold(&dft2(&f));
        let pair = vfdd(&f, beta).unwrap();
        prop_assert!(pair.mask.is_symmetric());
        prop_assert!(common::rel_err_l2(pair.reconstruct().data(), f.data()) < 1e-10);
        // the value part carries no energy in the kept bins
        let sv = dft2(&pair.s_val);
        for (c, &k) in sv.coeffs().iter().zip(pair.mask.keep()) {
            if k {
                prop_assert!(c.norm() < 1e-9 * (1.0 + f.norm_sq().sqrt()));
            }
        }
    }

    #[test]
    fn library_fft_matches_naive_dft(seed in 0u64..1000, nx in 4usize..10, ny in 4usize..10) {
        let f = common::gaussian_field(common::grid(nx, ny), seed);
        let fast = Fft2::new(f.grid()).forward(&f);
        let slow = common::naive_dft2(&f);
        for (a, b) in fast.coeffs().iter().zip(&slow) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn exp_remainder_is_bounded(x in 0.0f64..8.0, n in 0usize..10) {
        let err = ((-x).exp() - expand_exp_ratio(n).eval(x)).abs();
        let bound = remainder_bound_exp(x, n).unwrap().bound_value;
        prop_assert!(err <= bound * (1.0 + 1e-12) + 1e-15);
        prop_assert!((expand_exp_ratio(n).eval(x) - common::exp_neg_partial_sum(x, n)).abs() < 1e-9);
    }

    #[test]
    fn arrhenius_truncation_within_bound(d0 in 0.01f64..1.0, q in 0.05f64..1.0, temp in 0.5f64..5.0, order in 1usize..7) {
        let term = ArrheniusTerm::new(d0, q, order, 1.0, 1.0).unwrap();
        let exact = d0 * (-q / temp).exp() / temp;
        let err = (term.truncated(temp) - exact).abs();
        let bound = d0 / temp * common::lagrange_bound(q / temp, order);
        prop_assert!(err <= bound * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn projection_is_linear_and_seeded(seed in 0u64..500, a in -3.0f64..3.0) {
        let d = 64;
        let p = make_projection(9, d, seed).unwrap().materialize();
        let x = common::sparse_vec(d, 5, seed);
        let y = common::sparse_vec(d, 7, seed + 1);
        let lhs = p.apply_real(&x.iter().zip(&y).map(|(u, v)| a * u + v).collect::<Vec<_>>()).unwrap();
        let px = p.apply_real(&x).unwrap();
        let py = p.apply_real(&y).unwrap();
        for ((l, u), v) in lhs.iter().zip(&px).zip(&py) {
            prop_assert!((l - (a * u + v)).abs() < 1e-12);
        }
        let again = make_projection(9, d, seed).unwrap().materialize();
        prop_assert_eq!(again.apply_real(&x).unwrap(), px);
    }
}

#[test]
fn changes_telescope_for_every_model() {
    for kind in [ModelKind::Heat, ModelKind::SinteringLite, ModelKind::Nanovoid] {
        let cfg = SimConfig {
            steps: 15,
            ..SimConfig::preset(kind, 12)
        };
        let traj = simulate(&cfg).unwrap();
        let model = build_model(&cfg).unwrap();
        let changes = extract_changes(&traj).unwrap();
        for (c, name) in model.field_names().iter().enumerate() {
            let mut total = reel_core::ScalarField::zeros(traj.grid);
            for step in &changes {
                total.axpy(1.0, &step[c]).unwrap();
            }
            let direct = traj.states.last().unwrap().require(name).unwrap() - traj.states[0].require(name).unwrap();
            let err = (&total - &direct).max_abs();
            assert!(err < 1e-12 * (1.0 + direct.max_abs()), "{kind} {name}: {err}");
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SimConfig {
        steps: 20,
        ..SimConfig::preset(ModelKind::Nanovoid, 16)
    };
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.reel");
    let b = dir.path().join("b.reel");
    reel_core::sim::save(&simulate(&cfg).unwrap(), &a).unwrap();
    reel_core::sim::save(&simulate(&cfg).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

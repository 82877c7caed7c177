use cramer_gmm::fit::*;
use cramer_gmm::gmm_nd::GmmN;
use cramer_gmm::io::{gen_paper2d, ModelFile};
use cramer_gmm::optim::LearningRates;
use cramer_gmm::{c2_squared, Gmm1};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sc2(steps: usize, lr: LearningRates, seed: u64) -> FitConfig {
    FitConfig {
        steps,
        loss_kind: LossKind::Sc2,
        lr,
        seed,
        ..FitConfig::default()
    }
}

#[test]
fn recovers_a_sampled_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs = Gmm1::single(3.0, 1.0).sample_n(&mut rng, 1000);
    let r = fit_gmm_to_points_1d(&xs, 1, &sc2(500, LearningRates::new(0.0, 2e-2, 1e-2), 1)).unwrap();
    let m = r.model_1d().unwrap();
    assert!((m.means()[0] - 3.0).abs() <= 0.2, "{m:?}");
    assert!((m.stds()[0] - 1.0).abs() <= 0.2, "{m:?}");
    assert_eq!(r.loss_history.len(), 500);
    assert_eq!(r.diagnostics.non_finite_sc2, 0);
}

#[test]
fn collapses_onto_a_repeated_point() {
    let xs = vec![2.5; 40];
    let init = GmmN::from_gmm1(&Gmm1::single(1.0, 1.0));
    let pts: Vec<_> = xs.iter().map(|&x| DVector::from_element(1, x)).collect();
    let r = fit_gmm_to_points_from(&init, &pts, &sc2(1500, LearningRates::new(0.0, 5e-3, 5e-3), 0))
        .unwrap();
    let m = r.model_1d().unwrap();
    assert!((m.means()[0] - 2.5).abs() < 0.02, "{m:?}");
    assert!(m.stds()[0] < 0.02, "{m:?}");
    // Monotone while both parameters are still travelling towards the
    // target; afterwards Lion's momentum overshoots and then settles.
    let h = &r.loss_history;
    assert!(h[..300].windows(2).all(|w| w[1] <= w[0]), "loss not monotone");
    assert!(*h.last().unwrap() < 0.01);
}

#[test]
fn recovers_a_normal_target_directly() {
    let target = GmmN::from_gmm1(&Gmm1::single(0.0, 1.0));
    let init = GmmN::from_gmm1(&Gmm1::single(1.5, 2.0));
    let cfg = sc2(2000, LearningRates::new(0.0, 2e-3, 2e-3), 0);
    let r = fit_gmm_to_gmm_from(&init, &target, &cfg).unwrap();
    let m = r.model_1d().unwrap();
    assert!(m.means()[0].abs() <= 0.01, "{m:?}");
    assert!((m.stds()[0] - 1.0).abs() <= 0.01, "{m:?}");
    // The same target with the default initialisation.
    let r = fit_gmm_to_gmm(&target, 1, &cfg).unwrap();
    let m = r.model_1d().unwrap();
    assert!(m.means()[0].abs() <= 0.01 && (m.stds()[0] - 1.0).abs() <= 0.01, "{m:?}");
}

#[test]
fn target_equal_to_initialisation_stays_put() {
    let g = Gmm1::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.5, 1.5]).unwrap();
    let gn = GmmN::from_gmm1(&g);
    let r = fit_gmm_to_gmm_from(&gn, &gn, &sc2(200, LearningRates::new(1e-3, 1e-3, 1e-3), 0))
        .unwrap();
    assert!(r.loss_history.iter().all(|&l| l <= 1e-12), "{:?}", &r.loss_history[..5]);
}

#[test]
fn two_component_target_is_matched() {
    let target = Gmm1::new(vec![0.4, 0.6], vec![-2.0, 1.5], vec![0.5, 0.8]).unwrap();
    let cfg = sc2(4000, LearningRates::new(2e-3, 2e-3, 1e-3), 3);
    let r = fit_gmm1_to_gmm1(&target, 2, &cfg).unwrap();
    let d = c2_squared(&r.model_1d().unwrap(), &target);
    assert!(d <= 1e-4, "final distance {d}, model {:?}", r.model_1d());
}

#[test]
fn frozen_weights_do_not_move() {
    let target = Gmm1::new(vec![0.2, 0.8], vec![-1.0, 1.0], vec![0.3, 0.3]).unwrap();
    let cfg = sc2(300, LearningRates::new(0.0, 1e-2, 1e-2), 5);
    let r = fit_gmm1_to_gmm1(&target, 3, &cfg).unwrap();
    assert_eq!(r.model.weights(), r.initial_model.weights());
    assert!(r.model.weights().iter().all(|&w| w == 1.0 / 3.0));

    let pts = gen_paper2d(100, 4).unwrap();
    let cfg = FitConfig {
        steps: 50,
        lr: LearningRates::new(0.0, 2e-2, 3e-3),
        ..FitConfig::default()
    };
    let r = fit_gmm_to_points(&pts, 4, &cfg).unwrap();
    assert_eq!(r.model.weights(), r.initial_model.weights());
}

#[test]
fn runs_are_deterministic() {
    let pts = gen_paper2d(200, 8).unwrap();
    let cfg = FitConfig {
        steps: 60,
        nll_steps: 20,
        loss_kind: LossKind::Sc2ThenNll,
        seed: 42,
        ..FitConfig::default()
    };
    let a = fit_gmm_to_points(&pts, 5, &cfg).unwrap();
    let b = fit_gmm_to_points(&pts, 5, &cfg).unwrap();
    assert_eq!(a, b);
    let bits = |r: &FitReport| r.loss_history.iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ModelFile::from_gmm(&a.model).to_json(), ModelFile::from_gmm(&b.model).to_json());
    let c = fit_gmm_to_points(&pts, 5, &FitConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.loss_history, c.loss_history);
}

#[test]
fn likelihood_schedule_on_one_dimensional_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let target = Gmm1::new(vec![0.5, 0.5], vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap();
    let xs = target.sample_n(&mut rng, 400);
    let cfg = FitConfig {
        steps: 400,
        loss_kind: LossKind::Nll,
        lr: LearningRates::new(1e-3, 1e-2, 5e-3),
        ..FitConfig::default()
    };
    let r = fit_gmm_to_points_1d(&xs, 2, &cfg).unwrap();
    assert_eq!(r.sc2_steps, 0);
    assert_eq!(r.loss_history.len(), 400);
    let h = &r.loss_history;
    assert!(h[h.len() - 1] < h[0]);
}

#[test]
fn fixed_and_resampled_uniform_directions() {
    let pts: Vec<_> = gen_paper2d(150, 5).unwrap();
    for resample in [true, false] {
        let cfg = FitConfig {
            steps: 200,
            t_slices: 16,
            resample_directions_every_step: resample,
            ..FitConfig::default()
        };
        let r = fit_gmm_to_points(&pts, 4, &cfg).unwrap();
        let h = &r.loss_history;
        assert!(h[h.len() - 1] < h[0] / 2.0, "resample={resample}: {} -> {}", h[0], h[h.len() - 1]);
    }
}

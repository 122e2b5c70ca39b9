use approx::assert_relative_eq;
use ttplab::fields::{AlphaHook, FieldScenario};
use ttplab::quadrature::QuadratureGrid;
use ttplab::stochastic::{self, Averaging, FieldSnapshot, P0Policy, StochasticModel, TtpSpec};
use ttplab::{LabError, Vec3};

#[test]
fn monte_carlo_draws_are_seeded_and_equally_weighted() {
    let model = StochasticModel::gaussian(&[[1.0, 0.5], [0.0, 2.0]]);
    let a = model.draws(Averaging::MonteCarlo, 50, 4).unwrap();
    assert_eq!(a, model.draws(Averaging::MonteCarlo, 50, 4).unwrap());
    assert_ne!(a, model.draws(Averaging::MonteCarlo, 50, 5).unwrap());
    assert!(a.weights.iter().all(|&w| w == 1.0 / 50.0));
    assert!(a.alphas.iter().all(|x| x.len() == 2));
}

#[test]
fn quadrature_reproduces_uniform_moments() {
    let d = StochasticModel::uniform(&[[2.0, 1.0]]).draws(Averaging::Quadrature, 4, 0).unwrap();
    let m = |p: i32| d.alphas.iter().zip(&d.weights).map(|(a, w)| w * (a[0] - 2.0).powi(p)).sum::<f64>();
    assert_relative_eq!(m(0), 1.0, epsilon = 1e-15);
    assert_relative_eq!(m(2), 1.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(m(4), 1.0 / 5.0, epsilon = 1e-15);
    let two = StochasticModel::uniform(&[[0.0, 1.0]; 4]);
    assert!(two.draws(Averaging::Quadrature, 2, 0).is_err());
}

#[test]
fn models_validate_their_components() {
    assert!(StochasticModel::gaussian(&[]).validate().is_err());
    assert!(StochasticModel::gaussian(&[[0.0, 0.0]]).validate().is_err());
    assert!(StochasticModel::uniform(&[[f64::NAN, 1.0]]).validate().is_err());
    assert!(StochasticModel::delta(&[0.0]).validate().is_ok());
    assert!(StochasticModel::delta(&[0.0]).draws(Averaging::MonteCarlo, 0, 0).is_err());
    let g = StochasticModel::gaussian(&[[0.0, 1.0]]);
    assert_relative_eq!(g.pdf(&[0.0]), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
    assert_eq!(g.pdf(&[0.0, 1.0]), 0.0);
}

#[test]
fn constant_values_have_no_fluctuations() {
    let d = StochasticModel::gaussian(&[[0.0, 1.0]]).draws(Averaging::MonteCarlo, 7, 1).unwrap();
    let dec = stochastic::decompose(&[0.1; 7], &d).unwrap();
    assert_eq!(dec.mean, 0.1);
    assert!(dec.fluctuations.iter().all(|&f| f == 0.0));
    assert_eq!(dec.stderr, Some(0.0));
    assert!(stochastic::decompose(&[1.0; 6], &d).is_err());
    let one = StochasticModel::delta(&[0.0]).draws(Averaging::MonteCarlo, 1, 0).unwrap();
    assert!(matches!(stochastic::decompose(&[1.0], &one), Err(LabError::InsufficientSamples { need: 2, have: 1 })));
}

fn synthetic(alpha: f64) -> FieldSnapshot {
    FieldSnapshot {
        alpha: vec![alpha],
        p0: 1.0,
        rho: 1.0 + alpha,
        p1: 2.0 + alpha,
        v_th: 2.0,
        vel: Vec3::zeros(),
        u_th: Vec3::new(0.0, alpha, 0.0),
        force: Vec3::new(alpha, 0.0, 0.0),
    }
}

#[test]
fn kramers_moyal_on_synthetic_snapshots() {
    // α uniform on [−1, 1]; three Gauss-Legendre nodes integrate α⁴ exactly.
    let d = StochasticModel::uniform(&[[0.0, 1.0]]).draws(Averaging::Quadrature, 3, 0).unwrap();
    let snaps: Vec<FieldSnapshot> = d.alphas.iter().map(|a| synthetic(a[0])).collect();
    let km = stochastic::kramers_moyal(&snaps, &d, 3).unwrap();
    // n = 2 and n = 3: 6 + 10 entries.
    assert_eq!(km.entries.len(), 16);
    let e = km.entry(0, 0, 3).unwrap();
    assert_eq!(e.shape, [3, 27]);
    assert_eq!(e.values.len(), 81);
    assert!(e.stderr.is_none());
    // ⟨α α α α⟩/3! with the three δu factors all along y: c = 1·9 + 1·3 + 1.
    assert_relative_eq!(e.get(0, 13), 1.0 / 30.0, epsilon = 1e-15);
    assert_relative_eq!(km.entry(3, 0, 0).unwrap().get(0, 0), 1.0 / 30.0, epsilon = 1e-15);
    assert_relative_eq!(km.entry(0, 1, 2).unwrap().get(0, 4), 1.0 / 30.0, epsilon = 1e-15);
    // Odd total orders vanish for a symmetric α.
    for e in km.entries.values().filter(|e| e.total_order() % 2 == 1) {
        assert!(e.values.iter().all(|v| v.abs() < 1e-16));
    }
    assert!(km.entry(4, 0, 0).is_none());
}

#[test]
fn monte_carlo_km_needs_enough_members() {
    let d = StochasticModel::gaussian(&[[0.0, 1.0]]).draws(Averaging::MonteCarlo, 4, 0).unwrap();
    let snaps: Vec<FieldSnapshot> = d.alphas.iter().map(|a| synthetic(a[0])).collect();
    let err = stochastic::kramers_moyal(&snaps, &d, 3);
    assert!(matches!(err, Err(LabError::InsufficientSamples { need: 5, have: 4 })));
    assert!(stochastic::kramers_moyal(&snaps, &d, 2).unwrap().entries.values().all(|e| e.stderr.is_some()));
    assert!(stochastic::kramers_moyal(&snaps[..3], &d, 2).is_err());
}

#[test]
fn ordering_of_synthetic_fluctuations() {
    let d = StochasticModel::uniform(&[[0.0, 0.5]]).draws(Averaging::Quadrature, 3, 0).unwrap();
    let snaps: Vec<FieldSnapshot> = d.alphas.iter().map(|a| synthetic(a[0])).collect();
    let rep = stochastic::ordering_report(&snaps, &d).unwrap();
    // rms α = 0.5/√3
    let rms = 0.5 / 3f64.sqrt();
    assert_relative_eq!(rep.zeta_rho.value, rms, epsilon = 1e-15);
    assert_relative_eq!(rep.zeta_p.value, rms / 2.0, epsilon = 1e-15);
    assert_eq!(rep.zeta_v.value, 0.0);
    assert!(rep.zeta_rho.stderr.is_none());
}

#[test]
fn delta_model_bundle_members_are_identical() {
    let mut sc = FieldScenario::builtin("rigid-rotation").unwrap();
    sc.set_param("omega", 0.2).unwrap();
    let sc = sc.with_hooks(vec![AlphaHook { param: "omega".into(), amplitude: 0.01 }]);
    let grid = QuadratureGrid::new(sc.domain, [6, 6, 2]).unwrap();
    let spec = TtpSpec { r0: Vec3::new(1.0, 0.0, 0.0), beta: 0.5, direction: Vec3::new(0.0, 1.0, 0.0) };
    let d = StochasticModel::delta(&[0.0]).draws(Averaging::MonteCarlo, 3, 0).unwrap();
    let bundle = stochastic::langevin_run(&sc, &spec, &d, P0Policy::Entropy, 0.0, 0.1, 0.01, &grid, 5).unwrap();
    assert_eq!(bundle.success_fraction, 1.0);
    let first = bundle.members[0].run.as_ref().unwrap();
    let direct = stochastic::run_deterministic(&sc.realize(&[0.0]).unwrap(), &spec, P0Policy::Entropy, 0.0, 0.1, 0.01, &grid, 5)
        .unwrap();
    assert_eq!(first, &direct);
    for m in &bundle.members {
        assert_eq!(m.run.as_ref().unwrap(), first);
    }
    let snaps = stochastic::bundle_snapshots(&bundle, &sc, &spec.r0, 0.05, 0.5, &spec.direction).unwrap();
    let km = stochastic::kramers_moyal(&snaps, &d, 2);
    // Three members cannot carry Monte-Carlo statistics to order 2.
    assert!(km.is_err());
    assert!(stochastic::bundle_snapshots(&bundle, &sc, &spec.r0, 0.5, 0.5, &spec.direction).is_err());
}

#[test]
fn spec_direction_must_leave_the_gradient() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    let spec = TtpSpec { r0: Vec3::new(1.0, 0.0, 0.0), beta: 0.5, direction: Vec3::new(2.0, 0.0, 0.0) };
    let p0 = ttplab::kinetics::P0::steady(1.0);
    assert!(matches!(stochastic::spawn_from_spec(&sc, &spec, 0.0, p0), Err(LabError::InvalidInitialCondition { .. })));
    let oblique = TtpSpec { direction: Vec3::new(1.0, 1.0, 0.0), ..spec };
    let s = stochastic::spawn_from_spec(&sc, &oblique, 0.0, p0).unwrap();
    assert_relative_eq!(s.n, Vec3::y(), epsilon = 1e-15);
    assert_relative_eq!(s.beta, 0.5, epsilon = 1e-15);
}

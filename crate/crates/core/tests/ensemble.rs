use approx::assert_relative_eq;
use ttplab::ensemble::{self, BetaSampler, EnsembleConfig};
use ttplab::fields::{Aabb, FieldScenario};
use ttplab::kinetics::{P0Track, PseudoPressureState, P0};
use ttplab::quadrature::QuadratureGrid;
use ttplab::{rng, LabError, Vec3};

#[test]
fn beta_cdf_integrates_the_pdf() {
    let (x, w) = ttplab::quadrature::gauss_legendre(20);
    for b in [0.1, 0.5, 0.99, 1.0, 1.5, 3.0] {
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| 0.5 * b * wi * ensemble::beta_pdf(0.5 * b * (xi + 1.0))).sum();
        assert_relative_eq!(ensemble::beta_cdf(b), q, epsilon = 1e-13);
    }
    assert_eq!(ensemble::beta_cdf(0.0), 0.0);
    assert_relative_eq!(ensemble::beta_cdf(8.0), 1.0, epsilon = 1e-15);
}

#[test]
fn sampler_inverts_the_cdf() {
    let s = BetaSampler::new(512);
    for q in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999] {
        assert_relative_eq!(ensemble::beta_cdf(s.quantile(q)), q, max_relative = 1e-10);
    }
}

#[test]
fn f1m_carries_density_and_pressure() {
    let (rho, v_th) = (1.7, 0.8);
    assert_relative_eq!(ensemble::f1m_mass(rho, v_th), rho, max_relative = 1e-12);
    assert_relative_eq!(ensemble::f1m_pressure(rho, v_th), 0.5 * rho * v_th * v_th, max_relative = 1e-12);
}

#[test]
fn samples_are_tangent_and_reproducible() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    let r = Vec3::new(0.6, 0.8, 0.0);
    let a = ensemble::sample_at_point(&sc, &r, 0.0, P0::steady(1.0), 200, 9).unwrap();
    let b = ensemble::sample_at_point(&sc, &r, 0.0, P0::steady(1.0), 200, 9).unwrap();
    assert_eq!(a, b);
    let c = ensemble::sample_at_point(&sc, &r, 0.0, P0::steady(1.0), 200, 10).unwrap();
    assert_ne!(a, c);
    for s in &a {
        assert!(s.n.dot(&Vec3::new(0.6, 0.8, 0.0)).abs() < 1e-15);
        assert_relative_eq!(s.n.norm(), 1.0, epsilon = 1e-15);
        assert!(s.beta > 0.0);
    }
    let mut g = rng::stream(9, 0);
    assert_eq!(ensemble::sample_ttp(&sc, &r, 0.0, P0::steady(1.0), &mut g).unwrap(), a[0]);
}

#[test]
fn sampling_needs_a_tangent_plane() {
    let sc = FieldScenario::builtin("uniform").unwrap();
    let err = ensemble::sample_ttp(&sc, &Vec3::new(0.5, 0.5, 0.5), 0.0, P0::steady(1.0), &mut rng::stream(1, 0));
    assert!(matches!(err, Err(LabError::Sampling(_))));
}

#[test]
fn small_ensemble_run() {
    let mut sc = FieldScenario::builtin("rigid-rotation").unwrap();
    sc.set_param("omega", 0.2).unwrap();
    let grid = QuadratureGrid::new(sc.domain, [6, 6, 2]).unwrap();
    let p0 = PseudoPressureState::initialize(&sc, 0.0, &grid).unwrap();
    let cfg = EnsembleConfig {
        n_particles: 400,
        seed: 3,
        spawn_region: Aabb::new([0.5, 0.5, -0.1], [0.6, 0.6, 0.1]).unwrap(),
        t0: 0.0,
        spawn_points: 2,
    };
    let run = ensemble::evolve_ensemble(&cfg, &sc, &p0, &grid, 0.1, 0.01, 5).unwrap();
    assert_eq!(run.spawn_points.len(), 2);
    assert_eq!(run.final_states.len(), 400);
    assert_eq!(run.snapshots.first().unwrap().t, 0.0);
    assert_relative_eq!(run.snapshots.last().unwrap().t, 0.1, epsilon = 1e-12);
    assert_eq!(run.failures.total(), 0);
    let again = ensemble::evolve_ensemble(&cfg, &sc, &p0, &grid, 0.1, 0.01, 5).unwrap();
    assert_eq!(run.final_states, again.final_states);
}

#[test]
fn spawn_region_must_lie_in_the_domain() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    let cfg = EnsembleConfig {
        n_particles: 10,
        seed: 0,
        spawn_region: Aabb::new([1.5, 0.0, 0.0], [2.5, 0.1, 0.1]).unwrap(),
        t0: 0.0,
        spawn_points: 1,
    };
    assert!(matches!(cfg.validate(&sc), Err(LabError::Config(_))));
    let zero = EnsembleConfig { n_particles: 0, spawn_region: Aabb::new([0.0; 3], [0.1; 3]).unwrap(), ..cfg };
    assert!(matches!(zero.validate(&sc), Err(LabError::Config(_))));
}

#[test]
fn moments_need_enough_samples() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    let r = Vec3::new(0.6, 0.8, 0.0);
    let few = ensemble::sample_at_point(&sc, &r, 0.0, P0::steady(1.0), 10, 1).unwrap();
    let cell = Aabb::new([0.5, 0.7, -0.1], [0.7, 0.9, 0.1]).unwrap();
    let err = ensemble::estimate_moments(&few, &sc, &P0Track::steady(1.0), &cell);
    assert!(matches!(err, Err(LabError::InsufficientSamples { need: 30, have: 10 })));
}

#[test]
fn hre_variance_needs_two_draws() {
    let sc = FieldScenario::builtin("uniform").unwrap();
    let r = Vec3::new(0.5, 0.5, 0.5);
    assert!(ensemble::hre_variance_check(&sc, &r, 0.0, P0::steady(1.0), 1, 0).is_err());
    let rep = ensemble::hre_variance_check(&sc, &r, 0.0, P0::steady(1.0), 20_000, 0).unwrap();
    assert!((rep.lhs - rep.rhs).abs() < 5.0 * rep.stderr);
}

use approx::assert_relative_eq;
use ttplab::fields::{self, eval_sample, Aabb, FieldScenario, BUILTIN_IDS};
use ttplab::{LabError, Vec3};

#[test]
fn builtins_validate_and_expose_their_parameters() {
    for id in BUILTIN_IDS {
        let sc = FieldScenario::builtin(id).unwrap();
        sc.validate().unwrap();
        for name in sc.param_names() {
            let v = sc.get_param(name).unwrap();
            let mut c = sc.clone();
            c.set_param(name, v).unwrap();
            assert_eq!(c, sc);
        }
    }
    assert!(matches!(FieldScenario::builtin("poiseuille"), Err(LabError::Config(_))));
}

#[test]
fn taylor_green_matches_closed_form() {
    let sc = FieldScenario::builtin("taylor-green").unwrap();
    let (u0, k, rho0, nu) = (1.0, 1.0, 1.0, 0.01);
    let (x, y, t) = (0.7, 2.1, 0.4);
    let s = eval_sample(&sc, &Vec3::new(x, y, 0.5), t, &[]).unwrap();
    let decay = (-2.0 * nu * k * k * t).exp();
    assert_relative_eq!(s.vel.x, u0 * decay * (k * x).sin() * (k * y).cos(), epsilon = 1e-15);
    assert_relative_eq!(s.vel.y, -u0 * decay * (k * x).cos() * (k * y).sin(), epsilon = 1e-15);
    let p = 1.0 + 0.25 * rho0 * u0 * u0 * decay * decay * ((2.0 * k * x).cos() + (2.0 * k * y).cos());
    assert_relative_eq!(s.p, p, epsilon = 1e-15);
    assert_eq!(s.div_v, 0.0);
    // ξ_z = ∂x V_y − ∂y V_x = 2 k U sin kx sin ky e^{-2νk²t}
    let xi = fields::vorticity(&s);
    assert_relative_eq!(xi.z, 2.0 * k * u0 * decay * (k * x).sin() * (k * y).sin(), epsilon = 1e-14);
}

#[test]
fn rigid_rotation_vorticity_and_pressure() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    let s = eval_sample(&sc, &Vec3::new(0.6, -0.8, 0.3), 1.0, &[]).unwrap();
    assert_relative_eq!(fields::vorticity(&s), Vec3::new(0.0, 0.0, 4.0), epsilon = 1e-15);
    assert_relative_eq!(s.p, 0.5 * 4.0 * 1.0, epsilon = 1e-15);
    assert_relative_eq!(s.grad_p, Vec3::new(4.0 * 0.6, -4.0 * 0.8, 0.0), epsilon = 1e-15);
}

#[test]
fn couette_heats_at_the_dissipation_rate() {
    let sc = FieldScenario::builtin("couette").unwrap();
    let s = eval_sample(&sc, &Vec3::new(0.5, 0.5, 0.5), 2.0, &[]).unwrap();
    // μγ² / (n c_p) with n = ρ/m = 1, c_p = 2.5, μ = 0.01
    assert_relative_eq!(s.dt_temp, 0.01 / 2.5, epsilon = 1e-15);
    assert_relative_eq!(fields::viscous_dissipation(&s, &sc.physics), 0.01, epsilon = 1e-15);
}

#[test]
fn residuals_vanish_on_a_lattice() {
    for id in BUILTIN_IDS {
        let sc = FieldScenario::builtin(id).unwrap();
        let c = sc.domain.center();
        for dx in [-0.3, 0.0, 0.3] {
            let r = c + Vec3::new(dx, -dx, 0.5 * dx);
            let res = fields::residuals(&sc, &r, 0.5 * (sc.t_span[0] + sc.t_span[1])).unwrap();
            assert!(res.max_abs() < 1e-10, "{id}: {res:?}");
        }
    }
}

#[test]
fn finite_differences_converge_at_second_order() {
    let sc = FieldScenario::builtin("manufactured-compressible").unwrap();
    let r = Vec3::new(0.2, -0.1, 0.3);
    let coarse = fields::fd_check(&sc, &r, 0.4, 1e-2).unwrap();
    let fine = fields::fd_check(&sc, &r, 0.4, 5e-3).unwrap();
    assert!(coarse / fine > 3.5 && coarse / fine < 4.5, "ratio {}", coarse / fine);
}

#[test]
fn events_outside_the_domain_are_rejected() {
    let sc = FieldScenario::builtin("rigid-rotation").unwrap();
    assert!(matches!(eval_sample(&sc, &Vec3::new(3.0, 0.0, 0.0), 0.0, &[]), Err(LabError::Domain { .. })));
    assert!(matches!(eval_sample(&sc, &Vec3::zeros(), 101.0, &[]), Err(LabError::Domain { .. })));
    let wider = sc.with_domain(Aabb::new([-5.0; 3], [5.0; 3]).unwrap());
    assert!(eval_sample(&wider, &Vec3::new(3.0, 0.0, 0.0), 0.0, &[]).is_ok());
}

#[test]
fn scenario_documents_parse_and_reject_mistakes() {
    let sc = FieldScenario::from_json(
        r#"{"id": "rigid-rotation", "params": {"omega": 0.5},
            "alpha_hooks": [{"param": "omega", "amplitude": 0.1}]}"#,
    )
    .unwrap();
    assert_eq!(sc.get_param("omega").unwrap(), 0.5);
    let realized = sc.realize(&[2.0]).unwrap();
    assert_relative_eq!(realized.get_param("omega").unwrap(), 0.6, epsilon = 1e-15);
    assert!(realized.alpha_hooks.is_empty());
    assert!(sc.realize(&[1.0, 2.0]).is_err());

    for bad in [
        r#"{"id": "rigid-rotation", "colour": 3}"#,
        r#"{"id": "rigid-rotation", "params": {"viscosity": 1.0}}"#,
        r#"{"id": "uniform", "domain": {"min": [0, 0, 0], "max": [1, 0, 1]}}"#,
        r#"{"id": "uniform", "params": {"rho": -1.0}}"#,
        r#"{"id": "uniform", "alpha_hooks": [{"param": "omega", "amplitude": 1.0}]}"#,
        r#"{"id": "couette", "t_span": [1.0, 1.0]}"#,
    ] {
        assert!(matches!(FieldScenario::from_json(bad), Err(LabError::Config(_))), "{bad}");
    }
}

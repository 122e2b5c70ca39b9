use proptest::prelude::*;
use ttplab::ensemble;
use ttplab::fields::{self, eval_sample, FieldScenario, BUILTIN_IDS};
use ttplab::kinetics::{kinetic_fields, P0Track, P0};
use ttplab::stochastic::{self, Averaging, StochasticModel};
use ttplab::ttp::{self, ITPState, TTPState};
use ttplab::Vec3;

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

/// A point strictly inside the scenario domain, from unit-cube coordinates.
fn inside(sc: &FieldScenario, f: [f64; 3]) -> Vec3 {
    let (lo, hi) = (sc.domain.min, sc.domain.max);
    Vec3::from_fn(|k, _| lo[k] + (0.05 + 0.9 * f[k]) * (hi[k] - lo[k]))
}

fn manufactured() -> FieldScenario {
    FieldScenario::builtin("manufactured-compressible").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frame_is_orthonormal_and_right_handed(b in unit()) {
        let (e1, e2) = ttp::frame(&b);
        prop_assert!((e1.norm() - 1.0).abs() < 1e-14);
        prop_assert!((e2.norm() - 1.0).abs() < 1e-14);
        prop_assert!(e1.dot(&b).abs() < 1e-15 && e2.dot(&b).abs() < 1e-15 && e1.dot(&e2).abs() < 1e-15);
        prop_assert!((e1.cross(&e2) - b).norm() < 1e-14);
    }

    #[test]
    fn builtins_satisfy_their_equations(id in 0..BUILTIN_IDS.len(), f in prop::array::uniform3(0.0..1.0f64), tf in 0.0..1.0f64) {
        let sc = FieldScenario::builtin(BUILTIN_IDS[id]).unwrap();
        let t = sc.t_span[0] + tf * (sc.t_span[1] - sc.t_span[0]).min(10.0);
        let res = fields::residuals(&sc, &inside(&sc, f), t).unwrap();
        prop_assert!(res.max_abs() < 1e-9, "{}: {:?}", BUILTIN_IDS[id], res);
    }

    #[test]
    fn omega_along_b_cancels_vorticity(f in prop::array::uniform3(0.0..1.0f64), beta in 0.0..3.0f64, phi in 0.0..6.3f64, t in 0.0..1.0f64) {
        let sc = manufactured();
        let r = inside(&sc, f);
        let s = eval_sample(&sc, &r, t, &[]).unwrap();
        let kf = kinetic_fields(&s, P0::steady(1.0), &sc).unwrap();
        let Some(b) = kf.b else { return Ok(()) };
        let (e1, e2) = ttp::frame(&b);
        let n = phi.cos() * e1 + phi.sin() * e2;
        let state = TTPState { r, n, beta, t, speed: beta * kf.v_th, degenerate: false };
        let om = ttp::omega(&sc, &state, t, P0::steady(1.0)).unwrap();
        let xi = fields::vorticity(&s);
        prop_assert!((om.dot(&b) + xi.dot(&b)).abs() < 1e-12 * (1.0 + xi.norm() + om.norm()));
    }

    #[test]
    fn ttp_force_splits_into_itp_force_and_gauge(f in prop::array::uniform3(0.0..1.0f64), beta in 0.0..3.0f64, phi in 0.0..6.3f64, t in 0.0..1.0f64) {
        let sc = manufactured();
        let r = inside(&sc, f);
        let p0 = P0::steady(1.0);
        let s = eval_sample(&sc, &r, t, &[]).unwrap();
        let kf = kinetic_fields(&s, p0, &sc).unwrap();
        let Some(b) = kf.b else { return Ok(()) };
        let (e1, e2) = ttp::frame(&b);
        let n = phi.cos() * e1 + phi.sin() * e2;
        let state = TTPState { r, n, beta, t, speed: beta * kf.v_th, degenerate: false };
        let total = ttp::ttp_mean_field(&sc, &state, t, p0).unwrap();
        let itp = ttp::itp_mean_field_gaussian(&sc, &ITPState { r, u: state.u(), t }, t, p0).unwrap();
        let gauge = ttp::gauge_field_ttp(&sc, &state, t, p0).unwrap();
        prop_assert!((total - itp - gauge).norm() < 1e-12 * (1.0 + total.norm() + itp.norm()));
    }

    #[test]
    fn beta_cdf_is_monotone_and_bounded(a in 0.0..6.0f64, d in 0.0..1.0f64) {
        let (lo, hi) = (ensemble::beta_cdf(a), ensemble::beta_cdf(a + d));
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= hi);
    }

    #[test]
    fn fluctuations_average_to_zero(values in prop::collection::vec(-1e3..1e3f64, 8), quad in any::<bool>()) {
        let model = StochasticModel::uniform(&[[0.0, 1.0]]);
        let draws = if quad {
            model.draws(Averaging::Quadrature, 8, 0).unwrap()
        } else {
            model.draws(Averaging::MonteCarlo, 8, 0).unwrap()
        };
        let d = stochastic::decompose(&values, &draws).unwrap();
        let avg: f64 = d.fluctuations.iter().zip(&draws.weights).map(|(f, w)| f * w).sum();
        prop_assert!(avg.abs() < 1e-12 * (1.0 + d.mean.abs()));
        for (v, f) in values.iter().zip(&d.fluctuations) {
            prop_assert!((d.mean + f - v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn a_step_keeps_n_a_unit_tangent(f in prop::array::uniform3(0.0..1.0f64), beta in 0.0..2.0f64, phi in 0.0..6.3f64) {
        let sc = FieldScenario::builtin("taylor-green").unwrap();
        let r = inside(&sc, f);
        let p0 = P0::steady(1.0);
        let s = eval_sample(&sc, &r, 0.0, &[]).unwrap();
        let kf = kinetic_fields(&s, p0, &sc).unwrap();
        let Some(b) = kf.b else { return Ok(()) };
        let (e1, e2) = ttp::frame(&b);
        let n = phi.cos() * e1 + phi.sin() * e2;
        let state = TTPState { r, n, beta, t: 0.0, speed: beta * kf.v_th, degenerate: false };
        let Ok(rep) = ttp::step_ttp(&state, &sc, &P0Track::steady(1.0), 1e-3) else { return Ok(()) };
        let out = rep.state;
        prop_assert!((out.n.norm() - 1.0).abs() < 1e-14);
        let s1 = eval_sample(&sc, &out.r, out.t, &[]).unwrap();
        if let Some(b1) = kinetic_fields(&s1, p0, &sc).unwrap().b {
            prop_assert!(out.n.dot(&b1).abs() < 1e-14);
        }
        prop_assert_eq!(out.beta, beta);
    }
}

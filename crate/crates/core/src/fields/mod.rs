//! Analytic thermofluid scenarios and the Navier-Stokes-Fourier operators
//! evaluated on them.

mod sample;
mod scenario;

use serde::Serialize;

pub use sample::{eval_sample, FluidSample};
pub(crate) use sample::{check_event, eval_unchecked};
pub use scenario::{Aabb, AlphaHook, FieldScenario, Flow, Physics, ScenarioSpec, BUILTIN_IDS};

use crate::error::{LabError, Result};
use crate::{Mat3, Vec3};

/// ξ = ∇×V.
pub fn vorticity(s: &FluidSample) -> Vec3 {
    let g = &s.grad_v;
    Vec3::new(g[(1, 2)] - g[(2, 1)], g[(2, 0)] - g[(0, 2)], g[(0, 1)] - g[(1, 0)])
}

/// ∇·σ′ for constant viscosity coefficients.
pub fn div_sigma(s: &FluidSample, ph: &Physics) -> Vec3 {
    ph.mu * (s.lap_v + s.grad_div_v) + (ph.lambda - 2.0 * ph.mu / 3.0) * s.grad_div_v
}

/// NS acceleration F_H = -(∇p - f)/ρ + (∇·σ′)/ρ.
pub fn ns_acceleration(s: &FluidSample, scenario: &FieldScenario) -> Result<Vec3> {
    if !(s.rho > 0.0) {
        return Err(LabError::InvalidSample(format!("rho={} at {:?}", s.rho, s.r)));
    }
    Ok((div_sigma(s, &scenario.physics) - (s.grad_p - s.f_body)) / s.rho)
}

/// Symmetric traceless strain contraction Σ_ik (∂iVk + ∂kVi - (2/3)δ_ik ∇·V)².
pub fn strain_square(s: &FluidSample) -> f64 {
    let g = &s.grad_v;
    let mut acc = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            let d = if i == k { 2.0 * s.div_v / 3.0 } else { 0.0 };
            let e = g[(i, k)] + g[(k, i)] - d;
            acc += e * e;
        }
    }
    acc
}

/// Viscous dissipation (∇V):σ′.
pub fn viscous_dissipation(s: &FluidSample, ph: &Physics) -> f64 {
    0.5 * ph.mu * strain_square(s) + ph.lambda * s.div_v * s.div_v
}

/// n(c_p - αp/n).
pub(crate) fn heat_capacity_density(s: &FluidSample, ph: &Physics) -> f64 {
    s.number_density(ph.m_ref) * ph.c_p - ph.alpha_coef * s.p
}

/// Heat-source numerator without the external heating term.
pub(crate) fn heat_work_terms(s: &FluidSample, ph: &Physics) -> f64 {
    let n = s.number_density(ph.m_ref);
    let dp_dt = s.dt_p + s.vel.dot(&s.grad_p);
    -s.vel.dot(&s.f_body) - (ph.beta_t * n - ph.alpha_coef * s.temp) * dp_dt - s.p * s.div_v
        + viscous_dissipation(s, ph)
        + ph.k_cond * s.hess_temp.trace()
}

/// Heat production rate K.
pub fn heat_source(s: &FluidSample, scenario: &FieldScenario) -> Result<f64> {
    let ph = &scenario.physics;
    let den = heat_capacity_density(s, ph);
    if den.abs() <= 1e-14 * (s.number_density(ph.m_ref) * ph.c_p).abs().max(f64::MIN_POSITIVE) {
        return Err(LabError::Singular { r: [s.r.x, s.r.y, s.r.z] });
    }
    Ok((heat_work_terms(s, ph) + s.heating) / den)
}

/// J_T including external heating: (-V·f + heating)/n.
pub fn heating_rate(s: &FluidSample, ph: &Physics) -> f64 {
    (-s.vel.dot(&s.f_body) + s.heating) / s.number_density(ph.m_ref)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub continuity: f64,
    pub momentum: Vec3,
    pub fourier: f64,
}

impl Residuals {
    pub fn max_abs(&self) -> f64 {
        self.continuity.abs().max(self.momentum.amax()).max(self.fourier.abs())
    }
}

/// Residuals of the continuity, momentum and temperature equations.
pub fn residuals(scenario: &FieldScenario, r: &Vec3, t: f64) -> Result<Residuals> {
    let s = eval_sample(scenario, r, t, &[])?;
    let continuity = s.dt_rho + s.vel.dot(&s.grad_rho) + s.rho * s.div_v;
    let momentum = s.dv_dt() - ns_acceleration(&s, scenario)?;
    let fourier = s.dt_temp + s.vel.dot(&s.grad_temp) - heat_source(&s, scenario)?;
    Ok(Residuals { continuity, momentum, fourier })
}

/// Worst relative deviation between the analytic derivatives and central
/// differences of step `h` in x, y, z and t. Second derivatives are checked
/// against differences of the analytic first derivatives.
pub fn fd_check(scenario: &FieldScenario, r: &Vec3, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(LabError::Config(format!("fd step h={h} must be positive")));
    }
    let s = eval_sample(scenario, r, t, &[])?;
    let mut worst: f64 = 0.0;
    let mut cmp = |analytic: f64, fd: f64| {
        let dev = (analytic - fd).abs() / analytic.abs().max(1.0);
        worst = worst.max(dev);
    };
    for axis in 0..4 {
        let shift = |sgn: f64| -> Result<FluidSample> {
            let mut rr = *r;
            let mut tt = t;
            if axis < 3 {
                rr[axis] += sgn * h;
            } else {
                tt += sgn * h;
            }
            eval_sample(scenario, &rr, tt, &[])
        };
        let (sp, sm) = (shift(1.0)?, shift(-1.0)?);
        let d = |f: fn(&FluidSample) -> f64| (f(&sp) - f(&sm)) / (2.0 * h);
        let dv = |f: fn(&FluidSample) -> Vec3| (f(&sp) - f(&sm)) / (2.0 * h);

        let first = |grad: &Vec3, dt: f64| if axis < 3 { grad[axis] } else { dt };
        cmp(first(&s.grad_rho, s.dt_rho), d(|q| q.rho));
        cmp(first(&s.grad_p, s.dt_p), d(|q| q.p));
        cmp(first(&s.grad_temp, s.dt_temp), d(|q| q.temp));
        cmp(first(&s.grad_phi, s.dt_phi), d(|q| q.phi));
        let fd_vel = dv(|q| q.vel);
        for j in 0..3 {
            let a = if axis < 3 { s.grad_v[(axis, j)] } else { s.dt_v[j] };
            cmp(a, fd_vel[j]);
        }

        let second = |hess: &Mat3, dt_grad: &Vec3, k: usize| {
            if axis < 3 {
                hess[(axis, k)]
            } else {
                dt_grad[k]
            }
        };
        let pairs: [(&Mat3, &Vec3, Vec3); 4] = [
            (&s.hess_rho, &s.dt_grad_rho, dv(|q| q.grad_rho)),
            (&s.hess_p, &s.dt_grad_p, dv(|q| q.grad_p)),
            (&s.hess_temp, &s.dt_grad_temp, dv(|q| q.grad_temp)),
            (&s.hess_phi, &s.dt_grad_phi, dv(|q| q.grad_phi)),
        ];
        for (hess, dt_grad, fd) in pairs {
            for k in 0..3 {
                cmp(second(hess, dt_grad, k), fd[k]);
            }
        }
        if axis < 3 {
            cmp(s.grad_div_v[axis], d(|q| q.div_v));
        }
    }
    // Laplacian: Σ_i ∂i(∂i V_j), assembled from per-axis differences.
    let mut lap = Vec3::zeros();
    for axis in 0..3 {
        let mut rp = *r;
        let mut rm = *r;
        rp[axis] += h;
        rm[axis] -= h;
        let sp = eval_sample(scenario, &rp, t, &[])?;
        let sm = eval_sample(scenario, &rm, t, &[])?;
        for j in 0..3 {
            lap[j] += (sp.grad_v[(axis, j)] - sm.grad_v[(axis, j)]) / (2.0 * h);
        }
    }
    for j in 0..3 {
        cmp(s.lap_v[j], lap[j]);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_fields_are_flat() {
        let mut sc = FieldScenario::builtin("uniform").unwrap();
        sc.set_param("vx", 1.0).unwrap();
        sc.set_param("p", 0.2).unwrap();
        let s = eval_sample(&sc, &Vec3::new(0.3, 0.4, 0.5), 1.0, &[]).unwrap();
        assert_eq!(s.grad_v, Mat3::zeros());
        assert_eq!(s.div_v, 0.0);
        assert_eq!(vorticity(&s), Vec3::zeros());
        assert_eq!(ns_acceleration(&s, &sc).unwrap(), Vec3::zeros());
        assert_eq!(heat_source(&s, &sc).unwrap(), 0.0);
        let res = residuals(&sc, &Vec3::new(0.3, 0.4, 0.5), 1.0).unwrap();
        assert_eq!(res.max_abs(), 0.0);
        assert_eq!(fd_check(&sc, &Vec3::new(0.5, 0.5, 0.5), 1.0, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn rigid_rotation_point_values() {
        let sc = FieldScenario::builtin("rigid-rotation").unwrap();
        let s = eval_sample(&sc, &Vec3::new(1.0, 0.0, 0.0), 0.0, &[]).unwrap();
        assert_eq!(s.vel, Vec3::new(0.0, 2.0, 0.0));
        assert_eq!(s.div_v, 0.0);
        assert_eq!(vorticity(&s), Vec3::new(0.0, 0.0, 4.0));
        // Centripetal balance -ω²R r̂.
        let fh = ns_acceleration(&s, &sc).unwrap();
        assert!((fh - Vec3::new(-4.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((fh - s.dv_dt()).norm() < 1e-15);
    }

    #[test]
    fn out_of_domain_and_arity_errors() {
        let sc = FieldScenario::builtin("uniform").unwrap();
        assert!(matches!(
            eval_sample(&sc, &Vec3::new(2.0, 0.0, 0.0), 0.0, &[]),
            Err(LabError::Domain { .. })
        ));
        assert!(matches!(eval_sample(&sc, &Vec3::zeros(), -1.0, &[]), Err(LabError::Domain { .. })));
        assert!(matches!(eval_sample(&sc, &Vec3::zeros(), 0.0, &[0.1]), Err(LabError::Config(_))));
    }

    #[test]
    fn shear_heat_source_by_hand() {
        let sc = FieldScenario::builtin("couette").unwrap();
        let s = eval_sample(&sc, &Vec3::new(0.5, 0.5, 0.5), 0.0, &[]).unwrap();
        // Only ∂yVx = γ survives: (μ/2)·2γ² over n c_p.
        let mu = sc.physics.mu;
        let expect = mu * 1.0 / (1.0 * sc.physics.c_p);
        assert!((heat_source(&s, &sc).unwrap() - expect).abs() < 1e-15);
    }
}

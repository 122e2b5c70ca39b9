use serde::Serialize;

use crate::error::{LabError, Result};
use crate::jet::{Jet, T};
use crate::{Mat3, Vec3};

use super::scenario::{FieldScenario, Flow, RawFields};

/// Fluid fields and their space/time derivatives at one event.
///
/// `grad_v[(i, j)]` is ∂V_j/∂r_i, so `u·∇V` is `grad_v.transpose() * u`.
/// Mixed derivatives `dt_grad_*` are ∂t∇ of the named field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluidSample {
    pub r: Vec3,
    pub t: f64,
    pub rho: f64,
    pub vel: Vec3,
    pub p: f64,
    pub temp: f64,
    pub phi: f64,
    pub f_body: Vec3,
    /// External volumetric heating, entering the heat source beside -V·f.
    pub heating: f64,
    pub grad_rho: Vec3,
    pub grad_p: Vec3,
    pub grad_temp: Vec3,
    pub grad_phi: Vec3,
    pub grad_v: Mat3,
    pub hess_rho: Mat3,
    pub hess_p: Mat3,
    pub hess_temp: Mat3,
    pub hess_phi: Mat3,
    pub dt_rho: f64,
    pub dt_p: f64,
    pub dt_temp: f64,
    pub dt_phi: f64,
    pub dt_v: Vec3,
    pub dt_grad_rho: Vec3,
    pub dt_grad_p: Vec3,
    pub dt_grad_temp: Vec3,
    pub dt_grad_phi: Vec3,
    pub lap_v: Vec3,
    pub grad_div_v: Vec3,
    pub div_v: f64,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn m3(a: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, k| a[i][k])
}

/// Rebuild a jet from stored derivatives. The ∂tt slot is left at zero and
/// never read downstream.
pub(crate) fn jet_of(value: f64, grad: &Vec3, dt: f64, hess: &Mat3, dt_grad: &Vec3) -> Jet {
    let mut j = Jet::cst(value);
    for i in 0..3 {
        j.g[i] = grad[i];
        j.h[T][i] = dt_grad[i];
        j.h[i][T] = dt_grad[i];
        for k in 0..3 {
            j.h[i][k] = hess[(i, k)];
        }
    }
    j.g[T] = dt;
    j
}

impl FluidSample {
    fn from_raw(r: Vec3, t: f64, raw: &RawFields) -> Self {
        let vel = Vec3::from_fn(|j, _| raw.vel[j].v);
        let grad_v = Mat3::from_fn(|i, j| raw.vel[j].g[i]);
        let dt_v = Vec3::from_fn(|j, _| raw.vel[j].g[T]);
        let lap_v = Vec3::from_fn(|j, _| (0..3).map(|i| raw.vel[j].h[i][i]).sum());
        let grad_div_v = Vec3::from_fn(|i, _| (0..3).map(|j| raw.vel[j].h[i][j]).sum());
        let div_v = grad_v.trace();
        FluidSample {
            r,
            t,
            rho: raw.rho.v,
            vel,
            p: raw.p.v,
            temp: raw.temp.v,
            phi: raw.phi.v,
            f_body: Vec3::zeros(),
            heating: 0.0,
            grad_rho: v3(raw.rho.grad3()),
            grad_p: v3(raw.p.grad3()),
            grad_temp: v3(raw.temp.grad3()),
            grad_phi: v3(raw.phi.grad3()),
            grad_v,
            hess_rho: m3(raw.rho.hess3()),
            hess_p: m3(raw.p.hess3()),
            hess_temp: m3(raw.temp.hess3()),
            hess_phi: m3(raw.phi.hess3()),
            dt_rho: raw.rho.g[T],
            dt_p: raw.p.g[T],
            dt_temp: raw.temp.g[T],
            dt_phi: raw.phi.g[T],
            dt_v,
            dt_grad_rho: v3(raw.rho.dt_grad3()),
            dt_grad_p: v3(raw.p.dt_grad3()),
            dt_grad_temp: v3(raw.temp.dt_grad3()),
            dt_grad_phi: v3(raw.phi.dt_grad3()),
            lap_v,
            grad_div_v,
            div_v,
        }
    }

    pub(crate) fn rho_jet(&self) -> Jet {
        jet_of(self.rho, &self.grad_rho, self.dt_rho, &self.hess_rho, &self.dt_grad_rho)
    }

    pub(crate) fn p_jet(&self) -> Jet {
        jet_of(self.p, &self.grad_p, self.dt_p, &self.hess_p, &self.dt_grad_p)
    }

    pub(crate) fn phi_jet(&self) -> Jet {
        jet_of(self.phi, &self.grad_phi, self.dt_phi, &self.hess_phi, &self.dt_grad_phi)
    }

    pub(crate) fn temp_jet(&self) -> Jet {
        jet_of(self.temp, &self.grad_temp, self.dt_temp, &self.hess_temp, &self.dt_grad_temp)
    }

    /// Jet of P = p - phi + n T with n = rho / m_ref.
    pub(crate) fn pressure_part_jet(&self, m_ref: f64) -> Jet {
        self.p_jet() - self.phi_jet() + self.rho_jet() * self.temp_jet() / m_ref
    }

    /// Hessian of (p - phi + nT)/rho.
    pub fn hess_p1_part(&self, m_ref: f64) -> Mat3 {
        let q = self.pressure_part_jet(m_ref) / self.rho_jet();
        m3(q.hess3())
    }

    pub fn number_density(&self, m_ref: f64) -> f64 {
        self.rho / m_ref
    }

    /// Convective derivative D/Dt = ∂t + V·∇ of the velocity.
    pub fn dv_dt(&self) -> Vec3 {
        self.dt_v + self.grad_v.transpose() * self.vel
    }
}

/// Evaluate all fields at (r, t). A nonempty `alpha` is applied through the
/// scenario's hooks first.
pub fn eval_sample(scenario: &FieldScenario, r: &Vec3, t: f64, alpha: &[f64]) -> Result<FluidSample> {
    if !alpha.is_empty() {
        let realized = scenario.realize(alpha)?;
        return eval_sample(&realized, r, t, &[]);
    }
    check_event(scenario, r, t)?;
    Ok(eval_unchecked(scenario, r, t))
}

pub(crate) fn check_event(scenario: &FieldScenario, r: &Vec3, t: f64) -> Result<()> {
    let [t0, t1] = scenario.t_span;
    let tol = 1e-12 * (t1 - t0).abs().max(1.0);
    let finite = r.iter().all(|c| c.is_finite()) && t.is_finite();
    if !finite || !scenario.domain.contains(r) || t < t0 - tol || t > t1 + tol {
        return Err(LabError::Domain { r: [r.x, r.y, r.z], t });
    }
    Ok(())
}

pub(crate) fn eval_unchecked(scenario: &FieldScenario, r: &Vec3, t: f64) -> FluidSample {
    let raw = scenario.raw(Jet::event(r.x, r.y, r.z, t));
    let mut s = FluidSample::from_raw(*r, t, &raw);
    let ph = &scenario.physics;
    match scenario.flow {
        Flow::Manufactured { .. } => {
            s.f_body = s.rho * s.dv_dt() + s.grad_p - super::div_sigma(&s, ph);
            let den = super::heat_capacity_density(&s, ph);
            let dtemp = s.dt_temp + s.vel.dot(&s.grad_temp);
            s.heating = den * dtemp - super::heat_work_terms(&s, ph);
        }
        _ if scenario.is_isothermal() => {
            s.heating = -super::heat_work_terms(&s, ph) + 0.0;
        }
        _ => {}
    }
    s
}

//! Thermal tracer particles: the Ω pseudo-vector, the mean-field forces and
//! constrained trajectory integration.
//!
//! A TTP carries a direction `n` tangent to the level sets of p̂1 and a speed
//! `|u| = β v_th`. The integrated state is (r, n, s) with s = |u|:
//!
//! ```text
//! dr/dt = V + s n
//! dn/dt = Ω × n
//! ds/dt = s · ½ D ln p̂1/Dt
//! ```
//!
//! so β = s / v_th is a derived quantity whose drift measures integration
//! error rather than being imposed.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{self, eval_sample, FieldScenario, FluidSample};
use crate::kinetics::{kinetic_fields, KineticFields, P0Track, P0};
use crate::{Mat3, Vec3};

/// Default tolerance on |n·b| accepted by [`init_ttp`].
pub const TOL_ORTH: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TTPState {
    pub r: Vec3,
    pub n: Vec3,
    /// β label fixed at initialization.
    pub beta: f64,
    pub t: f64,
    /// Integrated |u|.
    pub speed: f64,
    /// Set when b was undefined at some step and n was frozen.
    pub degenerate: bool,
}

impl TTPState {
    pub fn u(&self) -> Vec3 {
        self.speed * self.n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ITPState {
    pub r: Vec3,
    pub u: Vec3,
    pub t: f64,
}

/// Extended fluid fields Q and Π with the divergences the correction needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedMoments {
    pub q_flux: Vec3,
    pub pi: Mat3,
    pub div_q: f64,
    pub div_pi: Vec3,
}

impl ExtendedMoments {
    pub fn new(q_flux: Vec3, pi: Mat3, div_q: f64, div_pi: Vec3) -> Result<Self> {
        let asym = (pi - pi.transpose()).amax();
        if asym > 1e-14 * pi.amax().max(1.0) {
            return Err(LabError::InvalidState(format!("Π not symmetric (|Π-Πᵀ|={asym:e})")));
        }
        Ok(ExtendedMoments { q_flux, pi, div_q, div_pi })
    }
}

fn point(r: &Vec3) -> [f64; 3] {
    [r.x, r.y, r.z]
}

/// Sample and kinetic fields at one event.
pub(crate) fn local(scenario: &FieldScenario, r: &Vec3, t: f64, p0: P0) -> Result<(FluidSample, KineticFields)> {
    let s = eval_sample(scenario, r, t, &[])?;
    let kf = kinetic_fields(&s, p0, scenario)?;
    Ok((s, kf))
}

/// Ω for relative velocity `u`, given b is defined.
pub(crate) fn omega_at(s: &FluidSample, kf: &KineticFields, u: &Vec3) -> Result<Vec3> {
    let b = kf.b.ok_or(LabError::DegenerateGradient { r: point(&s.r) })?;
    let g = kf.grad_p1_hat.norm();
    // d∇p̂1/dt along the particle, then its component normal to b over |∇p̂1|.
    let w = s.vel + u;
    let dg = kf.dt_grad_p1_hat + kf.hess_p1_hat * w;
    let db = (dg - b * b.dot(&dg)) / g;
    let c = -fields::vorticity(s).dot(&b);
    Ok(b.cross(&db) + c * b)
}

/// Ω(r, t) for the particle's current relative velocity.
pub fn omega(scenario: &FieldScenario, state: &TTPState, t: f64, p0: P0) -> Result<Vec3> {
    let (s, kf) = local(scenario, &state.r, t, p0)?;
    omega_at(&s, &kf, &(kf.v_th * state.beta * state.n))
}

/// Ω × n, taken as zero where b is undefined (n frozen).
fn rotation_term(s: &FluidSample, kf: &KineticFields, u: &Vec3, n: &Vec3) -> Result<Vec3> {
    if kf.b.is_none() {
        return Ok(Vec3::zeros());
    }
    Ok(omega_at(s, kf, u)?.cross(n))
}

/// Total TTP acceleration F + ΔF̄ = F_H + u·∇V + (u/2) A/p1 + β u Ω×n at u = β v_th n.
pub fn ttp_mean_field(scenario: &FieldScenario, state: &TTPState, t: f64, p0: P0) -> Result<Vec3> {
    let (s, kf) = local(scenario, &state.r, t, p0)?;
    let u = state.beta * kf.v_th * state.n;
    let fh = fields::ns_acceleration(&s, scenario)?;
    let rot = rotation_term(&s, &kf, &u, &state.n)?;
    Ok(fh + s.grad_v.transpose() * u + u * (0.5 * kf.a / kf.p1) + state.beta * u.norm() * rot)
}

/// Acceleration of u = β v_th n implied by the TTP dynamics:
/// F_H + u·∇V + β n Dv_th/Dt + β v_th Ω×n.
pub fn stochastic_mean_field(scenario: &FieldScenario, state: &TTPState, t: f64, p0: P0) -> Result<Vec3> {
    let (s, kf) = local(scenario, &state.r, t, p0)?;
    let u = state.beta * kf.v_th * state.n;
    let fh = fields::ns_acceleration(&s, scenario)?;
    let rot = rotation_term(&s, &kf, &u, &state.n)?;
    Ok(fh + s.grad_v.transpose() * u + u * (0.5 * kf.a / kf.p1) + u.norm() * rot)
}

fn gauge_parts(s: &FluidSample, kf: &KineticFields, beta: f64, n: &Vec3) -> Result<(Vec3, Vec3)> {
    let u = beta * kf.v_th * n;
    let v2 = kf.v_th * kf.v_th;
    let grad_ln_rho = s.grad_rho / s.rho;
    let grad_ln_hat = kf.grad_p1_hat / kf.p1_hat;
    let f0 = -(0.5 * v2 * grad_ln_rho + 0.5 * v2 * grad_ln_hat * (beta * beta - 0.5));
    let f1 = beta * u.norm() * rotation_term(s, kf, &u, n)?;
    Ok((f0, f1))
}

/// Gauge field ΔF̄₀ + ΔF̄₁ acting on a TTP.
pub fn gauge_field_ttp(scenario: &FieldScenario, state: &TTPState, t: f64, p0: P0) -> Result<Vec3> {
    let (s, kf) = local(scenario, &state.r, t, p0)?;
    let (f0, f1) = gauge_parts(&s, &kf, state.beta, &state.n)?;
    Ok(f0 + f1)
}

pub(crate) fn itp_force(scenario: &FieldScenario, s: &FluidSample, kf: &KineticFields, u: &Vec3) -> Result<Vec3> {
    let fh = fields::ns_acceleration(s, scenario)?;
    let v2 = kf.v_th * kf.v_th;
    let x2 = u.norm_squared() / v2;
    let fu = 0.5 * v2 * s.grad_rho / s.rho
        + u * (0.5 * kf.a / kf.p1)
        + 0.5 * v2 * (kf.grad_p1_hat / kf.p1_hat) * (x2 - 0.5);
    Ok(fh + fu + s.grad_v.transpose() * u)
}

/// Mean field F = F_H + F_u + u·∇V of a generic ITP under the Gaussian KDF.
pub fn itp_mean_field_gaussian(scenario: &FieldScenario, state: &ITPState, t: f64, p0: P0) -> Result<Vec3> {
    let (s, kf) = local(scenario, &state.r, t, p0)?;
    itp_force(scenario, &s, &kf, &state.u)
}

/// Non-Gaussian correction F_a = (1/ρ)[∇·Π − ∇p1] + (u/2p1)[∇·Q − ∇ln p̂1·Q].
pub fn f_a_extended(moments: &ExtendedMoments, kf: &KineticFields, rho: f64, u: &Vec3) -> Vec3 {
    let first = (moments.div_pi - kf.grad_p1) / rho;
    let second = moments.div_q - (kf.grad_p1_hat / kf.p1_hat).dot(&moments.q_flux);
    first + u * (second / (2.0 * kf.p1))
}

/// Gauge field for a general KDF: ΔF̄(u_th) scaled by f(u_th)/f(u).
pub fn gauge_field_general(gauge_at_uth: &Vec3, kdf_ratio: f64) -> Result<Vec3> {
    if !(kdf_ratio > 0.0 && kdf_ratio.is_finite()) {
        return Err(LabError::InvalidSample(format!("KDF ratio {kdf_ratio} must be positive and finite")));
    }
    Ok(gauge_at_uth * kdf_ratio)
}

/// Build a TTP from position and relative velocity, checking n·b = 0.
pub fn init_ttp(r0: &Vec3, u0: &Vec3, t0: f64, p0: P0, scenario: &FieldScenario, tol_orth: f64) -> Result<TTPState> {
    let (_, kf) = local(scenario, r0, t0, p0)?;
    let speed = u0.norm();
    if speed == 0.0 {
        let n = match kf.b {
            Some(b) => unit_normal_to(&b),
            None => Vec3::x(),
        };
        return Ok(TTPState { r: *r0, n, beta: 0.0, t: t0, speed: 0.0, degenerate: true });
    }
    let b = kf.b.ok_or(LabError::DegenerateGradient { r: point(r0) })?;
    let n = u0 / speed;
    let defect = n.dot(&b).abs();
    if defect > tol_orth {
        return Err(LabError::InvalidInitialCondition { defect });
    }
    let n = (n - b * n.dot(&b)).normalize();
    Ok(TTPState { r: *r0, n, beta: speed / kf.v_th, t: t0, speed, degenerate: false })
}

/// A unit vector orthogonal to `b`, from the axis where `b` is smallest.
pub fn unit_normal_to(b: &Vec3) -> Vec3 {
    frame(b).0
}

/// Orthonormal {e1, e2} completing the right-handed frame {e1, e2, b}.
pub fn frame(b: &Vec3) -> (Vec3, Vec3) {
    let a = b.iamin();
    let mut axis = Vec3::zeros();
    axis[a] = 1.0;
    let e1 = (axis - b * b[a]).normalize();
    let e2 = b.cross(&e1);
    (e1, e2)
}

#[derive(Clone, Copy, Debug)]
struct Deriv {
    dr: Vec3,
    dn: Vec3,
    ds: f64,
    frozen: bool,
}

fn rhs(scenario: &FieldScenario, track: &P0Track, t: f64, r: &Vec3, n: &Vec3, speed: f64) -> Result<Deriv> {
    let (s, kf) = local(scenario, r, t, track.at(t))?;
    let u = speed * n;
    let (dn, frozen) = match kf.b {
        Some(_) => (omega_at(&s, &kf, &u)?.cross(n), false),
        None => (Vec3::zeros(), true),
    };
    Ok(Deriv { dr: s.vel + u, dn, ds: speed * 0.5 * kf.dln_p1hat_dt, frozen })
}

/// Result of one TTP step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub state: TTPState,
    /// |n·b|/|n| after the RK4 update, before projection.
    pub tangency_defect: f64,
    /// b was undefined somewhere in the step.
    pub degenerate: bool,
}

/// One RK4 step of (r, n, s), followed by renormalization of n and its
/// projection onto the plane normal to b.
pub fn step_ttp(state: &TTPState, scenario: &FieldScenario, track: &P0Track, dt: f64) -> Result<StepReport> {
    if !(dt > 0.0) {
        return Err(LabError::Config(format!("dt={dt} must be positive")));
    }
    let (t, r, n, s) = (state.t, state.r, state.n, state.speed);
    let k1 = rhs(scenario, track, t, &r, &n, s)?;
    let h = 0.5 * dt;
    let k2 = rhs(scenario, track, t + h, &(r + h * k1.dr), &(n + h * k1.dn), s + h * k1.ds)?;
    let k3 = rhs(scenario, track, t + h, &(r + h * k2.dr), &(n + h * k2.dn), s + h * k2.ds)?;
    let k4 = rhs(scenario, track, t + dt, &(r + dt * k3.dr), &(n + dt * k3.dn), s + dt * k3.ds)?;
    let w = dt / 6.0;
    let r1 = r + w * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr);
    let n1 = n + w * (k1.dn + 2.0 * k2.dn + 2.0 * k3.dn + k4.dn);
    let s1 = s + w * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds);
    let t1 = t + dt;

    let (_, kf) = local(scenario, &r1, t1, track.at(t1))?;
    let mut degenerate = k1.frozen || k2.frozen || k3.frozen || k4.frozen;
    let (n_out, defect) = match kf.b {
        Some(b) => {
            let defect = n1.dot(&b).abs() / n1.norm();
            ((n1 - b * n1.dot(&b)).normalize(), defect)
        }
        None => {
            degenerate = true;
            (n1.normalize(), 0.0)
        }
    };
    Ok(StepReport {
        state: TTPState {
            r: r1,
            n: n_out,
            beta: state.beta,
            t: t1,
            speed: s1,
            degenerate: state.degenerate || degenerate,
        },
        tangency_defect: defect,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub r: Vec3,
    pub n: Vec3,
    /// s / v_th at the row's event.
    pub beta: f64,
    pub tangency_defect: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    Completed,
    LeftDomain { t: f64 },
    Failed { t: f64, error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub status: TrajectoryStatus,
    /// max |β(t) − β(t0)| / β(t0) over the rows (0 for β = 0).
    pub max_beta_drift: f64,
    /// Σ of pre-projection tangency defects.
    pub tangency_drift: f64,
    pub max_tangency_defect: f64,
    /// max |n·b| after projection.
    pub max_post_defect: f64,
    /// max ||n| − 1| after each step.
    pub max_norm_defect: f64,
    pub degenerate_steps: usize,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r_x,r_y,r_z,n_x,n_y,n_z,beta,tangency_defect,u_norm\n");
        for w in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                w.t, w.r.x, w.r.y, w.r.z, w.n.x, w.n.y, w.n.z, w.beta, w.tangency_defect, w.speed
            ));
        }
        out
    }

    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has at least the initial row")
    }
}

/// Integrate a TTP from its current time to `t1` with `ceil((t1 - t0)/dt)`
/// equal steps. Leaving the domain or a numerical error ends the trajectory
/// with a status instead of an error. `record_every` thins the stored rows;
/// diagnostics always use every step.
pub fn integrate_ttp(
    state0: &TTPState,
    scenario: &FieldScenario,
    track: &P0Track,
    t1: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t1 >= state0.t) {
        return Err(LabError::Config(format!("need dt > 0 and t1 >= t0 (dt={dt}, t1={t1})")));
    }
    let steps = ((t1 - state0.t) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t1 - state0.t) / steps as f64 } else { dt };
    let every = record_every.max(1);
    let (_, kf0) = local(scenario, &state0.r, state0.t, track.at(state0.t))?;
    let beta0 = state0.speed / kf0.v_th;
    let row = |st: &TTPState, v_th: f64, defect: f64| TrajectoryRow {
        t: st.t,
        r: st.r,
        n: st.n,
        beta: st.speed / v_th,
        tangency_defect: defect,
        speed: st.speed,
    };
    let mut traj = Trajectory {
        rows: vec![row(state0, kf0.v_th, 0.0)],
        status: TrajectoryStatus::Completed,
        max_beta_drift: 0.0,
        tangency_drift: 0.0,
        max_tangency_defect: 0.0,
        max_post_defect: 0.0,
        max_norm_defect: 0.0,
        degenerate_steps: 0,
    };
    let mut st = *state0;
    for i in 0..steps {
        let step = match step_ttp(&st, scenario, track, h) {
            Ok(rep) => rep,
            Err(LabError::Domain { t, .. }) => {
                traj.status = TrajectoryStatus::LeftDomain { t };
                break;
            }
            Err(e) => {
                traj.status = TrajectoryStatus::Failed { t: st.t, error: e.to_string() };
                break;
            }
        };
        st = step.state;
        if i + 1 == steps {
            // Land exactly on t1.
            st.t = t1;
        }
        let (_, kf) = match local(scenario, &st.r, st.t, track.at(st.t)) {
            Ok(v) => v,
            Err(e) => {
                traj.status = TrajectoryStatus::Failed { t: st.t, error: e.to_string() };
                break;
            }
        };
        let beta = st.speed / kf.v_th;
        if beta0 > 0.0 {
            traj.max_beta_drift = traj.max_beta_drift.max((beta - beta0).abs() / beta0);
        }
        traj.tangency_drift += step.tangency_defect;
        traj.max_tangency_defect = traj.max_tangency_defect.max(step.tangency_defect);
        if let Some(b) = kf.b {
            traj.max_post_defect = traj.max_post_defect.max(st.n.dot(&b).abs());
        }
        traj.max_norm_defect = traj.max_norm_defect.max((st.n.norm() - 1.0).abs());
        if step.degenerate {
            traj.degenerate_steps += 1;
        }
        if (i + 1) % every == 0 || i + 1 == steps {
            traj.rows.push(row(&st, kf.v_th, step.tangency_defect));
        }
    }
    Ok(traj)
}

/// Integrate a batch of TTPs in parallel; output order follows input order.
pub fn integrate_batch(
    states: &[TTPState],
    scenario: &FieldScenario,
    track: &P0Track,
    t1: f64,
    dt: f64,
    record_every: usize,
) -> Vec<Result<Trajectory>> {
    states.par_iter().map(|s| integrate_ttp(s, scenario, track, t1, dt, record_every)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiouvilleReport {
    /// 1 / det of the finite-difference flow-map Jacobian.
    pub numeric: f64,
    /// exp(−∫ ∂v·F dt) along the reference trajectory.
    pub analytic: f64,
    pub condition: f64,
}

/// ITP phase state (r, v) with v = V + u, plus the running ∫∂v·F dt.
type Phase = [f64; 7];

fn itp_rhs(scenario: &FieldScenario, track: &P0Track, t: f64, y: &Phase) -> Result<Phase> {
    let r = Vec3::new(y[0], y[1], y[2]);
    let v = Vec3::new(y[3], y[4], y[5]);
    let (s, kf) = local(scenario, &r, t, track.at(t))?;
    let u = v - s.vel;
    let f = itp_force(scenario, &s, &kf, &u)?;
    // ∂u·F = (3/2p1)A + ∇·V + u·∇ln p̂1.
    let div = 1.5 * kf.a / kf.p1 + s.div_v + u.dot(&kf.grad_p1_hat) / kf.p1_hat;
    Ok([v.x, v.y, v.z, f.x, f.y, f.z, div])
}

fn itp_flow(scenario: &FieldScenario, track: &P0Track, t0: f64, y0: Phase, t1: f64, dt: f64) -> Result<Phase> {
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    let add = |y: &Phase, k: &Phase, c: f64| -> Phase { std::array::from_fn(|i| y[i] + c * k[i]) };
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let k1 = itp_rhs(scenario, track, t, &y)?;
        let k2 = itp_rhs(scenario, track, t + 0.5 * h, &add(&y, &k1, 0.5 * h))?;
        let k3 = itp_rhs(scenario, track, t + 0.5 * h, &add(&y, &k2, 0.5 * h))?;
        let k4 = itp_rhs(scenario, track, t + h, &add(&y, &k3, h))?;
        y = std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    Ok(y)
}

/// Compare the phase-space volume change of the Gaussian mean-field flow
/// with the Liouville exponent. The Jacobian is built from central
/// differences of trajectories started at perturbed (r, v).
pub fn liouville_jacobian_check(
    scenario: &FieldScenario,
    itp0: &ITPState,
    track: &P0Track,
    t1: f64,
    dt: f64,
) -> Result<LiouvilleReport> {
    if !(dt > 0.0) || !(t1 > itp0.t) {
        return Err(LabError::Config(format!("need dt > 0 and t1 > t0 (dt={dt}, t1={t1})")));
    }
    let s0 = eval_sample(scenario, &itp0.r, itp0.t, &[])?;
    let v0 = s0.vel + itp0.u;
    let y0: Phase = [itp0.r.x, itp0.r.y, itp0.r.z, v0.x, v0.y, v0.z, 0.0];
    let reference = itp_flow(scenario, track, itp0.t, y0, t1, dt)?;
    let scale: Vec<f64> = (0..6).map(|i| if i < 3 { 1.0 } else { v0.norm().max(1.0) }).collect();
    let columns: Vec<Result<[f64; 6]>> = (0..6)
        .into_par_iter()
        .map(|j| {
            let h = 1e-5 * scale[j];
            let mut yp = y0;
            let mut ym = y0;
            yp[j] += h;
            ym[j] -= h;
            let fp = itp_flow(scenario, track, itp0.t, yp, t1, dt)?;
            let fm = itp_flow(scenario, track, itp0.t, ym, t1, dt)?;
            Ok(std::array::from_fn(|i| (fp[i] - fm[i]) / (2.0 * h)))
        })
        .collect();
    let mut jac = nalgebra::SMatrix::<f64, 6, 6>::zeros();
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for i in 0..6 {
            jac[(i, j)] = col[i];
        }
    }
    let sv = jac.singular_values();
    let condition = sv.max() / sv.min();
    let det = jac.determinant();
    if !det.is_finite() || det <= 0.0 || !(condition < 1e10) {
        return Err(LabError::NumericalCheck(format!("flow-map Jacobian ill-conditioned (det={det:e}, cond={condition:e})")));
    }
    Ok(LiouvilleReport { numeric: 1.0 / det, analytic: (-reference[6]).exp(), condition })
}

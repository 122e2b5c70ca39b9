//! Kinetic pressure, the Gaussian-KDF entropy and the pseudo-pressure p0(t).

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{self, check_event, eval_unchecked, FieldScenario, FluidSample};
use crate::jet::{Jet, T};
use crate::quadrature::QuadratureGrid;
use crate::{Mat3, Vec3};

/// Relative threshold on |∇p̂1| below which b is undefined.
pub const EPS_GRAD: f64 = 1e-12;

/// Pseudo-pressure value and its time derivative at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct P0 {
    pub p0: f64,
    pub rate: f64,
}

impl P0 {
    pub fn steady(p0: f64) -> Self {
        P0 { p0, rate: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KineticFields {
    pub p1: f64,
    pub p1_hat: f64,
    pub v_th: f64,
    pub grad_p1: Vec3,
    pub grad_p1_hat: Vec3,
    /// Unit normal of the p̂1 level set; `None` where |∇p̂1| is below threshold.
    pub b: Option<Vec3>,
    pub a: f64,
    pub dln_p1hat_dt: f64,
    pub dt_p1_hat: f64,
    pub hess_p1_hat: Mat3,
    pub dt_grad_p1_hat: Vec3,
}

fn p1_jet(sample: &FluidSample, p0: P0, m_ref: f64) -> Jet {
    let mut j = sample.pressure_part_jet(m_ref) + p0.p0;
    j.g[T] += p0.rate;
    j
}

/// Derived kinetic quantities at one event.
pub fn kinetic_fields(sample: &FluidSample, p0: P0, scenario: &FieldScenario) -> Result<KineticFields> {
    if !(sample.rho > 0.0) {
        return Err(LabError::InvalidSample(format!("rho={} at {:?}", sample.rho, sample.r)));
    }
    let m_ref = scenario.physics.m_ref;
    let p1j = p1_jet(sample, p0, m_ref);
    let p1 = p1j.v;
    if !(p1 > 0.0) {
        return Err(LabError::Positivity { p1, r: [sample.r.x, sample.r.y, sample.r.z] });
    }
    let rho = sample.rho_jet();
    let hat = p1j / rho;
    let grad = Vec3::new(hat.g[0], hat.g[1], hat.g[2]);
    let threshold = EPS_GRAD * hat.v / scenario.domain.extent();
    let norm = grad.norm();
    let b = (norm >= threshold && norm > 0.0).then(|| grad / norm);

    // A = ρ D/Dt((p0 + p - φ)/ρ) + n K.
    let mut mech = sample.p_jet() - sample.phi_jet() + p0.p0;
    mech.g[T] += p0.rate;
    let w = mech / rho;
    let dw = w.g[T] + sample.vel.dot(&Vec3::new(w.g[0], w.g[1], w.g[2]));
    let k = fields::heat_source(sample, scenario)?;
    let a = sample.rho * dw + sample.number_density(m_ref) * k;

    Ok(KineticFields {
        p1,
        p1_hat: hat.v,
        v_th: (2.0 * hat.v).sqrt(),
        grad_p1: Vec3::new(p1j.g[0], p1j.g[1], p1j.g[2]),
        grad_p1_hat: grad,
        b,
        a,
        dln_p1hat_dt: a / p1,
        dt_p1_hat: hat.g[T],
        hess_p1_hat: Mat3::from_fn(|i, k| hat.h[i][k]),
        dt_grad_p1_hat: Vec3::new(hat.h[T][0], hat.h[T][1], hat.h[T][2]),
    })
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Per-mass constant (3/2)(1 + ln 2π) of the Gaussian entropy.
pub const ENTROPY_CONST: f64 = 1.5 * (1.0 + LN_2PI);

/// Entropy density ρ[(3/2)ln p1 - (5/2)ln ρ + (3/2)(1 + ln 2π)].
pub fn entropy_density(rho: f64, p1: f64) -> f64 {
    rho * (1.5 * p1.ln() - 2.5 * rho.ln() + ENTROPY_CONST)
}

#[derive(Clone, Copy, Debug)]
struct NodeData {
    w: f64,
    rho: f64,
    part: f64,
}

fn node_data(scenario: &FieldScenario, t: f64, grid: &QuadratureGrid) -> Result<Vec<NodeData>> {
    let m_ref = scenario.physics.m_ref;
    grid.nodes
        .iter()
        .map(|(r, w)| {
            check_event(scenario, r, t)?;
            let s = eval_unchecked(scenario, r, t);
            Ok(NodeData { w: *w, rho: s.rho, part: s.p - s.phi + s.rho * s.temp / m_ref })
        })
        .collect()
}

fn positivity(p1: f64) -> Result<()> {
    if p1 > 0.0 {
        Ok(())
    } else {
        Err(LabError::Positivity { p1, r: [f64::NAN; 3] })
    }
}

fn entropy_from_nodes(nodes: &[NodeData], p0: f64) -> Result<(f64, f64)> {
    let mut s = 0.0;
    let mut slope = 0.0;
    for n in nodes {
        let p1 = p0 + n.part;
        positivity(p1)?;
        s += n.w * entropy_density(n.rho, p1);
        slope += n.w * 1.5 * n.rho / p1;
    }
    Ok((s, slope))
}

/// S(f_M) by quadrature over the grid.
pub fn gaussian_entropy(scenario: &FieldScenario, p0: f64, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    entropy_from_nodes(&node_data(scenario, t, grid)?, p0).map(|v| v.0)
}

/// ∂S/∂p0 = (3/2)∫ρ/p1.
pub fn entropy_slope(scenario: &FieldScenario, p0: f64, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    entropy_from_nodes(&node_data(scenario, t, grid)?, p0).map(|v| v.1)
}

/// Lower bound of admissible p0: max over the grid of (φ - p - nT).
pub fn p0_infimum(scenario: &FieldScenario, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    let nodes = node_data(scenario, t, grid)?;
    Ok(nodes.iter().map(|n| -n.part).fold(f64::NEG_INFINITY, f64::max))
}

/// p0 with S(f_M(t0)) = 0. Safeguarded Newton inside the bracket
/// [p0_inf + δ, p0_inf + 1e6·scale].
pub fn solve_initial_p0(scenario: &FieldScenario, t0: f64, grid: &QuadratureGrid) -> Result<f64> {
    let nodes = node_data(scenario, t0, grid)?;
    let p_inf = nodes.iter().map(|n| -n.part).fold(f64::NEG_INFINITY, f64::max);
    let scale = nodes.iter().map(|n| n.part.abs()).fold(1.0, f64::max);
    let mut lo = p_inf + 1e-9 * scale;
    let mut hi = p_inf + 1e6 * scale;
    let s_lo = entropy_from_nodes(&nodes, lo)?.0;
    let s_hi = entropy_from_nodes(&nodes, hi)?.0;
    if !(s_lo < 0.0 && s_hi > 0.0) {
        return Err(LabError::Solver(format!(
            "no sign change on [{lo:e}, {hi:e}]: S = {s_lo:e}, {s_hi:e}"
        )));
    }
    // Work in x = ln(p0 - p_inf), where S is close to linear.
    let to_p = |x: f64| p_inf + x.exp();
    let (mut xlo, mut xhi) = ((lo - p_inf).ln(), (hi - p_inf).ln());
    let mut x = 0.5 * (xlo + xhi);
    let mag: f64 = nodes.iter().map(|n| n.w * n.rho).sum::<f64>().abs().max(1.0);
    for _ in 0..200 {
        let p = to_p(x);
        let (s, slope) = entropy_from_nodes(&nodes, p)?;
        if s.abs() <= 1e-14 * mag {
            return Ok(p);
        }
        if s < 0.0 {
            xlo = x;
            lo = p;
        } else {
            xhi = x;
            hi = p;
        }
        let dsdx = slope * (p - p_inf);
        let step = x - s / dsdx;
        x = if step > xlo && step < xhi { step } else { 0.5 * (xlo + xhi) };
        if xhi - xlo < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    let p = to_p(x);
    let s = entropy_from_nodes(&nodes, p)?.0;
    // Once the bracket has collapsed, S is resolved down to the rounding of its own sum.
    let (_, slope) = entropy_from_nodes(&nodes, p)?;
    let floor: f64 = (nodes.iter().map(|n| (n.w * entropy_density(n.rho, p + n.part)).abs()).sum::<f64>()
        + 4.0 * slope * p.abs())
        * 64.0
        * f64::EPSILON;
    if s.abs() < 1e-10_f64.max(floor) {
        Ok(p)
    } else {
        Err(LabError::Solver(format!("did not converge: S={s:e} in [{lo:e}, {hi:e}]")))
    }
}

/// Thermodynamic entropy production rate dS_T/dt. Isothermal scenarios
/// return 0.
pub fn entropy_production(scenario: &FieldScenario, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    if scenario.is_isothermal() {
        return Ok(0.0);
    }
    let ph = scenario.physics;
    let [v] = grid.integrate(|r| {
        check_event(scenario, r, t)?;
        let s = eval_unchecked(scenario, r, t);
        if !(s.temp > 0.0) {
            return Err(LabError::InvalidState(format!("T={} at {:?}", s.temp, r)));
        }
        let n = s.number_density(ph.m_ref);
        let tt = s.temp;
        Ok([n * fields::heating_rate(&s, &ph) / tt
            + ph.k_cond * s.grad_temp.norm_squared() / (tt * tt)
            + ph.mu * fields::strain_square(&s) / (2.0 * tt)
            + ph.lambda * s.div_v * s.div_v / tt])
    })?;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateTerms {
    /// dp0/dt
    pub rate: f64,
    /// S(f_M) at the current p0
    pub s_fm: f64,
    pub ds_t_dt: f64,
    /// ∂S/∂t at fixed p0
    pub ds_dt_fixed: f64,
    /// (3/2)∫ρ/p1
    pub slope: f64,
}

/// dp0/dt chosen so that dS(f_M)/dt = dS_T/dt.
pub fn p0_rate(scenario: &FieldScenario, t: f64, p0: f64, grid: &QuadratureGrid) -> Result<RateTerms> {
    let m_ref = scenario.physics.m_ref;
    let [s_fm, slope, ds_fixed] = grid.integrate(|r| {
        check_event(scenario, r, t)?;
        let s = eval_unchecked(scenario, r, t);
        let part = s.p - s.phi + s.rho * s.temp / m_ref;
        let dt_part = s.dt_p - s.dt_phi + (s.dt_rho * s.temp + s.rho * s.dt_temp) / m_ref;
        let p1 = p0 + part;
        if !(p1 > 0.0) {
            return Err(LabError::Positivity { p1, r: [r.x, r.y, r.z] });
        }
        let dens = entropy_density(s.rho, p1);
        let dfix = s.dt_rho * (dens / s.rho - 2.5) + 1.5 * s.rho * dt_part / p1;
        Ok([dens, 1.5 * s.rho / p1, dfix])
    })?;
    let ds_t_dt = entropy_production(scenario, t, grid)?;
    Ok(RateTerms { rate: (ds_t_dt - ds_fixed) / slope, s_fm, ds_t_dt, ds_dt_fixed: ds_fixed, slope })
}

/// Lagrangian form of -∂S/∂t|p0: -(3/2)∫(ρ/p1)(∂t + V·∇)P - (5/2)∫ρ∇·V.
/// Equals -`ds_dt_fixed` when no mass crosses the boundary.
pub fn lagrangian_entropy_source(
    scenario: &FieldScenario,
    t: f64,
    p0: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let m_ref = scenario.physics.m_ref;
    let [v] = grid.integrate(|r| {
        check_event(scenario, r, t)?;
        let s = eval_unchecked(scenario, r, t);
        let pj = s.pressure_part_jet(m_ref);
        let p1 = p0 + pj.v;
        let dp = pj.g[T] + s.vel.dot(&Vec3::new(pj.g[0], pj.g[1], pj.g[2]));
        Ok([-1.5 * s.rho / p1 * dp - 2.5 * s.rho * s.div_v])
    })?;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub p0: f64,
    pub dp0_dt: f64,
    pub s_fm: f64,
    pub ds_t_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudoPressureState {
    pub t: f64,
    pub p0: f64,
    pub dp0_dt: f64,
    pub s_fm: f64,
    pub ds_t_dt: f64,
    /// ∫ dS_T/dt dt since the start of the ledger.
    pub s_t_produced: f64,
    pub history: Vec<LedgerRow>,
}

impl PseudoPressureState {
    /// Solve S(f_M(t0)) = 0 and open the ledger.
    pub fn initialize(scenario: &FieldScenario, t0: f64, grid: &QuadratureGrid) -> Result<Self> {
        let p0 = solve_initial_p0(scenario, t0, grid)?;
        PseudoPressureState::at(scenario, t0, p0, grid)
    }

    /// Open a ledger at a given p0.
    pub fn at(scenario: &FieldScenario, t0: f64, p0: f64, grid: &QuadratureGrid) -> Result<Self> {
        let rt = p0_rate(scenario, t0, p0, grid)?;
        Ok(PseudoPressureState {
            t: t0,
            p0,
            dp0_dt: rt.rate,
            s_fm: rt.s_fm,
            ds_t_dt: rt.ds_t_dt,
            s_t_produced: 0.0,
            history: vec![LedgerRow { t: t0, p0, dp0_dt: rt.rate, s_fm: rt.s_fm, ds_t_dt: rt.ds_t_dt }],
        })
    }

    pub fn current(&self) -> P0 {
        P0 { p0: self.p0, rate: self.dp0_dt }
    }

    /// Ledger as CSV with columns t,p0,S_fM,dS_T_dt.
    pub fn ledger_csv(&self) -> String {
        let mut out = String::from("t,p0,S_fM,dS_T_dt\n");
        for row in &self.history {
            out.push_str(&format!("{},{},{},{}\n", row.t, row.p0, row.s_fm, row.ds_t_dt));
        }
        out
    }
}

/// One classical RK4 step of the p0 ODE. Loss of positivity in any stage
/// rejects the step; the caller may retry with a smaller dt.
pub fn advance_p0(
    state: &PseudoPressureState,
    scenario: &FieldScenario,
    dt: f64,
    grid: &QuadratureGrid,
) -> Result<PseudoPressureState> {
    let (row, produced) = rk4_row(state, scenario, dt, grid)?;
    let mut next = state.clone();
    next.push(row, produced);
    Ok(next)
}

impl PseudoPressureState {
    fn push(&mut self, row: LedgerRow, produced: f64) {
        self.t = row.t;
        self.p0 = row.p0;
        self.dp0_dt = row.dp0_dt;
        self.s_fm = row.s_fm;
        self.ds_t_dt = row.ds_t_dt;
        self.s_t_produced += produced;
        self.history.push(row);
    }

    fn rewind(&mut self, len: usize, produced: f64) {
        self.history.truncate(len);
        let row = self.history[len - 1];
        self.t = row.t;
        self.p0 = row.p0;
        self.dp0_dt = row.dp0_dt;
        self.s_fm = row.s_fm;
        self.ds_t_dt = row.ds_t_dt;
        self.s_t_produced = produced;
    }
}

fn rk4_row(
    state: &PseudoPressureState,
    scenario: &FieldScenario,
    dt: f64,
    grid: &QuadratureGrid,
) -> Result<(LedgerRow, f64)> {
    if !(dt > 0.0) {
        return Err(LabError::Config(format!("dt={dt} must be positive")));
    }
    let reject = |t: f64| {
        move |e: LabError| match e {
            LabError::Positivity { .. } => LabError::StepRejected { t, reason: e.to_string() },
            other => other,
        }
    };
    let (t, p) = (state.t, state.p0);
    let k1 = p0_rate(scenario, t, p, grid).map_err(reject(t))?;
    let k2 = p0_rate(scenario, t + 0.5 * dt, p + 0.5 * dt * k1.rate, grid).map_err(reject(t))?;
    let k3 = p0_rate(scenario, t + 0.5 * dt, p + 0.5 * dt * k2.rate, grid).map_err(reject(t))?;
    let k4 = p0_rate(scenario, t + dt, p + dt * k3.rate, grid).map_err(reject(t))?;
    let p_new = p + dt / 6.0 * (k1.rate + 2.0 * k2.rate + 2.0 * k3.rate + k4.rate);
    let produced = dt / 6.0 * (k1.ds_t_dt + 2.0 * k2.ds_t_dt + 2.0 * k3.ds_t_dt + k4.ds_t_dt);
    let t_new = t + dt;
    let end = p0_rate(scenario, t_new, p_new, grid).map_err(reject(t))?;
    Ok((LedgerRow { t: t_new, p0: p_new, dp0_dt: end.rate, s_fm: end.s_fm, ds_t_dt: end.ds_t_dt }, produced))
}

/// p0 over one step, by cubic Hermite interpolation of the step endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P0Segment {
    pub t0: f64,
    pub t1: f64,
    pub a: P0,
    pub b: P0,
}

impl P0Segment {
    pub fn steady(p0: f64) -> Self {
        P0Segment { t0: f64::NEG_INFINITY, t1: f64::INFINITY, a: P0::steady(p0), b: P0::steady(p0) }
    }

    pub fn between(a: &PseudoPressureState, b: &PseudoPressureState) -> Self {
        P0Segment { t0: a.t, t1: b.t, a: a.current(), b: b.current() }
    }

    pub fn at(&self, t: f64) -> P0 {
        if !self.t0.is_finite() || self.a == self.b && self.a.rate == 0.0 {
            return self.a;
        }
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let (p0, p1, m0, m1) = (self.a.p0, self.b.p0, self.a.rate * h, self.b.rate * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1;
        let deriv = ((6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        P0 { p0: value, rate: deriv }
    }
}

/// Advance p0 from `state` to `t1` in steps of at most `dt`, halving the
/// step on rejection down to `dt / 1024`.
pub fn integrate_p0(
    state: PseudoPressureState,
    scenario: &FieldScenario,
    t1: f64,
    dt: f64,
    grid: &QuadratureGrid,
) -> Result<PseudoPressureState> {
    if !(dt > 0.0) {
        return Err(LabError::Config(format!("dt={dt} must be positive")));
    }
    let n = ((t1 - state.t) / dt - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return Ok(state);
    }
    let h = (t1 - state.t) / n as f64;
    let t0 = state.t;
    let mut cur = state;
    for i in 0..n {
        let target = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * h };
        cur = advance_to(cur, scenario, target, grid)?;
    }
    Ok(cur)
}

fn advance_to(
    mut state: PseudoPressureState,
    scenario: &FieldScenario,
    target: f64,
    grid: &QuadratureGrid,
) -> Result<PseudoPressureState> {
    let (t_start, len, produced) = (state.t, state.history.len(), state.s_t_produced);
    let full = target - t_start;
    let mut pieces = 1usize;
    loop {
        let mut failed = None;
        for k in 0..pieces {
            let end = if k + 1 == pieces { target } else { t_start + (k + 1) as f64 * full / pieces as f64 };
            match rk4_row(&state, scenario, end - state.t, grid) {
                Ok((row, p)) => state.push(row, p),
                Err(e @ LabError::StepRejected { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => return Ok(state),
            Some(e) if pieces >= 1024 => return Err(e),
            Some(_) => {
                state.rewind(len, produced);
                pieces *= 2;
            }
        }
    }
}

/// Piecewise-cubic p0(t) through ledger rows, for evaluating fields at
/// integrator stage times.
#[derive(Clone, Debug, PartialEq)]
pub struct P0Track {
    rows: Vec<(f64, P0)>,
}

impl P0Track {
    pub fn steady(p0: f64) -> Self {
        P0Track { rows: vec![(f64::NEG_INFINITY, P0::steady(p0))] }
    }

    /// Track through `(t, p0)` rows sorted by time.
    pub fn from_rows(rows: Vec<(f64, P0)>) -> Result<Self> {
        if rows.is_empty() || rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(LabError::Config("p0 track needs rows with increasing times".into()));
        }
        Ok(P0Track { rows })
    }

    pub fn from_state(state: &PseudoPressureState) -> Self {
        let rows = state.history.iter().map(|r| (r.t, P0 { p0: r.p0, rate: r.dp0_dt })).collect();
        P0Track { rows }
    }

    /// Start and end times covered; unbounded for a steady track.
    pub fn span(&self) -> (f64, f64) {
        if self.rows.len() == 1 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    /// p0 and dp0/dt at `t`. Times outside the span clamp to the end rows.
    pub fn at(&self, t: f64) -> P0 {
        let rows = &self.rows;
        if rows.len() == 1 || t <= rows[0].0 {
            return rows[0].1;
        }
        let last = rows.len() - 1;
        if t >= rows[last].0 {
            return rows[last].1;
        }
        let i = rows.partition_point(|r| r.0 <= t) - 1;
        let seg = P0Segment { t0: rows[i].0, t1: rows[i + 1].0, a: rows[i].1, b: rows[i + 1].1 };
        seg.at(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::eval_sample;
    use std::f64::consts::PI;

    #[test]
    fn entropy_constant_matches_ln_2pi() {
        assert!((LN_2PI - (2.0 * PI).ln()).abs() < 1e-15);
        assert!((ENTROPY_CONST - 1.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-15);
    }

    #[test]
    fn kinetic_fields_direct_substitution() {
        let mut sc = FieldScenario::builtin("uniform").unwrap();
        sc.set_param("p", 0.2).unwrap();
        sc.set_param("temp", 0.3).unwrap();
        let s = eval_sample(&sc, &Vec3::new(0.5, 0.5, 0.5), 0.0, &[]).unwrap();
        let kf = kinetic_fields(&s, P0::steady(1.0), &sc).unwrap();
        assert!((kf.p1 - 1.5).abs() < 1e-15);
        assert!((kf.p1_hat - 1.5).abs() < 1e-15);
        assert!((kf.v_th - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(kf.a, 0.0);
        assert_eq!(kf.dln_p1hat_dt, 0.0);
        assert!(kf.b.is_none());
        assert!(matches!(kinetic_fields(&s, P0::steady(-0.6), &sc), Err(LabError::Positivity { .. })));
    }

    #[test]
    fn rigid_rotation_kinetic_point() {
        let sc = FieldScenario::builtin("rigid-rotation").unwrap();
        let s = eval_sample(&sc, &Vec3::new(1.0, 0.0, 0.0), 0.0, &[]).unwrap();
        let kf = kinetic_fields(&s, P0::steady(1.0), &sc).unwrap();
        assert!((kf.p1 - 3.0).abs() < 1e-15);
        assert!((kf.b.unwrap() - Vec3::x()).norm() < 1e-15);
        assert!((kf.v_th * kf.v_th - 2.0 * kf.p1_hat).abs() < 1e-15);
    }

    #[test]
    fn hermite_segment_reproduces_cubic() {
        let f = |t: f64| 1.0 + 0.5 * t - 0.25 * t * t + 0.125 * t * t * t;
        let df = |t: f64| 0.5 - 0.5 * t + 0.375 * t * t;
        let seg = P0Segment {
            t0: 1.0,
            t1: 1.5,
            a: P0 { p0: f(1.0), rate: df(1.0) },
            b: P0 { p0: f(1.5), rate: df(1.5) },
        };
        let mid = seg.at(1.2);
        assert!((mid.p0 - f(1.2)).abs() < 1e-14);
        assert!((mid.rate - df(1.2)).abs() < 1e-13);
    }
}

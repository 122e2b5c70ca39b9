//! Stochastic fields over hidden parameters α: per-α TTP runs, the
//! mean/fluctuation split, Kramers-Moyal coefficients, ordering ratios and
//! the entropy inequality for the α-averaged conditional KDF.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::f1m_density;
use crate::error::{LabError, Result};
use crate::fields::{check_event, eval_sample, eval_unchecked, FieldScenario};
use crate::kinetics::{self, kinetic_fields, P0Track, PseudoPressureState, P0};
use crate::quadrature::{gauss_hermite_normal, gauss_legendre, QuadratureGrid};
use crate::rng::{self, LabRng};
use crate::ttp::{self, TTPState, Trajectory};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaKind {
    /// All mass at the centers.
    Delta,
    /// Uniform on [center − width, center + width].
    Uniform,
    /// Normal with mean `center` and standard deviation `width`.
    Gaussian,
}

/// Distribution g(α) of the hidden parameters, one (center, width) per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticModel {
    pub kind: AlphaKind,
    pub params: Vec<[f64; 2]>,
}

impl StochasticModel {
    pub fn delta(alpha0: &[f64]) -> Self {
        StochasticModel { kind: AlphaKind::Delta, params: alpha0.iter().map(|&c| [c, 0.0]).collect() }
    }

    pub fn uniform(params: &[[f64; 2]]) -> Self {
        StochasticModel { kind: AlphaKind::Uniform, params: params.to_vec() }
    }

    pub fn gaussian(params: &[[f64; 2]]) -> Self {
        StochasticModel { kind: AlphaKind::Gaussian, params: params.to_vec() }
    }

    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(LabError::Config("stochastic model needs at least one component".into()));
        }
        for &[c, w] in &self.params {
            let bad = !c.is_finite() || !w.is_finite() || (self.kind != AlphaKind::Delta && !(w > 0.0));
            if bad {
                return Err(LabError::Config(format!("invalid component (center {c}, width {w})")));
            }
        }
        Ok(())
    }

    /// Density g(α). The delta kind has no density: +∞ at the centers, 0 elsewhere.
    pub fn pdf(&self, alpha: &[f64]) -> f64 {
        if alpha.len() != self.k() {
            return 0.0;
        }
        let mut g = 1.0;
        for (&a, &[c, w]) in alpha.iter().zip(&self.params) {
            g *= match self.kind {
                AlphaKind::Delta => {
                    if a == c {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                }
                AlphaKind::Uniform => {
                    if (a - c).abs() <= w {
                        0.5 / w
                    } else {
                        0.0
                    }
                }
                AlphaKind::Gaussian => (-(a - c).powi(2) / (2.0 * w * w)).exp() / (w * (2.0 * PI).sqrt()),
            };
        }
        g
    }

    pub fn sample_alpha(&self, rng: &mut LabRng) -> Vec<f64> {
        self.params
            .iter()
            .map(|&[c, w]| match self.kind {
                AlphaKind::Delta => c,
                AlphaKind::Uniform => c + w * rng.random_range(-1.0..=1.0),
                AlphaKind::Gaussian => c + w * rng.sample::<f64, _>(StandardNormal),
            })
            .collect()
    }

    /// α draws with weights. Monte-Carlo takes `m` samples of weight 1/m;
    /// quadrature takes `m` nodes per component (tensor product, k ≤ 3).
    pub fn draws(&self, mode: Averaging, m: usize, seed: u64) -> Result<AlphaDraws> {
        self.validate()?;
        if m == 0 {
            return Err(LabError::Config("need at least one α draw".into()));
        }
        match mode {
            Averaging::MonteCarlo => {
                let base = rng::derive_seed(seed, ALPHA_PURPOSE);
                let alphas: Vec<Vec<f64>> =
                    (0..m as u64).map(|i| self.sample_alpha(&mut rng::stream(base, i))).collect();
                Ok(AlphaDraws { mode, alphas, weights: vec![1.0 / m as f64; m] })
            }
            Averaging::Quadrature => {
                if self.k() > 3 {
                    return Err(LabError::Config(format!("quadrature averaging supports k ≤ 3, got {}", self.k())));
                }
                let rule: Vec<(Vec<f64>, Vec<f64>)> = self
                    .params
                    .iter()
                    .map(|&[c, w]| match self.kind {
                        AlphaKind::Delta => (vec![c], vec![1.0]),
                        AlphaKind::Uniform => {
                            let (x, wt) = gauss_legendre(m);
                            (x.iter().map(|xi| c + w * xi).collect(), wt.iter().map(|v| 0.5 * v).collect())
                        }
                        AlphaKind::Gaussian => {
                            let (x, wt) = gauss_hermite_normal(m);
                            (x.iter().map(|xi| c + w * xi).collect(), wt)
                        }
                    })
                    .collect();
                let mut alphas = vec![Vec::new()];
                let mut weights = vec![1.0];
                for (x, wt) in &rule {
                    let mut na = Vec::with_capacity(alphas.len() * x.len());
                    let mut nw = Vec::with_capacity(alphas.len() * x.len());
                    for (a, w0) in alphas.iter().zip(&weights) {
                        for (xi, wi) in x.iter().zip(wt) {
                            let mut v = a.clone();
                            v.push(*xi);
                            na.push(v);
                            nw.push(w0 * wi);
                        }
                    }
                    alphas = na;
                    weights = nw;
                }
                Ok(AlphaDraws { mode, alphas, weights })
            }
        }
    }
}

const ALPHA_PURPOSE: u64 = 0x414c_5048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    MonteCarlo,
    Quadrature,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaDraws {
    pub mode: Averaging,
    pub alphas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl AlphaDraws {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    pub mean: f64,
    pub fluctuations: Vec<f64>,
    /// Standard error of the mean; Monte-Carlo mode only.
    pub stderr: Option<f64>,
}

/// Split per-α values into ⟨·⟩_α and the fluctuations about it.
pub fn decompose(values: &[f64], draws: &AlphaDraws) -> Result<Decomposition> {
    if values.len() != draws.len() {
        return Err(LabError::Config(format!("{} values for {} α draws", values.len(), draws.len())));
    }
    let need = if draws.mode == Averaging::MonteCarlo { 2 } else { 1 };
    if values.len() < need {
        return Err(LabError::InsufficientSamples { need, have: values.len() });
    }
    // Shifting by the first value keeps a constant field's fluctuations exactly zero.
    let pivot = values[0];
    let wsum: f64 = draws.weights.iter().sum();
    let shift = values.iter().zip(&draws.weights).map(|(v, w)| w * (v - pivot)).sum::<f64>() / wsum;
    let mean = pivot + shift;
    let fluctuations: Vec<f64> = values.iter().map(|v| (v - pivot) - shift).collect();
    let stderr = (draws.mode == Averaging::MonteCarlo).then(|| {
        let m = values.len() as f64;
        (fluctuations.iter().map(|d| d * d).sum::<f64>() / (m - 1.0) / m).sqrt()
    });
    Ok(Decomposition { mean, fluctuations, stderr })
}

/// Where and how each member's TTP starts: `direction` is projected onto the
/// plane normal to that member's b.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtpSpec {
    pub r0: Vec3,
    pub beta: f64,
    pub direction: Vec3,
}

/// How each run obtains p0(t0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum P0Policy {
    /// Root of S(f_M(t0)) = 0.
    #[default]
    Entropy,
    Fixed { p0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberRun {
    pub ledger: PseudoPressureState,
    pub trajectory: Trajectory,
    pub initial: TTPState,
}

/// Turn a [`TtpSpec`] into a TTP at (r0, t0) for the given scenario and p0.
pub fn spawn_from_spec(scenario: &FieldScenario, spec: &TtpSpec, t0: f64, p0: P0) -> Result<TTPState> {
    let s = eval_sample(scenario, &spec.r0, t0, &[])?;
    let kf = kinetic_fields(&s, p0, scenario)?;
    if spec.beta == 0.0 {
        return ttp::init_ttp(&spec.r0, &Vec3::zeros(), t0, p0, scenario, ttp::TOL_ORTH);
    }
    let b = kf.b.ok_or(LabError::DegenerateGradient { r: [spec.r0.x, spec.r0.y, spec.r0.z] })?;
    let d = spec.direction - b * spec.direction.dot(&b);
    if !(d.norm() > 1e-12 * spec.direction.norm()) {
        return Err(LabError::InvalidInitialCondition { defect: 1.0 });
    }
    let n = d.normalize();
    ttp::init_ttp(&spec.r0, &(spec.beta * kf.v_th * n), t0, p0, scenario, ttp::TOL_ORTH)
}

/// Deterministic pipeline: p0(t0), the p0 ledger to t1 and one TTP trajectory.
#[allow(clippy::too_many_arguments)]
pub fn run_deterministic(
    scenario: &FieldScenario,
    spec: &TtpSpec,
    policy: P0Policy,
    t0: f64,
    t1: f64,
    dt: f64,
    grid: &QuadratureGrid,
    record_every: usize,
) -> Result<MemberRun> {
    let start = match policy {
        P0Policy::Entropy => PseudoPressureState::initialize(scenario, t0, grid)?,
        P0Policy::Fixed { p0 } => PseudoPressureState::at(scenario, t0, p0, grid)?,
    };
    let ledger = kinetics::integrate_p0(start, scenario, t1, dt, grid)?;
    let track = P0Track::from_state(&ledger);
    let initial = spawn_from_spec(scenario, spec, t0, track.at(t0))?;
    let trajectory = ttp::integrate_ttp(&initial, scenario, &track, t1, dt, record_every)?;
    Ok(MemberRun { ledger, trajectory, initial })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Member {
    pub alpha: Vec<f64>,
    pub weight: f64,
    pub run: std::result::Result<MemberRun, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bundle {
    pub mode: Averaging,
    pub members: Vec<Member>,
    pub success_fraction: f64,
}

/// One deterministic run per α draw, each on the realized scenario.
#[allow(clippy::too_many_arguments)]
pub fn langevin_run(
    scenario: &FieldScenario,
    spec: &TtpSpec,
    draws: &AlphaDraws,
    policy: P0Policy,
    t0: f64,
    t1: f64,
    dt: f64,
    grid: &QuadratureGrid,
    record_every: usize,
) -> Result<Bundle> {
    let members: Vec<Member> = draws
        .alphas
        .par_iter()
        .zip(draws.weights.par_iter())
        .map(|(alpha, &weight)| {
            let run = scenario
                .realize(alpha)
                .and_then(|sc| run_deterministic(&sc, spec, policy, t0, t1, dt, grid, record_every))
                .map_err(|e| e.to_string());
            Member { alpha: alpha.clone(), weight, run }
        })
        .collect();
    let ok = members.iter().filter(|m| m.run.is_ok()).count();
    Ok(Bundle { mode: draws.mode, success_fraction: ok as f64 / members.len() as f64, members })
}

/// Field and force values of one α member at a shared event.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSnapshot {
    pub alpha: Vec<f64>,
    pub p0: f64,
    pub rho: f64,
    pub p1: f64,
    pub v_th: f64,
    pub vel: Vec3,
    pub u_th: Vec3,
    pub force: Vec3,
}

/// Snapshot of the realized fields at (r, t) for a TTP with the given β,
/// direction projected onto that member's tangent plane.
pub fn snapshot_at(
    scenario: &FieldScenario,
    alpha: &[f64],
    p0: P0,
    r: &Vec3,
    t: f64,
    beta: f64,
    direction: &Vec3,
) -> Result<FieldSnapshot> {
    let sc = scenario.realize(alpha)?;
    let s = eval_sample(&sc, r, t, &[])?;
    let kf = kinetic_fields(&s, p0, &sc)?;
    let b = kf.b.ok_or(LabError::DegenerateGradient { r: [r.x, r.y, r.z] })?;
    let n = (direction - b * direction.dot(&b)).normalize();
    let state = TTPState { r: *r, n, beta, t, speed: beta * kf.v_th, degenerate: false };
    let force = ttp::stochastic_mean_field(&sc, &state, t, p0)?;
    Ok(FieldSnapshot {
        alpha: alpha.to_vec(),
        p0: p0.p0,
        rho: s.rho,
        p1: kf.p1,
        v_th: kf.v_th,
        vel: s.vel,
        u_th: beta * kf.v_th * n,
        force,
    })
}

/// Snapshots of every bundle member at (r, t), each with its own p0(t).
pub fn bundle_snapshots(
    bundle: &Bundle,
    scenario: &FieldScenario,
    r: &Vec3,
    t: f64,
    beta: f64,
    direction: &Vec3,
) -> Result<Vec<FieldSnapshot>> {
    bundle
        .members
        .par_iter()
        .map(|m| {
            let run = m.run.as_ref().map_err(|e| LabError::InvalidState(format!("member α={:?} failed: {e}", m.alpha)))?;
            let track = P0Track::from_state(&run.ledger);
            let (lo, hi) = track.span();
            if t < lo || t > hi {
                return Err(LabError::Config(format!("snapshot time {t} outside the run [{lo}, {hi}]")));
            }
            snapshot_at(scenario, &m.alpha, track.at(t), r, t, beta, direction)
        })
        .collect()
}

/// Index layout of the coefficient arrays, recorded in every table.
pub const KM_LAYOUT: &str = "values[a][c]: a = component of dF; c = sum_l a_l * 3^(k-l) over the k-fold \
tensor power of du_th (first factor slowest); row-major [3, 3^k]";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KMEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl KMEntry {
    /// Total power of fluctuations in the average, δF included.
    pub fn total_order(&self) -> usize {
        1 + self.i + self.j + self.k
    }

    pub fn get(&self, a: usize, c: usize) -> f64 {
        self.values[a * self.shape[1] + c]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KMTable {
    pub n_max: usize,
    pub mode: Averaging,
    pub layout: &'static str,
    /// Keyed by "i,j,k".
    pub entries: BTreeMap<String, KMEntry>,
}

impl KMTable {
    pub fn entry(&self, i: usize, j: usize, k: usize) -> Option<&KMEntry> {
        self.entries.get(&format!("{i},{j},{k}"))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn fluct(values: impl Iterator<Item = f64>, draws: &AlphaDraws) -> Result<Vec<f64>> {
    let v: Vec<f64> = values.collect();
    Ok(decompose(&v, draws)?.fluctuations)
}

/// C_{ijk} = (1/n!) ⟨δF (δρ)^i (δp1)^j ⊗(δu_th)^k⟩_α for 2 ≤ n = i+j+k ≤ n_max.
pub fn kramers_moyal(snaps: &[FieldSnapshot], draws: &AlphaDraws, n_max: usize) -> Result<KMTable> {
    let m = snaps.len();
    if m != draws.len() {
        return Err(LabError::Config(format!("{m} snapshots for {} α draws", draws.len())));
    }
    if draws.mode == Averaging::MonteCarlo && m < n_max + 2 {
        return Err(LabError::InsufficientSamples { need: n_max + 2, have: m });
    }
    let d_rho = fluct(snaps.iter().map(|s| s.rho), draws)?;
    let d_p1 = fluct(snaps.iter().map(|s| s.p1), draws)?;
    let mut d_u = vec![Vec3::zeros(); m];
    let mut d_f = vec![Vec3::zeros(); m];
    for a in 0..3 {
        for (x, v) in d_u.iter_mut().zip(fluct(snaps.iter().map(|s| s.u_th[a]), draws)?) {
            x[a] = v;
        }
        for (x, v) in d_f.iter_mut().zip(fluct(snaps.iter().map(|s| s.force[a]), draws)?) {
            x[a] = v;
        }
    }
    let mut entries = BTreeMap::new();
    for n in 2..=n_max {
        let nf = factorial(n);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                let cols = 3usize.pow(k as u32);
                let mut values = vec![0.0; 3 * cols];
                let mut stderr = (draws.mode == Averaging::MonteCarlo).then(|| vec![0.0; 3 * cols]);
                let mut terms = vec![0.0; m];
                for a in 0..3 {
                    for c in 0..cols {
                        for (mm, term) in terms.iter_mut().enumerate() {
                            let mut x = d_f[mm][a] * d_rho[mm].powi(i as i32) * d_p1[mm].powi(j as i32) / nf;
                            let mut rest = c;
                            for l in (0..k).rev() {
                                let digit = rest / 3usize.pow(l as u32);
                                rest %= 3usize.pow(l as u32);
                                x *= d_u[mm][digit];
                            }
                            *term = x;
                        }
                        let mean: f64 = terms.iter().zip(&draws.weights).map(|(x, w)| w * x).sum();
                        values[a * cols + c] = mean;
                        if let Some(se) = stderr.as_mut() {
                            let var = terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
                            se[a * cols + c] = (var / m as f64).sqrt();
                        }
                    }
                }
                entries.insert(format!("{i},{j},{k}"), KMEntry { i, j, k, shape: [3, cols], values, stderr });
            }
        }
    }
    Ok(KMTable { n_max, mode: draws.mode, layout: KM_LAYOUT, entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ratio {
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Fluctuation-to-mean ratios at one event. Each is rms(δX)/|⟨X⟩|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderingReport {
    pub zeta_v: Ratio,
    pub zeta_p: Ratio,
    pub zeta_rho: Ratio,
    /// f₁M evaluated at the mean thermal speed ⟨|u_th|⟩.
    pub zeta_f: Ratio,
}

fn rms_ratio(fl: &[f64], mean: f64, draws: &AlphaDraws) -> Ratio {
    let sq: Vec<f64> = fl.iter().map(|d| d * d).collect();
    let ms: f64 = sq.iter().zip(&draws.weights).map(|(s, w)| w * s).sum();
    let rms = ms.sqrt();
    let scale = mean.abs();
    let value = if rms == 0.0 { 0.0 } else { rms / scale };
    let stderr = (draws.mode == Averaging::MonteCarlo).then(|| {
        let m = sq.len() as f64;
        let var = sq.iter().map(|s| (s - ms).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        let se_ms = (var / m).sqrt();
        if rms == 0.0 {
            0.0
        } else {
            se_ms / (2.0 * rms * scale)
        }
    });
    Ratio { value, stderr }
}

pub fn ordering_report(snaps: &[FieldSnapshot], draws: &AlphaDraws) -> Result<OrderingReport> {
    let scalar = |f: &dyn Fn(&FieldSnapshot) -> f64| -> Result<Ratio> {
        let v: Vec<f64> = snaps.iter().map(f).collect();
        let d = decompose(&v, draws)?;
        Ok(rms_ratio(&d.fluctuations, d.mean, draws))
    };
    let zeta_p = scalar(&|s| s.p1)?;
    let zeta_rho = scalar(&|s| s.rho)?;
    // Velocity: rms |δV| over |⟨V⟩|.
    let mut sq = vec![0.0; snaps.len()];
    let mut mean_v = Vec3::zeros();
    for a in 0..3 {
        let v: Vec<f64> = snaps.iter().map(|s| s.vel[a]).collect();
        let d = decompose(&v, draws)?;
        mean_v[a] = d.mean;
        for (q, f) in sq.iter_mut().zip(&d.fluctuations) {
            *q += f * f;
        }
    }
    let fl: Vec<f64> = sq.iter().map(|q| q.sqrt()).collect();
    let zeta_v = rms_ratio(&fl, mean_v.norm(), draws);
    let u_ref: f64 = snaps.iter().zip(&draws.weights).map(|(s, w)| w * s.u_th.norm()).sum();
    let zeta_f = scalar(&|s| f1m_density(s.rho, s.v_th, u_ref))?;
    Ok(OrderingReport { zeta_v, zeta_p, zeta_rho, zeta_f })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyInequality {
    /// S(⟨f₁⟩_α) by quadrature.
    pub s_of_mean: f64,
    /// ⟨S(f₁)⟩_α by the same quadrature.
    pub mean_of_s: f64,
    /// ⟨S(f₁)⟩_α in closed form, S(f_M) − ln2 ∫ρ per member.
    pub mean_of_s_closed: f64,
    pub holds: bool,
}

/// Gauss-Legendre panels used for the speed integral.
const U_PANELS: usize = 8;
const U_ORDER: usize = 16;

fn log_f1m(rho: f64, v_th: f64, u: f64) -> f64 {
    (2.0 * rho / (PI.powf(1.5) * v_th.powi(3))).ln() - u * u / (v_th * v_th)
}

/// S(⟨f₁⟩) and ⟨S(f₁)⟩ over realized scenarios with per-member p0. All
/// members must share the tangent plane at every node.
pub fn mixture_entropy(
    members: &[FieldScenario],
    weights: &[f64],
    p0s: &[f64],
    t: f64,
    grid: &QuadratureGrid,
) -> Result<(f64, f64)> {
    if members.is_empty() || members.len() != weights.len() || members.len() != p0s.len() {
        return Err(LabError::Config("members, weights and p0 values must have equal nonzero length".into()));
    }
    let (x, w) = gauss_legendre(U_ORDER);
    let [mix, avg] = grid.integrate(|r| {
        let mut rho = Vec::with_capacity(members.len());
        let mut vth = Vec::with_capacity(members.len());
        let mut b0: Option<Vec3> = None;
        for (sc, &p0) in members.iter().zip(p0s) {
            check_event(sc, r, t)?;
            let s = eval_unchecked(sc, r, t);
            let kf = kinetic_fields(&s, P0::steady(p0), sc)?;
            if let Some(b) = kf.b {
                match b0 {
                    None => b0 = Some(b),
                    Some(first) if (b - first).norm() > 1e-8 => {
                        return Err(LabError::NumericalCheck(format!(
                            "tangent planes of the members differ at {r:?}; the mixture is not defined on one plane"
                        )))
                    }
                    Some(_) => {}
                }
            }
            rho.push(s.rho);
            vth.push(kf.v_th);
        }
        let umax = 9.0 * vth.iter().cloned().fold(0.0, f64::max);
        let width = umax / U_PANELS as f64;
        let mut mix = 0.0;
        let mut avg = 0.0;
        let mut logs = vec![0.0; members.len()];
        for p in 0..U_PANELS {
            let mid = (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                let u = mid + 0.5 * width * xi;
                let wq = 0.5 * width * wi * 2.0 * PI * u * u;
                let mut top = f64::NEG_INFINITY;
                for (m, l) in logs.iter_mut().enumerate() {
                    *l = weights[m].ln() + log_f1m(rho[m], vth[m], u);
                    top = top.max(*l);
                }
                let ln_bar = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
                mix -= wq * ln_bar.exp() * ln_bar;
                for m in 0..members.len() {
                    let lf = log_f1m(rho[m], vth[m], u);
                    avg -= weights[m] * wq * lf.exp() * lf;
                }
            }
        }
        Ok([mix, avg])
    })?;
    Ok((mix, avg))
}

/// Entropy inequality S(⟨f₁⟩_α) ≥ ⟨S(f₁)⟩_α at time t, each member with the
/// p0 that zeroes its own Gaussian entropy at t.
pub fn entropy_inequality_check(
    scenario: &FieldScenario,
    draws: &AlphaDraws,
    t: f64,
    grid: &QuadratureGrid,
    tol: f64,
) -> Result<EntropyInequality> {
    let members: Vec<FieldScenario> = draws.alphas.iter().map(|a| scenario.realize(a)).collect::<Result<_>>()?;
    let p0s: Vec<f64> = members.par_iter().map(|sc| kinetics::solve_initial_p0(sc, t, grid)).collect::<Result<_>>()?;
    let (s_of_mean, mean_of_s) = mixture_entropy(&members, &draws.weights, &p0s, t, grid)?;
    let mut closed = 0.0;
    for ((sc, &p0), &w) in members.iter().zip(&p0s).zip(&draws.weights) {
        let s = kinetics::gaussian_entropy(sc, p0, t, grid)?;
        let [mass] = grid.integrate(|r| {
            check_event(sc, r, t)?;
            Ok([eval_unchecked(sc, r, t).rho])
        })?;
        closed += w * (s - std::f64::consts::LN_2 * mass);
    }
    Ok(EntropyInequality { s_of_mean, mean_of_s, mean_of_s_closed: closed, holds: s_of_mean >= mean_of_s - tol })
}

/// S(⟨f₁⟩_α) along a bundle, using each member's p0 ledger.
pub fn averaged_entropy_series(
    bundle: &Bundle,
    scenario: &FieldScenario,
    times: &[f64],
    grid: &QuadratureGrid,
) -> Result<Vec<(f64, f64)>> {
    let mut members = Vec::new();
    let mut tracks = Vec::new();
    let mut weights = Vec::new();
    for m in &bundle.members {
        let run = m.run.as_ref().map_err(|e| LabError::InvalidState(format!("member α={:?} failed: {e}", m.alpha)))?;
        members.push(scenario.realize(&m.alpha)?);
        tracks.push(P0Track::from_state(&run.ledger));
        weights.push(m.weight);
    }
    times
        .iter()
        .map(|&t| {
            let p0s: Vec<f64> = tracks.iter().map(|tr| tr.at(t).p0).collect();
            mixture_entropy(&members, &weights, &p0s, t, grid).map(|(s, _)| (t, s))
        })
        .collect()
}

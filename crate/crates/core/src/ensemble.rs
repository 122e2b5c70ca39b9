//! Monte-Carlo TTP ensembles drawn from the Gaussian conditional KDF f₁M,
//! the correspondence moments and the velocity-variance check.
//!
//! At a point, f₁M = 2ρ/(π^{3/2} v_th³) exp(−u²/v_th²) on the tangent plane
//! with measure u² du dφ. Its mass is ρ, so f₁M/ρ is a probability density:
//! β = u/v_th has density (4/√π) β² e^{−β²} and φ is uniform.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::error::{LabError, Result};
use crate::fields::{eval_sample, Aabb, FieldScenario};
use crate::kinetics::{kinetic_fields, P0Track, PseudoPressureState, P0};
use crate::quadrature::gauss_legendre;
use crate::rng::{self, LabRng};
use crate::ttp::{self, TTPState};
use crate::Vec3;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// CDF of the β density (4/√π) β² e^{−β²}.
pub fn beta_cdf(beta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    if beta < 1.0 {
        // Series of (4/√π) ∫ x² e^{−x²}; the closed form cancels badly here.
        let b2 = beta * beta;
        let mut term = beta * b2;
        let mut sum = 0.0;
        for k in 0..40 {
            let add = term / (2 * k + 3) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -b2 / (k + 1) as f64;
        }
        return 2.0 * FRAC_2_SQRT_PI * sum;
    }
    erf(beta) - FRAC_2_SQRT_PI * beta * (-beta * beta).exp()
}

pub fn beta_pdf(beta: f64) -> f64 {
    if beta <= 0.0 {
        0.0
    } else {
        2.0 * FRAC_2_SQRT_PI * beta * beta * (-beta * beta).exp()
    }
}

/// Inverse-CDF sampler for β: a tabulated CDF gives the starting bracket,
/// Newton steps on the closed form finish the inversion.
#[derive(Clone, Debug)]
pub struct BetaSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

const BETA_MAX: f64 = 7.0;

impl Default for BetaSampler {
    fn default() -> Self {
        BetaSampler::new(2048)
    }
}

impl BetaSampler {
    pub fn new(points: usize) -> Self {
        let points = points.max(16);
        let grid: Vec<f64> = (0..=points).map(|i| BETA_MAX * i as f64 / points as f64).collect();
        let cdf = grid.iter().map(|&b| beta_cdf(b)).collect();
        BetaSampler { grid, cdf }
    }

    /// β with CDF(β) = q.
    pub fn quantile(&self, q: f64) -> f64 {
        if !(q > 0.0) {
            return 0.0;
        }
        let last = self.cdf.len() - 1;
        let i = self.cdf.partition_point(|&c| c <= q).clamp(1, last);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (b0, b1) = (self.grid[i - 1], self.grid[i]);
        let mut b = if c1 > c0 { b0 + (b1 - b0) * (q - c0) / (c1 - c0) } else { b1 };
        if q < 1e-6 {
            // Leading behaviour CDF ≈ (4/(3√π)) β³.
            b = (q * 3.0 / (2.0 * FRAC_2_SQRT_PI)).cbrt();
        }
        for _ in 0..8 {
            let f = beta_pdf(b);
            if f <= 0.0 {
                break;
            }
            let step = (beta_cdf(b) - q) / f;
            let next = (b - step).clamp(0.5 * b, 2.0 * b.max(1e-300));
            let done = (next - b).abs() <= 1e-15 * b;
            b = next;
            if done {
                break;
            }
        }
        b
    }

    pub fn sample(&self, rng: &mut LabRng) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

fn shared_sampler() -> &'static BetaSampler {
    static SAMPLER: OnceLock<BetaSampler> = OnceLock::new();
    SAMPLER.get_or_init(BetaSampler::default)
}

/// f₁M(u) on the tangent plane.
pub fn f1m_density(rho: f64, v_th: f64, u: f64) -> f64 {
    2.0 * rho / (PI.powf(1.5) * v_th.powi(3)) * (-(u * u) / (v_th * v_th)).exp()
}

/// ∫ f₁M u² du dφ by Gauss-Legendre in u on [0, 9 v_th] (8 panels of order 16);
/// the φ integral of an isotropic density is exactly 2π.
pub fn f1m_mass(rho: f64, v_th: f64) -> f64 {
    f1m_moment(rho, v_th, |_| 1.0)
}

/// ∫ (u²/3) f₁M dη, which equals p1 = ρ v_th²/2.
pub fn f1m_pressure(rho: f64, v_th: f64) -> f64 {
    f1m_moment(rho, v_th, |u| u * u / 3.0)
}

fn f1m_moment(rho: f64, v_th: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(16);
    let panels = 8;
    let width = 9.0 * v_th / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            let u = mid + 0.5 * width * xi;
            acc += 0.5 * width * wi * u * u * g(u) * f1m_density(rho, v_th, u);
        }
    }
    2.0 * PI * acc
}

/// Draw one TTP from f₁M at (r, t).
pub fn sample_ttp(scenario: &FieldScenario, r: &Vec3, t: f64, p0: P0, rng: &mut LabRng) -> Result<TTPState> {
    let s = eval_sample(scenario, r, t, &[])?;
    let kf = kinetic_fields(&s, p0, scenario)?;
    let b = kf.b.ok_or_else(|| LabError::Sampling(format!("b undefined at {r:?}; no tangent plane to sample")))?;
    let beta = shared_sampler().sample(rng);
    let phi = rng.random_range(0.0..2.0 * PI);
    let (e1, e2) = ttp::frame(&b);
    let n = phi.cos() * e1 + phi.sin() * e2;
    Ok(TTPState { r: *r, n, beta, t, speed: beta * kf.v_th, degenerate: false })
}

/// `count` samples at one point, particle `i` on stream (seed, i).
pub fn sample_at_point(
    scenario: &FieldScenario,
    r: &Vec3,
    t: f64,
    p0: P0,
    count: usize,
    seed: u64,
) -> Result<Vec<TTPState>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_ttp(scenario, r, t, p0, &mut rng::stream(seed, i)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentStderr {
    pub rho: f64,
    pub v: Vec3,
    pub p1: f64,
}

/// Weighted moments of a sample set, with the field values averaged over
/// the same positions as reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub rho_hat: f64,
    pub v_hat: Vec3,
    pub p1_hat: f64,
    pub stderr: MomentStderr,
    pub n_samples: usize,
    pub rho_ref: f64,
    pub v_ref: Vec3,
    pub p1_ref: f64,
}

/// Minimum sample count accepted by [`estimate_moments`].
pub const MIN_SAMPLES: usize = 30;

#[derive(Clone, Copy)]
struct Row {
    rho: f64,
    v: Vec3,
    p1: f64,
    vel: Vec3,
    p1_field: f64,
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0).max(1.0);
    (mean, (var / nf).sqrt())
}

/// Estimate ρ, V and p1 from the samples inside `cell`:
/// ρ̂ = ⟨ρ⟩, V̂ = ⟨V + u⟩, p̂1 = ⟨ρ u²/3⟩, each with its standard error.
pub fn estimate_moments(
    samples: &[TTPState],
    scenario: &FieldScenario,
    track: &P0Track,
    cell: &Aabb,
) -> Result<MomentEstimate> {
    let inside: Vec<&TTPState> = samples.iter().filter(|s| cell.contains(&s.r)).collect();
    if inside.len() < MIN_SAMPLES {
        return Err(LabError::InsufficientSamples { need: MIN_SAMPLES, have: inside.len() });
    }
    let rows: Vec<Row> = inside
        .par_iter()
        .map(|st| {
            let s = eval_sample(scenario, &st.r, st.t, &[])?;
            let kf = kinetic_fields(&s, track.at(st.t), scenario)?;
            let u = st.u();
            Ok(Row { rho: s.rho, v: s.vel + u, p1: s.rho * u.norm_squared() / 3.0, vel: s.vel, p1_field: kf.p1 })
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let (rho_hat, rho_se) = mean_stderr(rows.iter().map(|r| r.rho), n);
    let (p1_hat, p1_se) = mean_stderr(rows.iter().map(|r| r.p1), n);
    let mut v_hat = Vec3::zeros();
    let mut v_se = Vec3::zeros();
    let mut v_ref = Vec3::zeros();
    for k in 0..3 {
        let (m, se) = mean_stderr(rows.iter().map(|r| r.v[k]), n);
        v_hat[k] = m;
        v_se[k] = se;
        v_ref[k] = rows.iter().map(|r| r.vel[k]).sum::<f64>() / n as f64;
    }
    Ok(MomentEstimate {
        rho_hat,
        v_hat,
        p1_hat,
        stderr: MomentStderr { rho: rho_se, v: v_se, p1: p1_se },
        n_samples: n,
        rho_ref: rho_hat,
        v_ref,
        p1_ref: rows.iter().map(|r| r.p1_field).sum::<f64>() / n as f64,
    })
}

impl MomentEstimate {
    /// Largest deviation from the reference in units of standard error.
    /// A zero stderr with an exact match counts as 0.
    pub fn max_z(&self) -> f64 {
        let z = |d: f64, se: f64| {
            if d == 0.0 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                d.abs() / se
            }
        };
        let mut worst = z(self.rho_hat - self.rho_ref, self.stderr.rho).max(z(self.p1_hat - self.p1_ref, self.stderr.p1));
        for k in 0..3 {
            worst = worst.max(z(self.v_hat[k] - self.v_ref[k], self.stderr.v[k]));
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub spawn_region: Aabb,
    pub t0: f64,
    /// Number of spawn points drawn uniformly in the region; particle i starts
    /// at point i mod `spawn_points`.
    #[serde(default = "one")]
    pub spawn_points: usize,
}

fn one() -> usize {
    1
}

const SPAWN_PURPOSE: u64 = 0x5350_4157;
const PARTICLE_PURPOSE: u64 = 0x5041_5254;
const HRE_PURPOSE: u64 = 0x4852_4556;

impl EnsembleConfig {
    pub fn validate(&self, scenario: &FieldScenario) -> Result<()> {
        if self.n_particles == 0 || self.spawn_points == 0 {
            return Err(LabError::Config("n_particles and spawn_points must be at least 1".into()));
        }
        if !scenario.domain.contains_box(&self.spawn_region) {
            return Err(LabError::Config(format!("spawn region {:?} not inside the domain", self.spawn_region)));
        }
        Ok(())
    }

    pub fn spawn_locations(&self) -> Vec<Vec3> {
        let mut g = rng::stream(rng::derive_seed(self.seed, SPAWN_PURPOSE), 0);
        let (lo, hi) = (self.spawn_region.min, self.spawn_region.max);
        (0..self.spawn_points)
            .map(|_| Vec3::from_fn(|k, _| if hi[k] > lo[k] { g.random_range(lo[k]..hi[k]) } else { lo[k] }))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    /// Moments per spawn point; `None` where too few particles survive.
    pub moments: Vec<Option<MomentEstimate>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FailureCounts {
    pub left_domain: usize,
    pub numerical: usize,
    pub spawn: usize,
}

impl FailureCounts {
    pub fn total(&self) -> usize {
        self.left_domain + self.numerical + self.spawn
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRun {
    pub spawn_points: Vec<Vec3>,
    pub final_states: Vec<Option<TTPState>>,
    pub snapshots: Vec<Snapshot>,
    pub ledger: PseudoPressureState,
    pub failures: FailureCounts,
}

enum Fate {
    Alive,
    Left,
    Failed,
}

/// Spawn the ensemble, then advance p0 and all particles to `t1`, taking
/// moments every `snapshot_every` steps (and at both ends).
pub fn evolve_ensemble(
    config: &EnsembleConfig,
    scenario: &FieldScenario,
    p0_state: &PseudoPressureState,
    grid: &crate::quadrature::QuadratureGrid,
    t1: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<EnsembleRun> {
    config.validate(scenario)?;
    if !(dt > 0.0) || !(t1 >= config.t0) {
        return Err(LabError::Config(format!("need dt > 0 and t1 >= t0 (dt={dt}, t1={t1})")));
    }
    if (p0_state.t - config.t0).abs() > 1e-12 * config.t0.abs().max(1.0) {
        return Err(LabError::Config(format!("p0 state at t={} but ensemble starts at {}", p0_state.t, config.t0)));
    }
    let steps = ((t1 - config.t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let ledger = if steps > 0 {
        crate::kinetics::integrate_p0(p0_state.clone(), scenario, t1, dt, grid)?
    } else {
        p0_state.clone()
    };
    let track = P0Track::from_state(&ledger);
    let h = if steps > 0 { (t1 - config.t0) / steps as f64 } else { dt };
    let every = snapshot_every.max(1);
    let snap_steps: Vec<usize> = (0..=steps).filter(|k| k % every == 0 || *k == steps).collect();

    let points = config.spawn_locations();
    let base = rng::derive_seed(config.seed, PARTICLE_PURPOSE);
    let p0_start = track.at(config.t0);
    let per_particle: Vec<(Vec<Option<TTPState>>, Fate, bool)> = (0..config.n_particles)
        .into_par_iter()
        .map(|i| {
            let origin = points[i % points.len()];
            let mut g = rng::stream(base, i as u64);
            let mut st = match sample_ttp(scenario, &origin, config.t0, p0_start, &mut g) {
                Ok(s) => s,
                Err(_) => return (vec![None; snap_steps.len()], Fate::Failed, true),
            };
            let mut out = Vec::with_capacity(snap_steps.len());
            out.push(Some(st));
            let mut fate = Fate::Alive;
            let mut next = 1;
            for k in 1..=steps {
                match ttp::step_ttp(&st, scenario, &track, h) {
                    Ok(rep) => st = rep.state,
                    Err(LabError::Domain { .. }) => {
                        fate = Fate::Left;
                        break;
                    }
                    Err(_) => {
                        fate = Fate::Failed;
                        break;
                    }
                }
                if k == steps {
                    st.t = t1;
                }
                if next < snap_steps.len() && snap_steps[next] == k {
                    out.push(Some(st));
                    next += 1;
                }
            }
            out.resize(snap_steps.len(), None);
            (out, fate, false)
        })
        .collect();

    let mut failures = FailureCounts::default();
    for (_, fate, spawn) in &per_particle {
        match (fate, spawn) {
            (_, true) => failures.spawn += 1,
            (Fate::Left, _) => failures.left_domain += 1,
            (Fate::Failed, _) => failures.numerical += 1,
            (Fate::Alive, _) => {}
        }
    }
    if 2 * failures.total() > config.n_particles {
        return Err(LabError::NumericalCheck(format!(
            "{} of {} particles failed ({failures:?})",
            failures.total(),
            config.n_particles
        )));
    }

    let mut snapshots = Vec::with_capacity(snap_steps.len());
    for (j, &k) in snap_steps.iter().enumerate() {
        let t = if k == steps { t1 } else { config.t0 + k as f64 * h };
        let mut moments = Vec::with_capacity(points.len());
        for p in 0..points.len() {
            let group: Vec<TTPState> = per_particle
                .iter()
                .enumerate()
                .filter(|(i, _)| i % points.len() == p)
                .filter_map(|(_, v)| v.0[j])
                .collect();
            moments.push(match estimate_moments(&group, scenario, &track, &scenario.domain) {
                Ok(m) => Some(m),
                Err(LabError::InsufficientSamples { .. }) => None,
                Err(e) => return Err(e),
            });
        }
        snapshots.push(Snapshot { t, moments });
    }
    let final_states = per_particle.iter().map(|v| v.0.last().copied().flatten()).collect();
    Ok(EnsembleRun { spawn_points: points, final_states, snapshots, ledger, failures })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HreReport {
    /// Sample mean of ΔV²/3.
    pub lhs: f64,
    /// p̂1 at the event.
    pub rhs: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

const HRE_CHUNK: usize = 8192;

/// Draw ΔV from the Gaussian velocity density (each component N(0, p̂1))
/// and compare ⟨ΔV²/3⟩ with p̂1.
pub fn hre_variance_check(
    scenario: &FieldScenario,
    r: &Vec3,
    t: f64,
    p0: P0,
    n_samples: usize,
    seed: u64,
) -> Result<HreReport> {
    if n_samples < 2 {
        return Err(LabError::InsufficientSamples { need: 2, have: n_samples });
    }
    let s = eval_sample(scenario, r, t, &[])?;
    let kf = kinetic_fields(&s, p0, scenario)?;
    let sigma = kf.p1_hat.sqrt();
    let base = rng::derive_seed(seed, HRE_PURPOSE);
    let chunks = n_samples.div_ceil(HRE_CHUNK);
    // Per-chunk sums of x and (x - p̂1)², reduced in chunk order.
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = rng::stream(base, c as u64);
            let len = HRE_CHUNK.min(n_samples - c * HRE_CHUNK);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..len {
                let dv = Vec3::from_fn(|_, _| sigma * g.sample::<f64, _>(StandardNormal));
                let x = dv.norm_squared() / 3.0;
                sum += x;
                sq += (x - kf.p1_hat) * (x - kf.p1_hat);
            }
            (sum, sq)
        })
        .collect();
    let n = n_samples as f64;
    let (sum, sq) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let lhs = sum / n;
    let var = (sq - n * (lhs - kf.p1_hat).powi(2)) / (n - 1.0);
    Ok(HreReport { lhs, rhs: kf.p1_hat, stderr: (var / n).sqrt(), n_samples })
}

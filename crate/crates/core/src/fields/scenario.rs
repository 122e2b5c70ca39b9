use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::jet::Jet;
use crate::Vec3;

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Aabb { min, max };
        if (0..3).any(|i| !(b.max[i] > b.min[i]) || !b.min[i].is_finite() || !b.max[i].is_finite()) {
            return Err(LabError::Config(format!("degenerate box {min:?}..{max:?}")));
        }
        Ok(b)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).product()
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn extent(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).fold(0.0, f64::max)
    }

    /// Closed-box membership with a rounding allowance.
    pub fn contains(&self, r: &Vec3) -> bool {
        let tol = 1e-12 * self.extent();
        (0..3).all(|i| r[i] >= self.min[i] - tol && r[i] <= self.max[i] + tol)
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }
}

/// Transport and thermodynamic coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub mu: f64,
    pub lambda: f64,
    pub k_cond: f64,
    pub c_p: f64,
    pub alpha_coef: f64,
    pub beta_t: f64,
    pub m_ref: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { mu: 0.01, lambda: 0.0, k_cond: 0.0, c_p: 2.5, alpha_coef: 0.0, beta_t: 0.0, m_ref: 1.0 }
    }
}

/// Closed-form flow families.
#[derive(Clone, Debug, PartialEq)]
pub enum Flow {
    Uniform { vel: [f64; 3], rho: f64, p: f64, temp: f64 },
    /// V = omega z x r with centrifugal pressure balance.
    RigidRotation { omega: f64, rho0: f64, p_c: f64 },
    /// 2D decaying Taylor-Green vortex.
    TaylorGreen { u0: f64, k: f64, rho0: f64, p_ref: f64 },
    /// Plane Couette shear V = (gamma y, 0, 0) heating uniformly by dissipation.
    Couette { gamma: f64, rho0: f64, p_ref: f64, temp0: f64 },
    /// Compressible travelling density wave plus a solenoidal stirring field,
    /// forced by f_body and an external heating term.
    Manufactured {
        rho0: f64,
        eps: f64,
        kvec: [f64; 3],
        freq: f64,
        w0: f64,
        p_ref: f64,
        eps_p: f64,
        temp0: f64,
        heat_rate: f64,
        eps_t: f64,
    },
}

/// Multiplicative perturbation `param *= 1 + amplitude * alpha_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaHook {
    pub param: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldScenario {
    pub id: String,
    pub flow: Flow,
    pub physics: Physics,
    pub domain: Aabb,
    pub t_span: [f64; 2],
    pub alpha_hooks: Vec<AlphaHook>,
    /// Point where the conservative potential is pinned to zero.
    pub reference_point: Vec3,
}

/// JSON shape of a scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub domain: Option<Aabb>,
    #[serde(default)]
    pub t_span: Option<[f64; 2]>,
    #[serde(default)]
    pub alpha_hooks: Vec<AlphaHook>,
}

pub(crate) struct RawFields {
    pub rho: Jet,
    pub vel: [Jet; 3],
    pub p: Jet,
    pub temp: Jet,
    pub phi: Jet,
}

pub const BUILTIN_IDS: [&str; 5] =
    ["uniform", "rigid-rotation", "taylor-green", "couette", "manufactured-compressible"];

impl FieldScenario {
    pub fn builtin(id: &str) -> Result<Self> {
        let unit = Aabb { min: [0.0; 3], max: [1.0; 3] };
        let (flow, physics, domain, t_span) = match id {
            "uniform" => (
                Flow::Uniform { vel: [0.0; 3], rho: 1.0, p: 0.0, temp: 0.0 },
                Physics::default(),
                unit,
                [0.0, 10.0],
            ),
            "rigid-rotation" => (
                Flow::RigidRotation { omega: 2.0, rho0: 1.0, p_c: 0.0 },
                Physics::default(),
                Aabb { min: [-2.0; 3], max: [2.0; 3] },
                [0.0, 100.0],
            ),
            "taylor-green" => (
                Flow::TaylorGreen { u0: 1.0, k: 1.0, rho0: 1.0, p_ref: 1.0 },
                Physics::default(),
                Aabb { min: [0.0; 3], max: [2.0 * PI, 2.0 * PI, 1.0] },
                [0.0, 20.0],
            ),
            "couette" => (
                Flow::Couette { gamma: 1.0, rho0: 1.0, p_ref: 1.0, temp0: 1.0 },
                Physics::default(),
                unit,
                [0.0, 10.0],
            ),
            "manufactured-compressible" => (
                Flow::Manufactured {
                    rho0: 1.0,
                    eps: 0.2,
                    kvec: [1.0, 0.5, 0.25],
                    freq: 0.7,
                    w0: 0.3,
                    p_ref: 1.0,
                    eps_p: 0.1,
                    temp0: 1.0,
                    heat_rate: 0.5,
                    eps_t: 0.05,
                },
                Physics { mu: 0.05, lambda: 0.02, k_cond: 0.01, c_p: 2.5, alpha_coef: 0.01, beta_t: 0.02, m_ref: 1.0 },
                Aabb { min: [-1.0; 3], max: [1.0; 3] },
                [0.0, 1.0],
            ),
            other => return Err(LabError::Config(format!("unknown scenario id '{other}'"))),
        };
        Ok(FieldScenario {
            id: id.to_string(),
            flow,
            physics,
            domain,
            t_span,
            alpha_hooks: Vec::new(),
            reference_point: domain.center(),
        })
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self> {
        let mut s = FieldScenario::builtin(&spec.id)?;
        for (name, value) in &spec.params {
            s.set_param(name, *value)?;
        }
        if let Some(d) = spec.domain {
            s.domain = Aabb::new(d.min, d.max)?;
            s.reference_point = s.domain.center();
        }
        if let Some(ts) = spec.t_span {
            s.t_span = ts;
        }
        for hook in &spec.alpha_hooks {
            s.get_param(&hook.param)?;
        }
        s.alpha_hooks = spec.alpha_hooks.clone();
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| LabError::Config(format!("scenario JSON: {e}")))?;
        FieldScenario::from_spec(&spec)
    }

    pub fn with_domain(mut self, domain: Aabb) -> Self {
        self.domain = domain;
        self.reference_point = domain.center();
        self
    }

    pub fn with_hooks(mut self, hooks: Vec<AlphaHook>) -> Self {
        self.alpha_hooks = hooks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        Aabb::new(self.domain.min, self.domain.max)?;
        if !(self.t_span[1] > self.t_span[0]) {
            return Err(LabError::Config(format!("empty t_span {:?}", self.t_span)));
        }
        let ph = &self.physics;
        if !(ph.mu > 0.0) || ph.lambda < 0.0 || ph.k_cond < 0.0 || !(ph.m_ref > 0.0) {
            return Err(LabError::Config("need mu>0, lambda>=0, k_cond>=0, m_ref>0".into()));
        }
        let rho_ok = match self.flow {
            Flow::Uniform { rho, .. } => rho > 0.0,
            Flow::RigidRotation { rho0, .. }
            | Flow::TaylorGreen { rho0, .. }
            | Flow::Couette { rho0, .. } => rho0 > 0.0,
            Flow::Manufactured { rho0, eps, .. } => rho0 > 0.0 && eps.abs() < 1.0,
        };
        if !rho_ok {
            return Err(LabError::Config("density must stay positive".into()));
        }
        Ok(())
    }

    /// Fields whose temperature is uniform and whose heat source is forced
    /// to vanish; their thermodynamic entropy is constant.
    pub fn is_isothermal(&self) -> bool {
        matches!(self.flow, Flow::Uniform { .. } | Flow::RigidRotation { .. } | Flow::TaylorGreen { .. })
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = match self.flow {
            Flow::Uniform { .. } => vec!["vx", "vy", "vz", "rho", "p", "temp"],
            Flow::RigidRotation { .. } => vec!["omega", "rho0", "p_c"],
            Flow::TaylorGreen { .. } => vec!["u0", "k", "rho0", "p_ref"],
            Flow::Couette { .. } => vec!["gamma", "rho0", "p_ref", "temp0"],
            Flow::Manufactured { .. } => vec![
                "rho0", "eps", "kx", "ky", "kz", "freq", "w0", "p_ref", "eps_p", "temp0", "heat_rate", "eps_t",
            ],
        };
        names.extend(["mu", "lambda", "k_cond", "c_p", "alpha_coef", "beta_t", "m_ref"]);
        names
    }

    fn param_mut(&mut self, name: &str) -> Result<&mut f64> {
        let ph = &mut self.physics;
        let slot = match name {
            "mu" => Some(&mut ph.mu),
            "lambda" => Some(&mut ph.lambda),
            "k_cond" => Some(&mut ph.k_cond),
            "c_p" => Some(&mut ph.c_p),
            "alpha_coef" => Some(&mut ph.alpha_coef),
            "beta_t" => Some(&mut ph.beta_t),
            "m_ref" => Some(&mut ph.m_ref),
            _ => None,
        };
        if let Some(s) = slot {
            return Ok(s);
        }
        let slot = match &mut self.flow {
            Flow::Uniform { vel, rho, p, temp } => match name {
                "vx" => Some(&mut vel[0]),
                "vy" => Some(&mut vel[1]),
                "vz" => Some(&mut vel[2]),
                "rho" => Some(rho),
                "p" => Some(p),
                "temp" => Some(temp),
                _ => None,
            },
            Flow::RigidRotation { omega, rho0, p_c } => match name {
                "omega" => Some(omega),
                "rho0" => Some(rho0),
                "p_c" => Some(p_c),
                _ => None,
            },
            Flow::TaylorGreen { u0, k, rho0, p_ref } => match name {
                "u0" => Some(u0),
                "k" => Some(k),
                "rho0" => Some(rho0),
                "p_ref" => Some(p_ref),
                _ => None,
            },
            Flow::Couette { gamma, rho0, p_ref, temp0 } => match name {
                "gamma" => Some(gamma),
                "rho0" => Some(rho0),
                "p_ref" => Some(p_ref),
                "temp0" => Some(temp0),
                _ => None,
            },
            Flow::Manufactured { rho0, eps, kvec, freq, w0, p_ref, eps_p, temp0, heat_rate, eps_t } => {
                match name {
                    "rho0" => Some(rho0),
                    "eps" => Some(eps),
                    "kx" => Some(&mut kvec[0]),
                    "ky" => Some(&mut kvec[1]),
                    "kz" => Some(&mut kvec[2]),
                    "freq" => Some(freq),
                    "w0" => Some(w0),
                    "p_ref" => Some(p_ref),
                    "eps_p" => Some(eps_p),
                    "temp0" => Some(temp0),
                    "heat_rate" => Some(heat_rate),
                    "eps_t" => Some(eps_t),
                    _ => None,
                }
            }
        };
        slot.ok_or_else(|| LabError::Config(format!("scenario '{}' has no parameter '{name}'", self.id)))
    }

    pub fn get_param(&self, name: &str) -> Result<f64> {
        let mut c = self.clone();
        c.param_mut(name).map(|v| *v)
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(LabError::Config(format!("parameter '{name}' must be finite")));
        }
        *self.param_mut(name)? = value;
        Ok(())
    }

    /// Apply the alpha hooks and return the resulting deterministic scenario.
    /// An empty alpha returns the scenario unchanged.
    pub fn realize(&self, alpha: &[f64]) -> Result<FieldScenario> {
        if alpha.is_empty() {
            return Ok(self.clone());
        }
        if alpha.len() != self.alpha_hooks.len() {
            return Err(LabError::Config(format!(
                "alpha has {} components, scenario declares {} hooks",
                alpha.len(),
                self.alpha_hooks.len()
            )));
        }
        let mut out = self.clone();
        for (hook, a) in self.alpha_hooks.iter().zip(alpha) {
            let slot = out.param_mut(&hook.param)?;
            *slot *= 1.0 + hook.amplitude * a;
        }
        out.alpha_hooks.clear();
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn raw(&self, e: [Jet; 4]) -> RawFields {
        let [x, y, z, t] = e;
        let zero = Jet::cst(0.0);
        match self.flow {
            Flow::Uniform { vel, rho, p, temp } => RawFields {
                rho: Jet::cst(rho),
                vel: vel.map(Jet::cst),
                p: Jet::cst(p),
                temp: Jet::cst(temp),
                phi: zero,
            },
            Flow::RigidRotation { omega, rho0, p_c } => RawFields {
                rho: Jet::cst(rho0),
                vel: [-y * omega, x * omega, zero],
                p: (x.sq() + y.sq()) * (0.5 * rho0 * omega * omega) + p_c,
                temp: zero,
                phi: zero,
            },
            Flow::TaylorGreen { u0, k, rho0, p_ref } => {
                let nu = self.physics.mu / rho0;
                let decay = (t * (-2.0 * nu * k * k)).exp();
                let (kx, ky) = (x * k, y * k);
                let amp = decay * u0;
                RawFields {
                    rho: Jet::cst(rho0),
                    vel: [amp * kx.sin() * ky.cos(), -(amp * kx.cos() * ky.sin()), zero],
                    p: decay.sq() * ((kx * 2.0).cos() + (ky * 2.0).cos()) * (0.25 * rho0 * u0 * u0) + p_ref,
                    temp: zero,
                    phi: zero,
                }
            }
            Flow::Couette { gamma, rho0, p_ref, temp0 } => {
                let ph = &self.physics;
                let n = rho0 / ph.m_ref;
                let rate = ph.mu * gamma * gamma / (n * ph.c_p - ph.alpha_coef * p_ref);
                RawFields {
                    rho: Jet::cst(rho0),
                    vel: [y * gamma, zero, zero],
                    p: Jet::cst(p_ref),
                    temp: t * rate + temp0,
                    phi: zero,
                }
            }
            Flow::Manufactured { rho0, eps, kvec, freq, w0, p_ref, eps_p, temp0, heat_rate, eps_t } => {
                let k2: f64 = kvec.iter().map(|c| c * c).sum();
                let psi = x * kvec[0] + y * kvec[1] + z * kvec[2] - t * freq;
                let s = psi.sin();
                let rho = s * (rho0 * eps) + rho0;
                // Mass flux with div m = -d rho/dt, plus a solenoidal part.
                let wave = s * (rho0 * eps * freq / k2);
                let stir = [z.sin() * w0, x.sin() * w0, y.sin() * w0];
                let m: [Jet; 3] = std::array::from_fn(|i| wave * kvec[i] + stir[i] * rho0);
                let vel = m.map(|mi| mi / rho);
                RawFields {
                    rho,
                    vel,
                    p: (x.sin() * y.cos() * t.cos() * eps_p + 1.0) * p_ref,
                    temp: ((x + y + z).sin() * eps_t + t * heat_rate + 1.0) * temp0,
                    phi: zero,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for id in BUILTIN_IDS {
            let s = FieldScenario::builtin(id).unwrap();
            s.validate().unwrap();
            assert!(s.domain.volume() > 0.0);
        }
    }

    #[test]
    fn realize_applies_multiplicative_hooks() {
        let s = FieldScenario::builtin("rigid-rotation")
            .unwrap()
            .with_hooks(vec![AlphaHook { param: "omega".into(), amplitude: 0.1 }]);
        let r = s.realize(&[0.5]).unwrap();
        assert_eq!(r.get_param("omega").unwrap(), 2.0 * 1.05);
        assert!(r.alpha_hooks.is_empty());
        assert!(s.realize(&[0.5, 0.1]).is_err());
        assert_eq!(s.realize(&[0.0]).unwrap().flow, s.flow);
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let text = r#"{"id":"taylor-green","params":{"u0":0.5,"mu":0.02},
            "domain":{"min":[0,0,0],"max":[6.283185307179586,6.283185307179586,1]},
            "t_span":[0,2],"alpha_hooks":[{"param":"u0","amplitude":0.1}]}"#;
        let s = FieldScenario::from_json(text).unwrap();
        assert_eq!(s.get_param("u0").unwrap(), 0.5);
        assert_eq!(s.physics.mu, 0.02);
        assert_eq!(s.t_span, [0.0, 2.0]);
        assert!(FieldScenario::from_json(r#"{"id":"nope"}"#).is_err());
        assert!(FieldScenario::from_json(r#"{"id":"uniform","params":{"omega":1}}"#).is_err());
        assert!(FieldScenario::from_json(r#"{"id":"uniform","t_span":[1,1]}"#).is_err());
        assert!(FieldScenario::from_json(
            r#"{"id":"uniform","alpha_hooks":[{"param":"zz","amplitude":1}]}"#
        )
        .is_err());
    }
}

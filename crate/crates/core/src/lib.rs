//! Lagrangian laboratory for thermal tracer particles (TTPs) moving in
//! analytic Navier-Stokes-Fourier fields.
//!
//! Modules, bottom up: [`fields`] (scenarios and fluid operators),
//! [`kinetics`] (kinetic pressure, Gaussian entropy, pseudo-pressure),
//! [`ttp`] (mean-field force and constrained trajectories), [`ensemble`]
//! (Monte-Carlo sampling of the conditional Gaussian KDF), [`stochastic`]
//! (fluctuating fields over hidden parameters) and [`cli`].

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod fields;
mod jet;
pub mod kinetics;
pub mod quadrature;
pub mod rng;
pub mod stochastic;
pub mod ttp;

pub use error::{LabError, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

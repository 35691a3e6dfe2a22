//! Simulation of a robot excavating geometrically entangled granular media.
//!
//! Staples tangle: pulling one drags its neighbors, and a bed of them
//! behaves less like sand than like felt. This crate models that bed with a
//! compression-dependent tensile law, calibrates the law against bench
//! pull tests, and drives a jawed excavator robot through a light-guided
//! dig-and-haul loop over the resulting field, so bed preparation effects
//! on excavation show up as statistics over seeded trials.
//!
//! The math kernel (constitutive law, rig, fit, test statistics) is generic
//! over the scalar type through [`real::Real`]; the simulation stack runs in
//! `f64`. The aliases below pin the `f64` instantiations used everywhere
//! else.

pub mod config;
pub mod error;
pub mod geom;
pub mod harness;
pub mod media;
pub mod real;
pub mod rig;
pub mod rng;
pub mod sensors;
pub mod stats;
pub mod world;
pub mod agent;

pub use error::{Result, SimError};

/// f64 tensile-law parameters, the kind the simulator itself runs on.
pub type TensileParams = media::ConstitutiveParams<f64>;
/// f64 force-strain trace from the rig.
pub type TensileCurve = rig::ForceStrainCurve<f64>;
/// f64 Welch test report.
pub type WelchReport = stats::WelchTest<f64>;

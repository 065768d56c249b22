//! System descriptions: callback-form stochastic systems, the linear-Gaussian
//! matrix form, measurement sets, presets and probe validation.

mod linear;
mod measurements;
pub mod presets;
mod system;
mod validate;

pub use linear::LinearGaussianSystem;
pub use measurements::{fmt_f64, MeasurementSet, TimeHorizon, UNIFORM_RTOL};
pub use presets::{
    odd_root, preset_alpha_particle, preset_double_integrator, preset_harmonic, preset_pendulum,
    AlphaParticle,
};
pub use system::{gaussian_log_density, MatFn, ScalarFn, StochasticSystem, VecFn};
pub use validate::{validate_system, Finding, ValidationReport, FD_STEP, JACOBIAN_RTOL};

//! Maximum-likelihood continuous-time state estimation.
//!
//! Given stochastic dynamics `ẋ = f(t, x) + ν(t, v)` and noisy discrete
//! measurements `y_k = g(t_k, ẋ) + h(t_k, x) + ξ(t_k, w)`, the estimate is
//! the trajectory that maximizes the likelihood rate of the process and
//! measurement noise. Its pieces between measurements are "optimal
//! splines" whose shape is fixed by the dynamics and noise model.

pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod lingauss;
pub mod model;
pub mod nonlinear;
pub mod optimality;
pub mod quadrature;
pub mod rng;
mod serde_util;
pub mod sim;
pub mod spline;

pub use error::{Error, Result};

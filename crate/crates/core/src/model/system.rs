use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// `(t, vector) -> vector` callback.
pub type VecFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// `(t, vector) -> matrix` callback (Jacobians).
pub type MatFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `(t, vector) -> scalar` callback (log-densities).
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;

/// Stochastic dynamics `ẋ = f(t, x) + ν(t, v)` observed at discrete times
/// through `y = g(t, ẋ) + h(t, x) + ξ(t, w)`.
///
/// Jacobians are supplied by the caller; [`validate_system`] checks them
/// against finite differences.
///
/// [`validate_system`]: crate::model::validate_system
#[derive(Clone)]
pub struct StochasticSystem {
    pub name: String,
    pub n_x: usize,
    pub n_v: usize,
    pub n_w: usize,
    pub n_y: usize,
    pub f: VecFn,
    pub df_dx: MatFn,
    pub nu: VecFn,
    pub dnu_dv: MatFn,
    pub g: VecFn,
    pub dg_dxdot: MatFn,
    pub h: VecFn,
    pub dh_dx: MatFn,
    pub xi: VecFn,
    pub dxi_dw: MatFn,
    pub log_rho_v: ScalarFn,
    pub dlog_rho_v_dv: VecFn,
    pub log_rho_w: ScalarFn,
    pub dlog_rho_w_dw: VecFn,
    /// Optional closed-form solution of `∂lnρ_v/∂v + (∂ν/∂v)ᵀλ = 0` for `v`
    /// given the costate `λ`. When present, collocation eliminates `v`.
    pub v_from_costate: Option<VecFn>,
}

impl fmt::Debug for StochasticSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticSystem")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_v", &self.n_v)
            .field("n_w", &self.n_w)
            .field("n_y", &self.n_y)
            .field("v_from_costate", &self.v_from_costate.is_some())
            .finish()
    }
}

impl StochasticSystem {
    /// True when `g` has an identically zero Jacobian at the probe point,
    /// i.e. measurements do not depend on `ẋ`.
    pub fn g_is_zero_at(&self, t: f64, xdot: &DVector<f64>) -> bool {
        (self.dg_dxdot)(t, xdot).iter().all(|v| *v == 0.0)
    }
}

/// Zero-valued measurement term of the right shape.
pub fn zero_vec_fn(n_out: usize) -> VecFn {
    Arc::new(move |_t, _x| DVector::zeros(n_out))
}

pub fn zero_mat_fn(rows: usize, cols: usize) -> MatFn {
    Arc::new(move |_t, _x| DMatrix::zeros(rows, cols))
}

/// Gaussian log-density with covariance `cov` and its gradient.
pub fn gaussian_log_density(cov: &DMatrix<f64>) -> Option<(ScalarFn, VecFn)> {
    let n = cov.nrows();
    let chol = cov.clone().cholesky()?;
    let inv = chol.inverse();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
    let inv2 = inv.clone();
    let log_rho: ScalarFn = Arc::new(move |_t, v: &DVector<f64>| norm - 0.5 * v.dot(&(&inv * v)));
    let grad: VecFn = Arc::new(move |_t, v: &DVector<f64>| -(&inv2 * v));
    Some((log_rho, grad))
}

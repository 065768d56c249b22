//! Reference systems: point mass, harmonic oscillator, point mass with
//! generalized-Gaussian forcing, and the simple pendulum.

use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector};

use super::linear::LinearGaussianSystem;
use super::system::{gaussian_log_density, zero_mat_fn, zero_vec_fn, StochasticSystem};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn second_order_lgs(a: DMatrix<f64>, sigma_p: f64, sigma_m: f64) -> Result<LinearGaussianSystem> {
    LinearGaussianSystem::new(
        a,
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0],
        dmatrix![1.0],
        dmatrix![sigma_p * sigma_p],
        dmatrix![sigma_m * sigma_m],
    )
}

/// `r̈ = v`, `y = r + w`.
pub fn preset_double_integrator(
    sigma_p: f64,
    sigma_m: f64,
) -> Result<(StochasticSystem, LinearGaussianSystem)> {
    positive("sigma_p", sigma_p)?;
    positive("sigma_m", sigma_m)?;
    let lgs = second_order_lgs(dmatrix![0.0, 1.0; 0.0, 0.0], sigma_p, sigma_m)?;
    Ok((lgs.to_stochastic("double-integrator"), lgs))
}

/// `r̈ = -ω² r + v`, `y = r + w`.
pub fn preset_harmonic(
    omega: f64,
    sigma_p: f64,
    sigma_m: f64,
) -> Result<(StochasticSystem, LinearGaussianSystem)> {
    positive("omega", omega)?;
    harmonic_matrices(omega, sigma_p, sigma_m)
}

// shared with the ω → 0 continuity check
fn harmonic_matrices(
    omega: f64,
    sigma_p: f64,
    sigma_m: f64,
) -> Result<(StochasticSystem, LinearGaussianSystem)> {
    positive("sigma_p", sigma_p)?;
    positive("sigma_m", sigma_m)?;
    let lgs = second_order_lgs(dmatrix![0.0, 1.0; -omega * omega, 0.0], sigma_p, sigma_m)?;
    Ok((lgs.to_stochastic("harmonic"), lgs))
}

/// Point mass forced by `ρ_v(v) = c_α exp(-½ (v/σ_p)^{2α})`.
#[derive(Debug, Clone)]
pub struct AlphaParticle {
    pub alpha: u32,
    pub sigma_p: f64,
    pub sigma_m: f64,
    /// `ln c_α`, from numerical quadrature of the unnormalized density.
    pub log_c_alpha: f64,
    pub system: StochasticSystem,
}

impl AlphaParticle {
    /// `2α - 1`, the (odd) power linking `v` and the costate.
    pub fn odd_power(&self) -> i32 {
        2 * self.alpha as i32 - 1
    }

    /// `(σ_p^{2α} / α)^{1/(2α-1)}`.
    pub fn kappa(&self) -> f64 {
        alpha_kappa(self.alpha, self.sigma_p)
    }

    /// `∂ lnρ_v/∂v = -(α/σ_p^{2α}) v^{2α-1}`.
    pub fn log_density_gradient(&self, v: f64) -> f64 {
        -(self.alpha as f64) / self.sigma_p.powi(2 * self.alpha as i32) * v.powi(self.odd_power())
    }
}

pub(crate) fn alpha_kappa(alpha: u32, sigma_p: f64) -> f64 {
    let n = (2 * alpha - 1) as f64;
    (sigma_p.powi(2 * alpha as i32) / alpha as f64).powf(1.0 / n)
}

/// Real odd root `sign(u)|u|^{1/n}` for odd `n`.
pub fn odd_root(u: f64, n: i32) -> f64 {
    if n == 1 {
        u
    } else {
        u.signum() * u.abs().powf(1.0 / n as f64)
    }
}

/// `∫ exp(-½ (v/σ)^{2α}) dv` over the real line by adaptive quadrature.
pub fn alpha_normalizer_integral(alpha: u32, sigma_p: f64) -> f64 {
    let p = 2 * alpha as i32;
    // beyond this the integrand is below e^{-50}
    let cutoff = sigma_p * 100f64.powf(1.0 / p as f64);
    let half = integrate(|v| (-0.5 * (v / sigma_p).powi(p)).exp(), 0.0, cutoff, 1e-14 * sigma_p);
    2.0 * half.value
}

pub fn preset_alpha_particle(alpha: u32, sigma_p: f64, sigma_m: f64) -> Result<AlphaParticle> {
    if alpha < 1 {
        return Err(Error::InvalidParameter("alpha must be an integer >= 1".into()));
    }
    positive("sigma_p", sigma_p)?;
    positive("sigma_m", sigma_m)?;
    let (mut system, _) = preset_double_integrator(sigma_p, sigma_m)?;
    system.name = "alpha".into();
    let p = 2 * alpha as i32;
    let log_c_alpha = -alpha_normalizer_integral(alpha, sigma_p).ln();
    let coef = alpha as f64 / sigma_p.powi(p);
    system.log_rho_v = Arc::new(move |_t, v: &DVector<f64>| log_c_alpha - 0.5 * (v[0] / sigma_p).powi(p));
    system.dlog_rho_v_dv =
        Arc::new(move |_t, v: &DVector<f64>| DVector::from_element(1, -coef * v[0].powi(p - 1)));
    let kappa = alpha_kappa(alpha, sigma_p);
    let n = p - 1;
    // (∂ν/∂v)ᵀλ = λ₂ for ν = (0, v)
    system.v_from_costate = Some(Arc::new(move |_t, lambda: &DVector<f64>| {
        DVector::from_element(1, kappa * odd_root(lambda[1], n))
    }));
    Ok(AlphaParticle {
        alpha,
        sigma_p,
        sigma_m,
        log_c_alpha,
        system,
    })
}

/// `θ̈ + sin θ = v`, `y = θ + w`.
pub fn preset_pendulum(sigma_p: f64, sigma_m: f64) -> Result<StochasticSystem> {
    positive("sigma_p", sigma_p)?;
    positive("sigma_m", sigma_m)?;
    let q = dmatrix![sigma_p * sigma_p];
    let r = dmatrix![sigma_m * sigma_m];
    let (log_rho_v, dlog_rho_v_dv) = gaussian_log_density(&q).expect("positive variance");
    let (log_rho_w, dlog_rho_w_dw) = gaussian_log_density(&r).expect("positive variance");
    let var_p = sigma_p * sigma_p;
    Ok(StochasticSystem {
        name: "pendulum".into(),
        n_x: 2,
        n_v: 1,
        n_w: 1,
        n_y: 1,
        f: Arc::new(|_t, x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0].sin()])),
        df_dx: Arc::new(|_t, x: &DVector<f64>| dmatrix![0.0, 1.0; -x[0].cos(), 0.0]),
        nu: Arc::new(|_t, v: &DVector<f64>| DVector::from_vec(vec![0.0, v[0]])),
        dnu_dv: Arc::new(|_t, _v| dmatrix![0.0; 1.0]),
        g: zero_vec_fn(1),
        dg_dxdot: zero_mat_fn(1, 2),
        h: Arc::new(|_t, x: &DVector<f64>| DVector::from_element(1, x[0])),
        dh_dx: Arc::new(|_t, _x| dmatrix![1.0, 0.0]),
        xi: Arc::new(|_t, w: &DVector<f64>| w.clone()),
        dxi_dw: Arc::new(|_t, _w| dmatrix![1.0]),
        log_rho_v,
        dlog_rho_v_dv,
        log_rho_w,
        dlog_rho_w_dw,
        v_from_costate: Some(Arc::new(move |_t, lambda: &DVector<f64>| {
            DVector::from_element(1, var_p * lambda[1])
        })),
    })
}

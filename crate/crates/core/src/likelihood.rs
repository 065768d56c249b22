//! The interval extension `μ(τ, ρ) = exp((1/|τ|) ∫_τ ln ρ dt)` of an
//! instantaneous density, and the likelihood-rate objective built from it.
//!
//! Everything is computed in log space; `μ` is exponentiated only by the
//! `mu_*` wrappers.

use std::cell::Cell;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MeasurementSet, StochasticSystem};
use crate::quadrature::integrate;

/// Absolute tolerance on every log-integral.
pub const LOG_INTEGRAL_TOL: f64 = 1e-10;

/// `t ↦ ln ρ(t)` along a candidate noise trajectory, on `[a, b]`.
pub struct LogDensityPath<'a> {
    pub log_rho: Box<dyn Fn(f64) -> f64 + 'a>,
    pub a: f64,
    pub b: f64,
}

impl<'a> LogDensityPath<'a> {
    pub fn new(log_rho: impl Fn(f64) -> f64 + 'a, a: f64, b: f64) -> Result<Self> {
        if !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("interval [{a}, {b}]")));
        }
        Ok(Self {
            log_rho: Box::new(log_rho),
            a,
            b,
        })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Same density restricted to `[a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> LogDensityPath<'_> {
        LogDensityPath {
            log_rho: Box::new(move |t| (self.log_rho)(t)),
            a,
            b,
        }
    }
}

/// `∫_a^b g(t) dt`, failing with the first node where `g` is not finite.
pub fn log_integral(g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let bad: Cell<Option<f64>> = Cell::new(None);
    let r = integrate(
        |t| {
            let v = g(t);
            if v.is_finite() {
                v
            } else {
                if bad.get().is_none() {
                    bad.set(Some(t));
                }
                0.0
            }
        },
        a,
        b,
        LOG_INTEGRAL_TOL,
    );
    match bad.get() {
        Some(t) => Err(Error::NonFiniteDensity { t }),
        None => Ok(r.value),
    }
}

/// `ln μ(τ, ρ)`. A singleton interval returns `ln ρ` at that point.
pub fn log_mu_interval(path: &LogDensityPath) -> Result<f64> {
    if path.length() == 0.0 {
        let v = (path.log_rho)(path.a);
        return if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteDensity { t: path.a })
        };
    }
    Ok(log_integral(&path.log_rho, path.a, path.b)? / path.length())
}

pub fn mu_interval(path: &LogDensityPath) -> Result<f64> {
    log_mu_interval(path).map(f64::exp)
}

/// `(μ(τ)^{|τ|}, μ(τ₁)^{|τ₁|} μ(τ₂)^{|τ₂|})` for the partition of `τ` at
/// `split`. Both sides are equal for a geometric average.
pub fn mu_product_check(path: &LogDensityPath, split: f64) -> Result<(f64, f64)> {
    if !(split > path.a && split < path.b) {
        return Err(Error::InvalidParameter(format!(
            "split {split} not inside ({}, {})",
            path.a, path.b
        )));
    }
    let whole = log_mu_interval(path)? * path.length();
    let left = path.restrict(path.a, split);
    let right = path.restrict(split, path.b);
    let parts = log_mu_interval(&left)? * left.length() + log_mu_interval(&right)? * right.length();
    Ok((whole.exp(), parts.exp()))
}

/// `ln μ` of a union of pairwise separated closed intervals, defined as the
/// sum over components. Components must be sorted and non-touching.
pub fn log_mu_union(paths: &[LogDensityPath]) -> Result<f64> {
    for w in paths.windows(2) {
        if !(w[1].a > w[0].b) {
            return Err(Error::InvalidParameter(format!(
                "intervals [{}, {}] and [{}, {}] are not separated",
                w[0].a, w[0].b, w[1].a, w[1].b
            )));
        }
    }
    paths.iter().map(log_mu_interval).sum()
}

pub fn mu_union(paths: &[LogDensityPath]) -> Result<f64> {
    log_mu_union(paths).map(f64::exp)
}

/// Decomposed log-likelihood rate.
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveValue {
    /// `ln J`.
    pub log_value: f64,
    /// `∫_{t_k}^{t_{k+1}} ln ρ_v dt` per interval.
    pub interval_terms: Vec<f64>,
    /// Weight of each interval term: `1/(t_{k+1} - t_k)`, i.e. `f0` when
    /// sampling is uniform.
    pub interval_weights: Vec<f64>,
    /// `ln ρ_v(v_k) + ln ρ_w(w_k)` per knot.
    pub point_terms: Vec<f64>,
}

impl ObjectiveValue {
    fn assemble(interval_terms: Vec<f64>, interval_weights: Vec<f64>, point_terms: Vec<f64>) -> Self {
        // index-ordered reductions keep the value bit-reproducible
        let mut log_value = 0.0;
        for (w, v) in interval_weights.iter().zip(&interval_terms) {
            log_value += w * v;
        }
        for p in &point_terms {
            log_value += p;
        }
        Self {
            log_value,
            interval_terms,
            interval_weights,
            point_terms,
        }
    }
}

/// `ln J = Σ_k w_k ∫ ln ρ_v(t, v(t)) dt + Σ_k [ln ρ_v(v_k) + ln ρ_w(w_k)]`.
///
/// `v_path(k, t)` is the in-segment noise on interval `k`; it is only
/// evaluated strictly inside the interval, so segments may disagree at knots.
pub fn log_objective(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    v_path: &dyn Fn(usize, f64) -> DVector<f64>,
    v_points: &[DVector<f64>],
    w_points: &[DVector<f64>],
) -> Result<ObjectiveValue> {
    let n = ms.len();
    for (what, len) in [("v_points", v_points.len()), ("w_points", w_points.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context: what.into(),
                expected: n.to_string(),
                got: len.to_string(),
            });
        }
    }
    if let Some(v) = v_points.iter().find(|v| v.len() != sys.n_v) {
        return Err(Error::DimensionMismatch {
            context: "v_points entry".into(),
            expected: sys.n_v.to_string(),
            got: v.len().to_string(),
        });
    }
    if let Some(w) = w_points.iter().find(|w| w.len() != sys.n_w) {
        return Err(Error::DimensionMismatch {
            context: "w_points entry".into(),
            expected: sys.n_w.to_string(),
            got: w.len().to_string(),
        });
    }
    let times = ms.times();
    let mut interval_terms = Vec::with_capacity(ms.intervals());
    let mut weights = Vec::with_capacity(ms.intervals());
    for k in 0..ms.intervals() {
        let integral = log_integral(
            |t| (sys.log_rho_v)(t, &v_path(k, t)),
            times[k],
            times[k + 1],
        )?;
        interval_terms.push(integral);
        weights.push(ms.interval_weight(k));
    }
    let mut point_terms = Vec::with_capacity(n);
    for k in 0..n {
        let t = times[k];
        let p = (sys.log_rho_v)(t, &v_points[k]) + (sys.log_rho_w)(t, &w_points[k]);
        if !p.is_finite() {
            return Err(Error::NonFiniteDensity { t });
        }
        point_terms.push(p);
    }
    Ok(ObjectiveValue::assemble(interval_terms, weights, point_terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset_double_integrator;
    use std::f64::consts::{E, PI};

    #[test]
    fn constant_density() {
        let p = LogDensityPath::new(|_| 2.5f64.ln(), 0.0, 3.0).unwrap();
        assert!((mu_interval(&p).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn singleton_convention() {
        let p = LogDensityPath::new(|t| if t == 1.7 { 0.4f64.ln() } else { 0.0 }, 1.7, 1.7).unwrap();
        assert!((mu_interval(&p).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn exponential_density() {
        let p = LogDensityPath::new(|t| t, 0.0, 2.0).unwrap();
        assert!((mu_interval(&p).unwrap() - E).abs() < 1e-12);
    }

    #[test]
    fn piecewise_product() {
        let p = LogDensityPath::new(|t| if t <= 1.0 { 1.0 } else { 3.0 }, 0.0, 2.0).unwrap();
        let (lhs, rhs) = mu_product_check(&p, 1.0).unwrap();
        assert!((lhs - E.powi(4)).abs() < 1e-9 * lhs);
        assert!((rhs - lhs).abs() < 1e-9 * lhs);
        assert!(mu_product_check(&p, 2.0).is_err());
    }

    #[test]
    fn non_finite_names_node() {
        let p = LogDensityPath::new(|t| if t > 0.5 { f64::NEG_INFINITY } else { 0.0 }, 0.0, 1.0).unwrap();
        match log_mu_interval(&p) {
            Err(Error::NonFiniteDensity { t }) => assert!(t > 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn union_requires_separation() {
        let a = LogDensityPath::new(|_| 1.0, 0.0, 1.0).unwrap();
        let b = LogDensityPath::new(|_| 2.0, 1.0, 2.0).unwrap();
        assert!(log_mu_union(&[a, b]).is_err());
        let a = LogDensityPath::new(|_| 1.0, 0.0, 1.0).unwrap();
        let b = LogDensityPath::new(|_| 2.0, 1.5, 2.0).unwrap();
        assert!((mu_union(&[a, b]).unwrap() - E.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_single_interval() {
        let (sys, _) = preset_double_integrator(1.0, 1.0).unwrap();
        let ms = MeasurementSet::uniform(
            vec![0.0, 0.2],
            vec![DVector::zeros(1), DVector::zeros(1)],
            5.0,
        )
        .unwrap();
        let zeros = vec![DVector::zeros(1); 2];
        let obj = log_objective(&sys, &ms, &|_, _| DVector::zeros(1), &zeros, &zeros).unwrap();
        assert!((obj.log_value - (-2.5 * (2.0 * PI).ln())).abs() < 1e-10);
        assert!((obj.log_value + 4.59469).abs() < 1e-5);
    }

    #[test]
    fn measurement_noise_lowers_objective() {
        let (sys, _) = preset_double_integrator(1.0, 1.0).unwrap();
        let ms = MeasurementSet::new(vec![0.0, 1.0, 2.0], vec![DVector::zeros(1); 3], None).unwrap();
        let zeros = vec![DVector::zeros(1); 3];
        let base = log_objective(&sys, &ms, &|_, _| DVector::zeros(1), &zeros, &zeros).unwrap();
        let mut w = zeros.clone();
        w[1][0] = 0.3;
        let moved = log_objective(&sys, &ms, &|_, _| DVector::zeros(1), &zeros, &w).unwrap();
        assert!(moved.log_value < base.log_value);
        assert!(log_objective(&sys, &ms, &|_, _| DVector::zeros(1), &zeros[..2], &w).is_err());
    }
}

//! Numeric residuals of the first-order optimality conditions: the
//! in-segment stationarity, costate and dynamics equations, and the six
//! junction conditions at each knot.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MeasurementSet, StochasticSystem};
use crate::spline::{KnotValues, Spline};

/// Step for central differences of candidate paths.
pub const FD_STEP: f64 = 1e-6;
/// A candidate verifies when every residual is at or below this.
pub const VERIFY_TOL: f64 = 1e-7;
/// Segment limits must meet the knot values to this tolerance.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Path on interval `k` evaluated at `t` (closed interval).
pub type PathFn<'a> = Box<dyn Fn(usize, f64) -> DVector<f64> + 'a>;

/// A trajectory to be tested against the optimality conditions.
///
/// Paths are indexed by interval so segments may disagree at knots. `ẋ`
/// and `λ̇` are taken by central differences unless analytic paths are
/// supplied.
pub struct CandidateSolution<'a> {
    pub x_path: PathFn<'a>,
    pub v_path: PathFn<'a>,
    pub lambda_path: PathFn<'a>,
    pub xdot_path: Option<PathFn<'a>>,
    pub lambda_dot_path: Option<PathFn<'a>>,
    /// Point values; `lambda_minus[0]` and `lambda_plus[K]` should be zero.
    pub knots: KnotValues,
}

impl<'a> CandidateSolution<'a> {
    /// Wraps a spline with analytic derivatives. One-sided costate limits
    /// come from the segments themselves, not from the stored knot arrays.
    pub fn from_spline(spline: &'a Spline) -> Result<Self> {
        spline.validate()?;
        let k_last = spline.intervals();
        let mut knots = spline.knots.clone();
        let n_x = spline.n_x();
        knots.lambda_minus[0] = DVector::zeros(n_x);
        knots.lambda_plus[k_last] = DVector::zeros(n_x);
        for k in 0..k_last {
            let t0 = spline.times[k];
            let t1 = spline.times[k + 1];
            knots.lambda_plus[k] = spline.segment_state(k, t0)?.lambda;
            knots.lambda_minus[k + 1] = spline.segment_state(k, t1)?.lambda;
        }
        let state = move |k: usize, t: f64| {
            spline.segment_state(k, t).ok()
        };
        let nan = move || DVector::from_element(n_x, f64::NAN);
        let n_v = spline.knots.v[0].len();
        Ok(Self {
            x_path: Box::new(move |k, t| state(k, t).map_or_else(nan, |s| s.x)),
            v_path: Box::new(move |k, t| {
                state(k, t).map_or_else(|| DVector::from_element(n_v, f64::NAN), |s| s.v)
            }),
            lambda_path: Box::new(move |k, t| state(k, t).map_or_else(nan, |s| s.lambda)),
            xdot_path: Some(Box::new(move |k, t| state(k, t).map_or_else(nan, |s| s.xdot))),
            lambda_dot_path: Some(Box::new(move |k, t| {
                state(k, t).map_or_else(nan, |s| s.lambda_dot)
            })),
            knots,
        })
    }

    fn xdot(&self, k: usize, t: f64) -> DVector<f64> {
        match &self.xdot_path {
            Some(p) => p(k, t),
            None => central_difference(&self.x_path, k, t),
        }
    }

    fn lambda_dot(&self, k: usize, t: f64) -> DVector<f64> {
        match &self.lambda_dot_path {
            Some(p) => p(k, t),
            None => central_difference(&self.lambda_path, k, t),
        }
    }
}

fn central_difference(path: &PathFn, k: usize, t: f64) -> DVector<f64> {
    (path(k, t + FD_STEP) - path(k, t - FD_STEP)) / (2.0 * FD_STEP)
}

/// In-segment residuals at one time.
#[derive(Debug, Clone)]
pub struct IntervalResiduals {
    /// `∂lnρ_v/∂v + (∂ν/∂v)ᵀλ`.
    pub r21: DVector<f64>,
    /// `λ̇ + (∂f/∂x)ᵀλ`.
    pub r22: DVector<f64>,
    /// `ẋ - f - ν`.
    pub r23: DVector<f64>,
}

/// Junction residuals at one knot.
#[derive(Debug, Clone)]
pub struct JunctionResiduals {
    /// `∂lnρ_v/∂v + (∂ν/∂v)ᵀλ(t_k)`.
    pub r24: DVector<f64>,
    /// `∂lnρ_w/∂w + (∂ξ/∂w)ᵀη`.
    pub r25: DVector<f64>,
    /// `λ(t_k) - (∂g/∂ẋ)ᵀη`.
    pub r26: DVector<f64>,
    /// `(∂f/∂x)ᵀλ(t_k) + (∂h/∂x)ᵀη + w_k λ(t_k⁺) - w_{k-1} λ(t_k⁻)`.
    pub r27: DVector<f64>,
    /// `y - g - h - ξ`.
    pub r28: DVector<f64>,
    /// `ẋ(t_k) - f - ν`.
    pub r29: DVector<f64>,
}

/// Residuals on the open interval containing `t`.
pub fn interval_residuals(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    cand: &CandidateSolution,
    t: f64,
) -> Result<IntervalResiduals> {
    let k = ms.interval_of(t)?;
    if ms.times().contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} is a knot; interval residuals need an open interval"
        )));
    }
    Ok(interval_residuals_on(sys, cand, k, t))
}

fn interval_residuals_on(sys: &StochasticSystem, cand: &CandidateSolution, k: usize, t: f64) -> IntervalResiduals {
    let x = (cand.x_path)(k, t);
    let v = (cand.v_path)(k, t);
    let lambda = (cand.lambda_path)(k, t);
    let r21 = (sys.dlog_rho_v_dv)(t, &v) + (sys.dnu_dv)(t, &v).transpose() * &lambda;
    let r22 = cand.lambda_dot(k, t) + (sys.df_dx)(t, &x).transpose() * &lambda;
    let r23 = cand.xdot(k, t) - (sys.f)(t, &x) - (sys.nu)(t, &v);
    IntervalResiduals { r21, r22, r23 }
}

/// Residuals at knot `k`, `0 <= k <= K`.
pub fn junction_residuals(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    cand: &CandidateSolution,
    k: usize,
) -> Result<JunctionResiduals> {
    let kk = ms.intervals();
    if k > kk {
        return Err(Error::InvalidParameter(format!("knot index {k} > K = {kk}")));
    }
    let t = ms.times()[k];
    let y = &ms.values()[k];
    let kn = &cand.knots;
    let (x, xdot, v, w) = (&kn.x[k], &kn.xdot[k], &kn.v[k], &kn.w[k]);
    let (lambda, eta) = (&kn.lambda[k], &kn.eta[k]);
    // boundary weights only multiply values that should vanish
    let w_right = ms.interval_weight(k.min(kk - 1));
    let w_left = ms.interval_weight(k.saturating_sub(1));
    Ok(JunctionResiduals {
        r24: (sys.dlog_rho_v_dv)(t, v) + (sys.dnu_dv)(t, v).transpose() * lambda,
        r25: (sys.dlog_rho_w_dw)(t, w) + (sys.dxi_dw)(t, w).transpose() * eta,
        r26: lambda - (sys.dg_dxdot)(t, xdot).transpose() * eta,
        r27: (sys.df_dx)(t, x).transpose() * lambda
            + (sys.dh_dx)(t, x).transpose() * eta
            + &kn.lambda_plus[k] * w_right
            - &kn.lambda_minus[k] * w_left,
        r28: y - (sys.g)(t, xdot) - (sys.h)(t, x) - (sys.xi)(t, w),
        r29: xdot - (sys.f)(t, x) - (sys.nu)(t, v),
    })
}

/// Where a condition attains its largest violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Location {
    pub t: f64,
    /// Interval index for in-segment conditions, knot index otherwise.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub max_abs: f64,
    pub argmax: Option<Location>,
}

/// Max-norm of every condition over a sample grid and all knots.
///
/// Keys: `r21`..`r29`, `continuity` (segment limits vs knot states), and
/// for systems whose measurements do not involve `ẋ`, `knot_lambda`
/// (`|λ(t_k)|`, which must vanish in that case).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualBundle {
    pub residuals: BTreeMap<String, ResidualEntry>,
}

impl ResidualBundle {
    fn new() -> Self {
        Self {
            residuals: BTreeMap::new(),
        }
    }

    fn record(&mut self, key: &str, value: &DVector<f64>, loc: Location) {
        let m = value.iter().fold(0.0f64, |acc, v| {
            if v.is_finite() {
                acc.max(v.abs())
            } else {
                f64::INFINITY
            }
        });
        let fresh = ResidualEntry {
            max_abs: m,
            argmax: Some(loc),
        };
        let entry = self.residuals.entry(key.to_string()).or_insert(fresh);
        // first occurrence wins ties, keeping argmax deterministic
        if m > entry.max_abs {
            *entry = fresh;
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.residuals.get(key).map(|e| e.max_abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.residuals.values().map(|e| e.max_abs).fold(0.0, f64::max)
    }

    /// Conditions whose residual exceeds `tol`, in key order.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        self.residuals
            .iter()
            .filter(|(_, e)| !(e.max_abs <= tol))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }
}

/// Evaluates every condition at `t_k + j h_k / n` for `j = 1..n` (the grids
/// are nested, so doubling `n` can only raise a reported maximum) and at
/// every knot.
pub fn verify(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    cand: &CandidateSolution,
    grid_per_interval: usize,
) -> Result<ResidualBundle> {
    if grid_per_interval < 2 {
        return Err(Error::InvalidParameter("grid_per_interval must be >= 2".into()));
    }
    check_candidate_shape(sys, ms, cand)?;
    let times = ms.times();
    let mut bundle = ResidualBundle::new();
    let n = grid_per_interval;
    for k in 0..ms.intervals() {
        let (a, b) = (times[k], times[k + 1]);
        for j in 1..n {
            let t = a + (b - a) * j as f64 / n as f64;
            let r = interval_residuals_on(sys, cand, k, t);
            let loc = Location { t, index: k };
            bundle.record("r21", &r.r21, loc);
            bundle.record("r22", &r.r22, loc);
            bundle.record("r23", &r.r23, loc);
        }
        let left = (cand.x_path)(k, a) - &cand.knots.x[k];
        let right = (cand.x_path)(k, b) - &cand.knots.x[k + 1];
        bundle.record("continuity", &left, Location { t: a, index: k });
        bundle.record("continuity", &right, Location { t: b, index: k + 1 });
    }
    let g_free = (0..ms.len()).all(|k| sys.g_is_zero_at(times[k], &cand.knots.xdot[k]));
    for k in 0..ms.len() {
        let r = junction_residuals(sys, ms, cand, k)?;
        let loc = Location { t: times[k], index: k };
        bundle.record("r24", &r.r24, loc);
        bundle.record("r25", &r.r25, loc);
        bundle.record("r26", &r.r26, loc);
        bundle.record("r27", &r.r27, loc);
        bundle.record("r28", &r.r28, loc);
        bundle.record("r29", &r.r29, loc);
        if g_free {
            bundle.record("knot_lambda", &cand.knots.lambda[k], loc);
        }
    }
    Ok(bundle)
}

fn check_candidate_shape(sys: &StochasticSystem, ms: &MeasurementSet, cand: &CandidateSolution) -> Result<()> {
    let n = ms.len();
    let kn = &cand.knots;
    for (name, vals, dim) in [
        ("x", &kn.x, sys.n_x),
        ("xdot", &kn.xdot, sys.n_x),
        ("v", &kn.v, sys.n_v),
        ("w", &kn.w, sys.n_w),
        ("eta", &kn.eta, sys.n_y),
        ("lambda", &kn.lambda, sys.n_x),
        ("lambda_minus", &kn.lambda_minus, sys.n_x),
        ("lambda_plus", &kn.lambda_plus, sys.n_x),
    ] {
        if vals.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!("candidate knot array {name}"),
                expected: n.to_string(),
                got: vals.len().to_string(),
            });
        }
        if let Some(v) = vals.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: format!("candidate knot {name} entry"),
                expected: dim.to_string(),
                got: v.len().to_string(),
            });
        }
    }
    Ok(())
}

/// Verifies a spline against the system and measurements.
pub fn verify_spline(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    spline: &Spline,
    grid_per_interval: usize,
) -> Result<ResidualBundle> {
    spline.check_times(ms)?;
    let cand = CandidateSolution::from_spline(spline)?;
    verify(sys, ms, &cand, grid_per_interval)
}

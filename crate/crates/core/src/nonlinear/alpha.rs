//! Optimal splines for the point mass with generalized-Gaussian forcing.
//!
//! On each segment `λ₂` is linear and `v = κ λ₂^{1/p}` with `p = 2α - 1`,
//! so the state integrates in closed form. The unknowns of the junction
//! problem are the knot states `(X_k, V_k)` and each segment's endpoint
//! noise values `(v_k^a, v_k^b)`. Working with `v` rather than the costate
//! keeps the continuity integrals smooth: they are homogeneous of degree
//! one in `(v^a, v^b)`, while in terms of `λ` they have unbounded slope at
//! `λ = 0`.

use nalgebra::{DMatrix, DVector};

use super::fractional::e_n;
use super::newton::{damped_newton, NewtonOptions, NewtonReport};
use crate::error::{Error, Result};
use crate::lingauss::solve_spline;
use crate::linalg::lu_solve;
use crate::model::{preset_double_integrator, AlphaParticle, MeasurementSet};
use crate::spline::{AlphaSegment, KnotValues, Segment, Spline};

/// `∫₀¹ (1-τ)^n/n! · v(τ) dτ` where `v(τ)^p` interpolates `va^p`, `vb^p` linearly.
fn shape_integral(n: u32, p: i64, va: f64, vb: f64) -> f64 {
    let (a, b) = (va.powi(p as i32), vb.powi(p as i32));
    e_n(n, 1, p, a, b - a, 1.0)
}

/// Partial derivatives of [`shape_integral`] in `(va, vb)`.
///
/// The integral is homogeneous of degree one, so its gradient only depends
/// on the direction of `(va, vb)`; it is evaluated after normalizing by
/// the larger magnitude. At the origin the diagonal limit is used.
fn shape_gradient(n: u32, p: i64, va: f64, vb: f64) -> (f64, f64) {
    let m = va.abs().max(vb.abs());
    let (a1, b1) = if m == 0.0 { (1.0, 1.0) } else { (va / m, vb / m) };
    let (a, b) = (a1.powi(p as i32), b1.powi(p as i32));
    // E_{n}(1/p - 1) and E_{n+1}(1/p - 1)
    let k = 1 - p;
    let en = e_n(n, k, p, a, b - a, 1.0);
    let en1 = e_n(n + 1, k, p, a, b - a, 1.0);
    let nf = (n + 1) as f64;
    let da = if a1 == 0.0 && p > 1 { 0.0 } else { nf * a1.powi(p as i32 - 1) * en1 };
    let db = if b1 == 0.0 && p > 1 { 0.0 } else { b1.powi(p as i32 - 1) * (en - nf * en1) };
    (da, db)
}

struct Layout {
    k: usize,
}

impl Layout {
    fn x(&self, i: usize) -> usize {
        i
    }
    fn v(&self, i: usize) -> usize {
        self.k + 1 + i
    }
    fn va(&self, i: usize) -> usize {
        2 * (self.k + 1) + 2 * i
    }
    fn vb(&self, i: usize) -> usize {
        2 * (self.k + 1) + 2 * i + 1
    }
    fn len(&self) -> usize {
        4 * self.k + 2
    }
}

struct Problem<'a> {
    p: i64,
    /// `α / σ_p^{2α}`, so `λ₂ = c v^p`.
    coef: f64,
    var_m: f64,
    ms: &'a MeasurementSet,
    lay: Layout,
}

impl Problem<'_> {
    fn lam(&self, v: f64) -> f64 {
        self.coef * v.powi(self.p as i32)
    }

    fn dlam(&self, v: f64) -> f64 {
        self.coef * self.p as f64 * v.powi(self.p as i32 - 1)
    }

    /// Ratio linking `λ₂` continuity across a knot: `w_k v_a^p = w_{k-1} v_b^p`.
    fn carry(&self, k: usize) -> f64 {
        let ratio = self.ms.interval_weight(k - 1) / self.ms.interval_weight(k);
        ratio.powf(1.0 / self.p as f64)
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = &self.lay;
        let kk = l.k;
        let mut r = DVector::zeros(l.len());
        let mut row = 0;
        for k in 0..kk {
            let h = self.ms.gap(k);
            let (va, vb) = (z[l.va(k)], z[l.vb(k)]);
            r[row] = z[l.x(k + 1)] - z[l.x(k)] - z[l.v(k)] * h - h * h * shape_integral(1, self.p, va, vb);
            r[row + 1] = z[l.v(k + 1)] - z[l.v(k)] - h * shape_integral(0, self.p, va, vb);
            row += 2;
        }
        r[row] = z[l.va(0)];
        row += 1;
        for k in 1..kk {
            r[row] = z[l.va(k)] - self.carry(k) * z[l.vb(k - 1)];
            row += 1;
        }
        r[row] = z[l.vb(kk - 1)];
        row += 1;
        // λ₁ jump scaled by σ_m²; λ₁ = -(λ₂(end) - λ₂(start)) / h on each segment
        for k in 0..=kk {
            let mut acc = self.ms.values()[k][0] - z[l.x(k)];
            if k > 0 {
                let h = self.ms.gap(k - 1);
                let q = (self.lam(z[l.vb(k - 1)]) - self.lam(z[l.va(k - 1)])) / h;
                acc += self.var_m * q / h;
            }
            if k < kk {
                let h = self.ms.gap(k);
                let q = (self.lam(z[l.vb(k)]) - self.lam(z[l.va(k)])) / h;
                acc -= self.var_m * q / h;
            }
            r[row] = acc;
            row += 1;
        }
        debug_assert_eq!(row, l.len());
        r
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let l = &self.lay;
        let kk = l.k;
        let mut j = DMatrix::zeros(l.len(), l.len());
        let mut row = 0;
        for k in 0..kk {
            let h = self.ms.gap(k);
            let (va, vb) = (z[l.va(k)], z[l.vb(k)]);
            let (d1a, d1b) = shape_gradient(1, self.p, va, vb);
            let (d0a, d0b) = shape_gradient(0, self.p, va, vb);
            j[(row, l.x(k + 1))] = 1.0;
            j[(row, l.x(k))] = -1.0;
            j[(row, l.v(k))] = -h;
            j[(row, l.va(k))] = -h * h * d1a;
            j[(row, l.vb(k))] = -h * h * d1b;
            j[(row + 1, l.v(k + 1))] = 1.0;
            j[(row + 1, l.v(k))] = -1.0;
            j[(row + 1, l.va(k))] = -h * d0a;
            j[(row + 1, l.vb(k))] = -h * d0b;
            row += 2;
        }
        j[(row, l.va(0))] = 1.0;
        row += 1;
        for k in 1..kk {
            j[(row, l.va(k))] = 1.0;
            j[(row, l.vb(k - 1))] = -self.carry(k);
            row += 1;
        }
        j[(row, l.vb(kk - 1))] = 1.0;
        row += 1;
        for k in 0..=kk {
            j[(row, l.x(k))] = -1.0;
            if k > 0 {
                let h = self.ms.gap(k - 1);
                let s = self.var_m / (h * h);
                j[(row, l.vb(k - 1))] += s * self.dlam(z[l.vb(k - 1)]);
                j[(row, l.va(k - 1))] -= s * self.dlam(z[l.va(k - 1)]);
            }
            if k < kk {
                let h = self.ms.gap(k);
                let s = self.var_m / (h * h);
                j[(row, l.vb(k))] -= s * self.dlam(z[l.vb(k)]);
                j[(row, l.va(k))] += s * self.dlam(z[l.va(k)]);
            }
            row += 1;
        }
        j
    }
}

/// Spline plus Newton diagnostics.
#[derive(Debug, Clone)]
pub struct AlphaSolution {
    pub spline: Spline,
    pub newton: NewtonReport,
}

/// Optimal spline for the α-family point mass by damped Newton on the
/// junction equations, started from the Gaussian (α = 1) spline.
pub fn solve_alpha(particle: &AlphaParticle, ms: &MeasurementSet) -> Result<Spline> {
    solve_alpha_with(particle, ms, NewtonOptions::default()).map(|s| s.spline)
}

pub fn solve_alpha_with(particle: &AlphaParticle, ms: &MeasurementSet, opts: NewtonOptions) -> Result<AlphaSolution> {
    if particle.alpha < 1 {
        return Err(Error::InvalidParameter("alpha must be >= 1".into()));
    }
    if ms.n_y() != 1 {
        return Err(Error::DimensionMismatch {
            context: "alpha-family measurements".into(),
            expected: "1".into(),
            got: ms.n_y().to_string(),
        });
    }
    let kk = ms.intervals();
    let lay = Layout { k: kk };
    let prob = Problem {
        p: particle.odd_power() as i64,
        coef: particle.alpha as f64 / particle.sigma_p.powi(2 * particle.alpha as i32),
        var_m: particle.sigma_m * particle.sigma_m,
        ms,
        lay,
    };

    let (_, lgs) = preset_double_integrator(particle.sigma_p, particle.sigma_m)?;
    let start = solve_spline(&lgs, ms)?;
    let l = &prob.lay;
    let mut z = DVector::zeros(l.len());
    for k in 0..=kk {
        z[l.x(k)] = start.knots.x[k][0];
        z[l.v(k)] = start.knots.x[k][1];
    }
    for k in 0..kk {
        z[l.va(k)] = start.segment_state(k, ms.times()[k])?.v[0];
        z[l.vb(k)] = start.segment_state(k, ms.times()[k + 1])?.v[0];
    }

    let report = damped_newton(
        &mut z,
        |z| Ok(prob.residual(z)),
        |z, r| lu_solve(&prob.jacobian(z), &(-r)),
        opts,
    )?;

    let times = ms.times();
    let mut segments = Vec::with_capacity(kk);
    let mut lambda_minus = vec![DVector::zeros(2)];
    let mut lambda_plus = Vec::with_capacity(kk + 1);
    for k in 0..kk {
        let h = ms.gap(k);
        let la = prob.lam(z[l.va(k)]);
        let lb = prob.lam(z[l.vb(k)]);
        let a = (lb - la) / h;
        let seg = AlphaSegment::new(
            times[k],
            times[k + 1],
            particle.alpha,
            particle.sigma_p,
            a,
            la,
            [z[l.x(k)], z[l.v(k)]],
        );
        lambda_plus.push(DVector::from_vec(vec![-a, la]));
        lambda_minus.push(DVector::from_vec(vec![-a, lb]));
        segments.push(Segment::Alpha(seg));
    }
    lambda_plus.push(DVector::zeros(2));
    let x: Vec<DVector<f64>> = (0..=kk).map(|k| DVector::from_vec(vec![z[l.x(k)], z[l.v(k)]])).collect();
    let w: Vec<DVector<f64>> = (0..=kk).map(|k| &ms.values()[k] - DVector::from_element(1, x[k][0])).collect();
    let knots = KnotValues {
        xdot: x.iter().map(|xk| DVector::from_vec(vec![xk[1], 0.0])).collect(),
        v: vec![DVector::zeros(1); kk + 1],
        eta: w.iter().map(|wk| wk / prob.var_m).collect(),
        lambda: vec![DVector::zeros(2); kk + 1],
        x,
        w,
        lambda_minus,
        lambda_plus,
    };
    Ok(AlphaSolution {
        spline: Spline {
            times: times.to_vec(),
            model: None,
            segments,
            knots,
        },
        newton: report,
    })
}

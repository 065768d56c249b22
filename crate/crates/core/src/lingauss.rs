//! Closed-form optimal splines for linear dynamics with Gaussian noise.
//!
//! On each interval the costate obeys `λ̇ = -Aᵀλ` and `v = Q Bᵀ λ`, so a
//! segment is fixed by two constant vectors `(c_λ, c_x)`. Knot continuity
//! and the costate jump conditions give a square linear system in them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, VanLoan};
use crate::model::{LinearGaussianSystem, MeasurementSet};
use crate::spline::{KnotValues, LinearModel, LinearSegment, Segment, Spline};

/// `∫₀^Δ e^{-As} B Q Bᵀ e^{-Aᵀs} ds` via the block exponential.
pub fn segment_gramian(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("segment length {delta} < 0")));
    }
    let w = b * q * b.transpose();
    Ok(VanLoan::new(a, &w, delta)?.gramian())
}

struct Propagators {
    segs: Vec<VanLoan>,
    /// `Cᵀ (D R Dᵀ)⁻¹`.
    ct_sinv: DMatrix<f64>,
    s_inv: DMatrix<f64>,
}

fn propagators(lgs: &LinearGaussianSystem, ms: &MeasurementSet) -> Result<Propagators> {
    lgs.validate()?;
    if ms.n_y() != lgs.n_y() {
        return Err(Error::DimensionMismatch {
            context: "measurement vectors vs C rows".into(),
            expected: lgs.n_y().to_string(),
            got: ms.n_y().to_string(),
        });
    }
    let w = lgs.process_spread();
    let segs = (0..ms.intervals())
        .map(|k| VanLoan::new(&lgs.a, &w, ms.gap(k)))
        .collect::<Result<Vec<_>>>()?;
    let s_inv = lgs.measurement_precision()?;
    Ok(Propagators {
        segs,
        ct_sinv: lgs.c.transpose() * &s_inv,
        s_inv,
    })
}

/// Junction system `M u = b` with `u = (c_λ_0, c_x_0, …, c_λ_{K-1}, c_x_{K-1})`.
///
/// Rows, ordered by knot: the costate jump at every knot with `η`
/// eliminated, `w_k λ(t_k⁺) - w_{k-1} λ(t_k⁻) - CᵀS⁻¹C x(t_k) = -CᵀS⁻¹y_k`
/// where `S = D R Dᵀ` and `λ(t_0⁻) = λ(t_K⁺) = 0`, interleaved with state
/// continuity at the interior knots.
pub fn assemble_junction_system(lgs: &LinearGaussianSystem, ms: &MeasurementSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = propagators(lgs, ms)?;
    Ok(assemble(lgs, ms, &p))
}

fn assemble(lgs: &LinearGaussianSystem, ms: &MeasurementSet, p: &Propagators) -> (DMatrix<f64>, DVector<f64>) {
    let n = lgs.n_x();
    let kk = ms.intervals();
    let dim = 2 * n * kk;
    let mut m = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let lam = |k: usize| 2 * n * k;
    let cx = |k: usize| 2 * n * k + n;
    let ctsc = &p.ct_sinv * &lgs.c;
    let mut row = 0;
    for k in 0..=kk {
        if k > 0 && k < kk {
            // Φ c_x + e^{AΔ}G c_λ of segment k-1 meets c_x of segment k
            let s = &p.segs[k - 1];
            m.view_mut((row, cx(k - 1)), (n, n)).copy_from(&s.phi);
            m.view_mut((row, lam(k - 1)), (n, n)).copy_from(&s.coupling);
            for i in 0..n {
                m[(row + i, cx(k) + i)] -= 1.0;
            }
            row += n;
        }
        if k < kk {
            let wk = ms.interval_weight(k);
            for i in 0..n {
                m[(row + i, lam(k) + i)] += wk;
            }
        }
        if k > 0 {
            let wprev = ms.interval_weight(k - 1);
            let s = &p.segs[k - 1];
            let mut blk = m.view_mut((row, lam(k - 1)), (n, n));
            blk -= &s.psi * wprev;
        }
        // -CᵀS⁻¹C x(t_k)
        if k < kk {
            let mut blk = m.view_mut((row, cx(k)), (n, n));
            blk -= &ctsc;
        } else {
            let s = &p.segs[kk - 1];
            let mut blk = m.view_mut((row, cx(kk - 1)), (n, n));
            blk -= &ctsc * &s.phi;
            let mut blk = m.view_mut((row, lam(kk - 1)), (n, n));
            blk -= &ctsc * &s.coupling;
        }
        rhs.rows_mut(row, n).copy_from(&(-(&p.ct_sinv * &ms.values()[k])));
        row += n;
    }
    debug_assert_eq!(row, dim);
    (m, rhs)
}

/// Optimal spline for a linear-Gaussian system.
pub fn solve_spline(lgs: &LinearGaussianSystem, ms: &MeasurementSet) -> Result<Spline> {
    let p = propagators(lgs, ms)?;
    let (mut m, mut rhs) = assemble(lgs, ms, &p);
    // row equilibration: jump rows scale with 1/σ_m², continuity rows do not
    for i in 0..m.nrows() {
        let s = m.row(i).amax();
        if s > 0.0 {
            m.row_mut(i).scale_mut(1.0 / s);
            rhs[i] /= s;
        }
    }
    let u = lu_solve(&m, &rhs)?;
    let n = lgs.n_x();
    let kk = ms.intervals();
    let times = ms.times();
    let mut segments = Vec::with_capacity(kk);
    let mut x = Vec::with_capacity(kk + 1);
    let mut lambda_minus = vec![DVector::zeros(n)];
    let mut lambda_plus = Vec::with_capacity(kk + 1);
    for k in 0..kk {
        let c_lambda = u.rows(2 * n * k, n).into_owned();
        let c_x = u.rows(2 * n * k + n, n).into_owned();
        let s = &p.segs[k];
        x.push(c_x.clone());
        lambda_plus.push(c_lambda.clone());
        lambda_minus.push(&s.psi * &c_lambda);
        if k == kk - 1 {
            x.push(&s.phi * &c_x + &s.coupling * &c_lambda);
        }
        segments.push(Segment::LinearGaussian(LinearSegment {
            t_start: times[k],
            t_end: times[k + 1],
            c_lambda,
            c_x,
        }));
    }
    lambda_plus.push(DVector::zeros(n));
    let rdt = &lgs.r * lgs.d.transpose();
    let mut eta = Vec::with_capacity(kk + 1);
    let mut w = Vec::with_capacity(kk + 1);
    for (xk, yk) in x.iter().zip(ms.values()) {
        let e = &p.s_inv * (yk - &lgs.c * xk);
        w.push(&rdt * &e);
        eta.push(e);
    }
    let knots = KnotValues {
        xdot: x.iter().map(|xk| &lgs.a * xk).collect(),
        v: vec![DVector::zeros(lgs.n_v()); kk + 1],
        lambda: vec![DVector::zeros(n); kk + 1],
        x,
        w,
        eta,
        lambda_minus,
        lambda_plus,
    };
    Ok(Spline {
        times: times.to_vec(),
        model: Some(LinearModel {
            a: lgs.a.clone(),
            b: lgs.b.clone(),
            q: lgs.q.clone(),
        }),
        segments,
        knots,
    })
}

/// Cubic-form constants of segment `k` for the point-mass model:
/// `x₁ = (a σ_p²/6) s³ + (b σ_p²/2) s² + c s + d`, `λ = (-a, a s + b)`,
/// `v = σ_p²(a s + b)`, with `s = t - t_k`.
pub fn cubic_coefficients(spline: &Spline, k: usize) -> Result<(f64, f64, f64, f64)> {
    let model = spline
        .model
        .as_ref()
        .ok_or_else(|| Error::WrongSystem("spline has no linear model".into()))?;
    let di_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let di_b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    if model.a != di_a || model.b != di_b {
        return Err(Error::WrongSystem(
            "cubic coefficients need the double-integrator model".into(),
        ));
    }
    match spline.segments.get(k) {
        Some(Segment::LinearGaussian(s)) => Ok((-s.c_lambda[0], s.c_lambda[1], s.c_x[1], s.c_x[0])),
        Some(_) => Err(Error::WrongSystem(format!("segment {k} is not linear-gaussian"))),
        None => Err(Error::InvalidParameter(format!("segment index {k} out of range"))),
    }
}

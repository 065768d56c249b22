//! Collocation for general nonlinear dynamics.
//!
//! On each interval `x` and `λ` are polynomials of degree `m - 1` given by
//! their values at `m` Gauss–Lobatto nodes; the state and costate equations
//! are imposed at the `m - 1` Gauss points in between (Gauss collocation,
//! superconvergent at the knots). Knot nodes carry the junction equations
//! with the measurement multiplier `η` and noise `w` kept as unknowns.
//! Unknowns are laid out knot, interval, knot, ... so the Jacobian is
//! banded.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::banded_fd_jacobian;
use crate::model::{MeasurementSet, StochasticSystem};
use crate::nonlinear::newton::{damped_newton, NewtonOptions, NewtonReport};
use crate::quadrature::{gauss_legendre, gauss_lobatto};
use crate::spline::{lagrange_basis, KnotValues, PolySegment, Segment, Spline};

/// Largest knot-value change accepted between `m` and `2m` nodes.
pub const MESH_CHANGE_TOL: f64 = 1e-6;
pub const MIN_NODES: usize = 3;
/// Node count used when the caller has no preference.
pub const DEFAULT_NODES: usize = 5;

#[derive(Debug, Clone)]
pub struct CollocationSolution {
    /// Solution on the refined mesh.
    pub spline: Spline,
    pub coarse: NewtonReport,
    pub fine: NewtonReport,
    /// Max knot-state change from `m` to `2m` nodes.
    pub knot_change: f64,
}

struct Interval {
    nodes: Vec<f64>,
    gauss: Vec<f64>,
    // basis values and t-derivatives at the Gauss points, [point][node]
    basis: Vec<Vec<f64>>,
    dbasis: Vec<Vec<f64>>,
}

struct Mesh<'a> {
    sys: &'a StochasticSystem,
    ms: &'a MeasurementSet,
    m: usize,
    // v kept as unknowns (no closed-form inverse gradient)
    explicit_v: bool,
    intervals: Vec<Interval>,
    knot_off: Vec<usize>,
    int_off: Vec<usize>,
    // offset of node j inside an interval block
    node_off: Vec<usize>,
    dim: usize,
}

impl<'a> Mesh<'a> {
    fn new(sys: &'a StochasticSystem, ms: &'a MeasurementSet, m: usize) -> Self {
        let (nx, ny, nw, nv) = (sys.n_x, sys.n_y, sys.n_w, sys.n_v);
        let explicit_v = sys.v_from_costate.is_none();
        let ev = if explicit_v { nv } else { 0 };
        let lob = gauss_lobatto(m);
        let (gl, _) = gauss_legendre(m - 1);
        let t = ms.times();
        let intervals = (0..ms.intervals())
            .map(|k| {
                let (a, b) = (t[k], t[k + 1]);
                let map = |xi: f64| a + 0.5 * (b - a) * (xi + 1.0);
                let mut nodes: Vec<f64> = lob.iter().map(|&xi| map(xi)).collect();
                nodes[0] = a;
                nodes[m - 1] = b;
                let gauss: Vec<f64> = gl.iter().map(|&xi| map(xi)).collect();
                let (basis, dbasis) = gauss.iter().map(|&tg| lagrange_basis(&nodes, tg)).unzip();
                Interval {
                    nodes,
                    gauss,
                    basis,
                    dbasis,
                }
            })
            .collect();
        let mut node_off = Vec::with_capacity(m);
        let mut size = 0;
        for j in 0..m {
            node_off.push(size);
            size += nx + ev + if j > 0 && j < m - 1 { nx } else { 0 };
        }
        let knot_size = nx + ny + nw + ev;
        let mut knot_off = Vec::new();
        let mut int_off = Vec::new();
        let mut pos = 0;
        for _ in 0..ms.intervals() {
            knot_off.push(pos);
            pos += knot_size;
            int_off.push(pos);
            pos += size;
        }
        knot_off.push(pos);
        pos += knot_size;
        Self {
            sys,
            ms,
            m,
            explicit_v,
            intervals,
            knot_off,
            int_off,
            node_off,
            dim: pos,
        }
    }

    fn ev(&self) -> usize {
        if self.explicit_v {
            self.sys.n_v
        } else {
            0
        }
    }

    fn knot_size(&self) -> usize {
        let s = self.sys;
        s.n_x + s.n_y + s.n_w + self.ev()
    }

    fn interval_size(&self) -> usize {
        (2 * self.m - 2) * self.sys.n_x + self.m * self.ev()
    }

    // positions within the unknown vector
    fn x_at(&self, k: usize, j: usize) -> usize {
        if j == 0 {
            self.knot_off[k]
        } else if j == self.m - 1 {
            self.knot_off[k + 1]
        } else {
            self.int_off[k] + self.node_off[j] + self.sys.n_x
        }
    }

    fn lambda_at(&self, k: usize, j: usize) -> usize {
        self.int_off[k] + self.node_off[j]
    }

    fn v_at(&self, k: usize, j: usize) -> usize {
        let interior = j > 0 && j < self.m - 1;
        self.int_off[k] + self.node_off[j] + self.sys.n_x * if interior { 2 } else { 1 }
    }

    fn eta_at(&self, k: usize) -> usize {
        self.knot_off[k] + self.sys.n_x
    }

    fn w_at(&self, k: usize) -> usize {
        self.eta_at(k) + self.sys.n_y
    }

    fn knot_v_at(&self, k: usize) -> usize {
        self.w_at(k) + self.sys.n_w
    }

    /// Lower and upper bandwidths of the residual Jacobian.
    fn bandwidths(&self) -> (usize, usize) {
        let (ks, is) = (self.knot_size(), self.interval_size());
        let mut kl = 0;
        let mut ku = 0;
        let mut widen = |r0: usize, r1: usize, c0: usize, c1: usize| {
            kl = kl.max(r1.saturating_sub(c0));
            ku = ku.max(c1.saturating_sub(r0));
        };
        let kk = self.ms.intervals();
        for k in 0..=kk {
            let r0 = self.knot_off[k];
            let c0 = if k > 0 { self.lambda_at(k - 1, self.m - 1) } else { r0 };
            let c1 = if k < kk { self.lambda_at(k, 0) + self.sys.n_x - 1 } else { r0 + ks - 1 };
            widen(r0, r0 + ks - 1, c0, c1);
        }
        for k in 0..kk {
            let r0 = self.int_off[k];
            widen(r0, r0 + is - 1, self.knot_off[k], self.knot_off[k + 1] + ks - 1);
        }
        (kl, ku)
    }

    fn slice(z: &DVector<f64>, at: usize, n: usize) -> DVector<f64> {
        z.rows(at, n).into_owned()
    }

    fn node_values(&self, z: &DVector<f64>, k: usize) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let (nx, nv) = (self.sys.n_x, self.sys.n_v);
        let x: Vec<_> = (0..self.m).map(|j| Self::slice(z, self.x_at(k, j), nx)).collect();
        let lam: Vec<_> = (0..self.m).map(|j| Self::slice(z, self.lambda_at(k, j), nx)).collect();
        let v = (0..self.m)
            .map(|j| {
                if self.explicit_v {
                    Self::slice(z, self.v_at(k, j), nv)
                } else {
                    let inv = self.sys.v_from_costate.as_ref().unwrap();
                    inv(self.intervals[k].nodes[j], &lam[j])
                }
            })
            .collect();
        (x, lam, v)
    }

    fn knot_v(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        match &self.sys.v_from_costate {
            Some(inv) => inv(self.ms.times()[k], &DVector::zeros(self.sys.n_x)),
            None => Self::slice(z, self.knot_v_at(k), self.sys.n_v),
        }
    }

    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let sys = self.sys;
        let (nx, ny, nw, nv) = (sys.n_x, sys.n_y, sys.n_w, sys.n_v);
        let t = self.ms.times();
        let kk = self.ms.intervals();
        let mut r = DVector::zeros(self.dim);
        for k in 0..=kk {
            let tk = t[k];
            let x = Self::slice(z, self.knot_off[k], nx);
            let eta = Self::slice(z, self.eta_at(k), ny);
            let w = Self::slice(z, self.w_at(k), nw);
            let vk = self.knot_v(z, k);
            let mut jump = sys.dh_dx.as_ref()(tk, &x).transpose() * &eta;
            if k < kk {
                jump += Self::slice(z, self.lambda_at(k, 0), nx) * self.ms.interval_weight(k);
            }
            if k > 0 {
                jump -= Self::slice(z, self.lambda_at(k - 1, self.m - 1), nx) * self.ms.interval_weight(k - 1);
            }
            let r25 = (sys.dlog_rho_w_dw)(tk, &w) + (sys.dxi_dw)(tk, &w).transpose() * &eta;
            let xdot = (sys.f)(tk, &x) + (sys.nu)(tk, &vk);
            let r28 = &self.ms.values()[k] - (sys.g)(tk, &xdot) - (sys.h)(tk, &x) - (sys.xi)(tk, &w);
            let o = self.knot_off[k];
            r.rows_mut(o, nx).copy_from(&jump);
            r.rows_mut(o + nx, nw).copy_from(&r25);
            r.rows_mut(o + nx + nw, ny).copy_from(&r28);
            if self.explicit_v {
                // λ(t_k) = 0 at the knot itself
                r.rows_mut(o + nx + nw + ny, nv).copy_from(&(sys.dlog_rho_v_dv)(tk, &vk));
            }
        }
        for k in 0..kk {
            let iv = &self.intervals[k];
            let (xs, lams, vs) = self.node_values(z, k);
            let mut o = self.int_off[k];
            for (g, &tg) in iv.gauss.iter().enumerate() {
                let mut x = DVector::zeros(nx);
                let mut xd = DVector::zeros(nx);
                let mut lam = DVector::zeros(nx);
                let mut lamd = DVector::zeros(nx);
                let mut v = DVector::zeros(nv);
                for j in 0..self.m {
                    let (l, dl) = (iv.basis[g][j], iv.dbasis[g][j]);
                    x.axpy(l, &xs[j], 1.0);
                    xd.axpy(dl, &xs[j], 1.0);
                    lam.axpy(l, &lams[j], 1.0);
                    lamd.axpy(dl, &lams[j], 1.0);
                    if self.explicit_v {
                        v.axpy(l, &vs[j], 1.0);
                    }
                }
                if !self.explicit_v {
                    v = self.sys.v_from_costate.as_ref().unwrap()(tg, &lam);
                }
                let r23 = &xd - (sys.f)(tg, &x) - (sys.nu)(tg, &v);
                let r22 = &lamd + (sys.df_dx)(tg, &x).transpose() * &lam;
                r.rows_mut(o, nx).copy_from(&r23);
                r.rows_mut(o + nx, nx).copy_from(&r22);
                o += 2 * nx;
            }
            if self.explicit_v {
                for j in 0..self.m {
                    let tj = iv.nodes[j];
                    let r21 = (sys.dlog_rho_v_dv)(tj, &vs[j]) + (sys.dnu_dv)(tj, &vs[j]).transpose() * &lams[j];
                    r.rows_mut(o, nv).copy_from(&r21);
                    o += nv;
                }
            }
        }
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(Error::NonFinite("collocation residual".into()))
        }
    }

    /// Samples a starting spline at this mesh's nodes.
    fn pack(&self, init: &Spline) -> Result<DVector<f64>> {
        init.check_times(self.ms)?;
        let sys = self.sys;
        let (nx, ny, nw, nv) = (sys.n_x, sys.n_y, sys.n_w, sys.n_v);
        if init.n_x() != nx {
            return Err(Error::DimensionMismatch {
                context: "initial guess state".into(),
                expected: nx.to_string(),
                got: init.n_x().to_string(),
            });
        }
        let mut z = DVector::zeros(self.dim);
        let kn = &init.knots;
        for k in 0..=self.ms.intervals() {
            z.rows_mut(self.knot_off[k], nx).copy_from(&kn.x[k]);
            if kn.eta[k].len() == ny {
                z.rows_mut(self.eta_at(k), ny).copy_from(&kn.eta[k]);
            }
            if kn.w[k].len() == nw {
                z.rows_mut(self.w_at(k), nw).copy_from(&kn.w[k]);
            }
            if self.explicit_v && kn.v[k].len() == nv {
                z.rows_mut(self.knot_v_at(k), nv).copy_from(&kn.v[k]);
            }
        }
        for k in 0..self.ms.intervals() {
            for j in 0..self.m {
                let st = init.segment_state(k, self.intervals[k].nodes[j])?;
                if j > 0 && j < self.m - 1 {
                    z.rows_mut(self.x_at(k, j), nx).copy_from(&st.x);
                }
                z.rows_mut(self.lambda_at(k, j), nx).copy_from(&st.lambda);
                if self.explicit_v && st.v.len() == nv {
                    z.rows_mut(self.v_at(k, j), nv).copy_from(&st.v);
                }
            }
        }
        Ok(z)
    }

    fn unpack(&self, z: &DVector<f64>) -> Spline {
        let sys = self.sys;
        let (nx, ny, nw) = (sys.n_x, sys.n_y, sys.n_w);
        let t = self.ms.times();
        let kk = self.ms.intervals();
        let segments: Vec<Segment> = (0..kk)
            .map(|k| {
                let (x, lambda, v) = self.node_values(z, k);
                Segment::Polynomial(PolySegment {
                    t_start: t[k],
                    t_end: t[k + 1],
                    nodes: self.intervals[k].nodes.clone(),
                    x,
                    lambda,
                    v,
                })
            })
            .collect();
        let zero = DVector::zeros(nx);
        let mut knots = KnotValues {
            x: Vec::new(),
            xdot: Vec::new(),
            v: Vec::new(),
            w: Vec::new(),
            eta: Vec::new(),
            lambda: vec![zero.clone(); kk + 1],
            lambda_minus: Vec::new(),
            lambda_plus: Vec::new(),
        };
        for k in 0..=kk {
            let x = Self::slice(z, self.knot_off[k], nx);
            let v = self.knot_v(z, k);
            knots.xdot.push((sys.f)(t[k], &x) + (sys.nu)(t[k], &v));
            knots.x.push(x);
            knots.v.push(v);
            knots.eta.push(Self::slice(z, self.eta_at(k), ny));
            knots.w.push(Self::slice(z, self.w_at(k), nw));
            knots.lambda_minus.push(if k > 0 {
                Self::slice(z, self.lambda_at(k - 1, self.m - 1), nx)
            } else {
                zero.clone()
            });
            knots.lambda_plus.push(if k < kk {
                Self::slice(z, self.lambda_at(k, 0), nx)
            } else {
                zero.clone()
            });
        }
        Spline {
            times: t.to_vec(),
            model: None,
            segments,
            knots,
        }
    }

    fn solve(&self, init: &Spline, opts: NewtonOptions) -> Result<(Spline, NewtonReport)> {
        let mut z = self.pack(init)?;
        let (kl, ku) = self.bandwidths();
        let report = damped_newton(
            &mut z,
            |z| self.residual(z),
            |z, r| {
                let mut f = |z: &DVector<f64>| self.residual(z);
                banded_fd_jacobian(&mut f, z, kl, ku)?.solve(&(-r))
            },
            opts,
        )?;
        Ok((self.unpack(&z), report))
    }
}

fn check_supported(sys: &StochasticSystem, ms: &MeasurementSet, m: usize) -> Result<()> {
    if m < MIN_NODES {
        return Err(Error::InvalidParameter(format!("collocation needs m >= {MIN_NODES} nodes, got {m}")));
    }
    if ms.n_y() != sys.n_y {
        return Err(Error::DimensionMismatch {
            context: "measurement dimension".into(),
            expected: sys.n_y.to_string(),
            got: ms.n_y().to_string(),
        });
    }
    // the knot costate is pinned to zero, which needs g independent of ẋ
    let probe = DVector::from_element(sys.n_x, 0.5);
    if ms.times().iter().any(|&t| !sys.g_is_zero_at(t, &probe)) {
        return Err(Error::WrongSystem(
            "collocation supports measurements that do not depend on ẋ".into(),
        ));
    }
    if sys.v_from_costate.is_none() {
        // the explicit path needs ∂lnρ_v/∂v to be locally invertible
        let v0 = DVector::zeros(sys.n_v);
        let g0 = (sys.dlog_rho_v_dv)(ms.times()[0], &v0);
        let step = 1e-6;
        let hess = DMatrix::from_fn(sys.n_v, sys.n_v, |i, j| {
            let mut vp = v0.clone();
            vp[j] += step;
            ((sys.dlog_rho_v_dv)(ms.times()[0], &vp)[i] - g0[i]) / step
        });
        if hess.determinant().abs() < 1e-12 || !hess.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("noise-gradient relation is not invertible in v".into()));
        }
    }
    Ok(())
}

/// Solves with `m` nodes per interval, re-solves with `2m` from that
/// solution, and accepts when knot states agree to [`MESH_CHANGE_TOL`].
pub fn solve_collocation(sys: &StochasticSystem, ms: &MeasurementSet, init: &Spline, m: usize) -> Result<Spline> {
    solve_collocation_with(sys, ms, init, m, NewtonOptions::default()).map(|s| s.spline)
}

pub fn solve_collocation_with(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    init: &Spline,
    m: usize,
    opts: NewtonOptions,
) -> Result<CollocationSolution> {
    check_supported(sys, ms, m)?;
    let (coarse_spline, coarse) = Mesh::new(sys, ms, m).solve(init, opts)?;
    let (spline, fine) = Mesh::new(sys, ms, 2 * m).solve(&coarse_spline, opts)?;
    let knot_change = coarse_spline
        .knots
        .x
        .iter()
        .zip(&spline.knots.x)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    if !(knot_change <= MESH_CHANGE_TOL) {
        return Err(Error::MeshNotConverged {
            change: knot_change,
            limit: MESH_CHANGE_TOL,
        });
    }
    Ok(CollocationSolution {
        spline,
        coarse,
        fine,
        knot_change,
    })
}

/// Single solve on a fixed mesh, without the refinement check.
pub fn solve_collocation_fixed(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    init: &Spline,
    m: usize,
    opts: NewtonOptions,
) -> Result<(Spline, NewtonReport)> {
    check_supported(sys, ms, m)?;
    Mesh::new(sys, ms, m).solve(init, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingauss::solve_spline;
    use crate::model::{preset_double_integrator, preset_pendulum};
    use crate::nonlinear::initial_guess;
    use crate::optimality::verify_spline;

    fn data(ys: &[f64], f0: f64) -> MeasurementSet {
        MeasurementSet::uniform(
            (0..ys.len()).map(|k| k as f64 / f0).collect(),
            ys.iter().map(|&y| DVector::from_element(1, y)).collect(),
            f0,
        )
        .unwrap()
    }

    #[test]
    fn layout_is_consistent() {
        let sys = preset_pendulum(1.0, 0.5).unwrap();
        let ms = data(&[0.0, 0.01, 0.02], 5.0);
        let mesh = Mesh::new(&sys, &ms, 4);
        assert_eq!(mesh.dim, 3 * mesh.knot_size() + 2 * mesh.interval_size());
        assert_eq!(mesh.lambda_at(0, 3) + 2, mesh.knot_off[1]);
    }

    #[test]
    fn pendulum_rest_is_fixed_point() {
        let sys = preset_pendulum(1.0, 0.5).unwrap();
        let ms = data(&[0.0; 6], 5.0);
        let init = initial_guess(&sys, &ms);
        let sol = solve_collocation_with(&sys, &ms, &init, 4, NewtonOptions::default()).unwrap();
        assert_eq!(sol.coarse.iterations, 0);
        assert!(sol.spline.knots.x.iter().all(|x| x.amax() == 0.0));
    }

    #[test]
    fn double_integrator_matches_closed_form() {
        let (sys, lgs) = preset_double_integrator(4.0, 1.0).unwrap();
        let ms = data(&[0.0, 1.3, 0.4, 2.0, 1.1, -0.5], 5.0);
        let exact = solve_spline(&lgs, &ms).unwrap();
        let init = initial_guess(&sys, &ms);
        let got = solve_collocation(&sys, &ms, &init, 5).unwrap();
        for (a, b) in got.knots.x.iter().zip(&exact.knots.x) {
            assert!((a - b).amax() < 1e-6, "{a} {b}");
        }
        let bundle = verify_spline(&sys, &ms, &got, 20).unwrap();
        assert!(bundle.passes(1e-6), "{bundle:?}");
    }

    #[test]
    fn explicit_noise_path_agrees() {
        let (mut sys, lgs) = preset_double_integrator(2.0, 1.0).unwrap();
        sys.v_from_costate = None;
        let ms = data(&[0.0, 0.7, 0.2, 1.0], 5.0);
        let exact = solve_spline(&lgs, &ms).unwrap();
        let got = solve_collocation(&sys, &ms, &initial_guess(&sys, &ms), 5).unwrap();
        for (a, b) in got.knots.x.iter().zip(&exact.knots.x) {
            assert!((a - b).amax() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn rejects_too_few_nodes() {
        let sys = preset_pendulum(1.0, 0.5).unwrap();
        let ms = data(&[0.0, 0.1], 5.0);
        let init = initial_guess(&sys, &ms);
        assert!(matches!(solve_collocation(&sys, &ms, &init, 2), Err(Error::InvalidParameter(_))));
    }
}

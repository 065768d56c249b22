use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::system::{MatFn, ScalarFn, StochasticSystem, VecFn};
use crate::rng::{NoiseSource, PROBE_STREAM};

/// Finite-difference step for Jacobian checks.
pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance for Jacobian checks.
pub const JACOBIAN_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub callback: String,
    pub probe: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub checks: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }

    fn flag(&mut self, callback: &str, probe: usize, message: String) {
        self.findings.push(Finding {
            callback: callback.to_string(),
            probe,
            message,
        });
    }
}

fn call_vec(f: &VecFn, t: f64, x: &DVector<f64>) -> Result<DVector<f64>, String> {
    catch_unwind(AssertUnwindSafe(|| f(t, x))).map_err(|_| "callback panicked".to_string())
}

fn call_mat(f: &MatFn, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>, String> {
    catch_unwind(AssertUnwindSafe(|| f(t, x))).map_err(|_| "callback panicked".to_string())
}

fn call_scalar(f: &ScalarFn, t: f64, x: &DVector<f64>) -> Result<f64, String> {
    catch_unwind(AssertUnwindSafe(|| f(t, x))).map_err(|_| "callback panicked".to_string())
}

struct Probe<'a> {
    report: &'a mut ValidationReport,
    index: usize,
    t: f64,
}

impl Probe<'_> {
    /// Evaluates a vector callback and its Jacobian at `x`, checking shapes,
    /// finiteness, and agreement with central differences.
    fn vector_pair(&mut self, name: &str, f: &VecFn, jac: &MatFn, x: &DVector<f64>, n_out: usize) {
        let t = self.t;
        self.report.checks += 1;
        let value = match call_vec(f, t, x) {
            Ok(v) => v,
            Err(m) => return self.report.flag(name, self.index, m),
        };
        if value.len() != n_out {
            return self.report.flag(
                name,
                self.index,
                format!("returned {} components, expected {n_out}", value.len()),
            );
        }
        if value.iter().any(|v| !v.is_finite()) {
            return self.report.flag(name, self.index, "non-finite output".into());
        }
        let jname = format!("d{name}");
        self.report.checks += 1;
        let j = match call_mat(jac, t, x) {
            Ok(j) => j,
            Err(m) => return self.report.flag(&jname, self.index, m),
        };
        if j.nrows() != n_out || j.ncols() != x.len() {
            return self.report.flag(
                &jname,
                self.index,
                format!("Jacobian is {}x{}, expected {n_out}x{}", j.nrows(), j.ncols(), x.len()),
            );
        }
        if j.iter().any(|v| !v.is_finite()) {
            return self.report.flag(&jname, self.index, "non-finite Jacobian".into());
        }
        let mut fd = DMatrix::zeros(n_out, x.len());
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += FD_STEP;
            xm[c] -= FD_STEP;
            match (call_vec(f, t, &xp), call_vec(f, t, &xm)) {
                (Ok(p), Ok(m)) if p.len() == n_out && m.len() == n_out => {
                    fd.set_column(c, &((p - m) / (2.0 * FD_STEP)));
                }
                _ => return self.report.flag(name, self.index, "evaluation failed near probe".into()),
            }
        }
        let err = (&j - &fd).amax();
        let scale = 1.0 + fd.amax();
        if err > JACOBIAN_RTOL * scale {
            self.report.flag(
                &jname,
                self.index,
                format!("Jacobian disagrees with finite differences by {err:.3e}"),
            );
        }
    }

    fn density_pair(&mut self, name: &str, logf: &ScalarFn, grad: &VecFn, x: &DVector<f64>) {
        let t = self.t;
        self.report.checks += 1;
        let value = match call_scalar(logf, t, x) {
            Ok(v) => v,
            Err(m) => return self.report.flag(name, self.index, m),
        };
        if !value.is_finite() {
            return self.report.flag(name, self.index, "non-finite log-density".into());
        }
        let gname = format!("d{name}");
        self.report.checks += 1;
        let g = match call_vec(grad, t, x) {
            Ok(g) => g,
            Err(m) => return self.report.flag(&gname, self.index, m),
        };
        if g.len() != x.len() {
            return self.report.flag(
                &gname,
                self.index,
                format!("gradient has {} components, expected {}", g.len(), x.len()),
            );
        }
        let mut err: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += FD_STEP;
            xm[c] -= FD_STEP;
            match (call_scalar(logf, t, &xp), call_scalar(logf, t, &xm)) {
                (Ok(p), Ok(m)) => {
                    let d = (p - m) / (2.0 * FD_STEP);
                    err = err.max((d - g[c]).abs());
                    scale = scale.max(1.0 + d.abs());
                }
                _ => return self.report.flag(name, self.index, "evaluation failed near probe".into()),
            }
        }
        if !(err <= JACOBIAN_RTOL * scale) {
            self.report.flag(
                &gname,
                self.index,
                format!("gradient disagrees with finite differences by {err:.3e}"),
            );
        }
    }
}

/// Evaluates every callback at `probes` pseudo-random points drawn from
/// `seed`, reporting shape mismatches, non-finite output, and Jacobians
/// that disagree with central differences. Never panics on a misbehaving
/// callback; failures become findings.
pub fn validate_system(sys: &StochasticSystem, probes: usize, seed: u64) -> ValidationReport {
    let mut report = ValidationReport {
        probes,
        ..Default::default()
    };
    let src = NoiseSource::new(seed, PROBE_STREAM);
    let mut counter = 0u64;
    let mut draw = |n: usize| {
        let v = DVector::from_fn(n, |i, _| src.normal(counter + i as u64));
        counter += n as u64;
        v
    };

    // log-densities at zero noise
    for (name, f, n) in [
        ("log_rho_v", &sys.log_rho_v, sys.n_v),
        ("log_rho_w", &sys.log_rho_w, sys.n_w),
    ] {
        report.checks += 1;
        match call_scalar(f, 0.0, &DVector::zeros(n)) {
            Ok(v) if v.is_finite() => {}
            Ok(_) => report.flag(name, 0, "non-finite at zero noise".into()),
            Err(m) => report.flag(name, 0, m),
        }
    }

    for p in 0..probes {
        let t = draw(1)[0];
        let x = draw(sys.n_x);
        let xdot = draw(sys.n_x);
        let v = draw(sys.n_v);
        let w = draw(sys.n_w);
        let mut probe = Probe {
            report: &mut report,
            index: p,
            t,
        };
        probe.vector_pair("f", &sys.f, &sys.df_dx, &x, sys.n_x);
        probe.vector_pair("nu", &sys.nu, &sys.dnu_dv, &v, sys.n_x);
        probe.vector_pair("g", &sys.g, &sys.dg_dxdot, &xdot, sys.n_y);
        probe.vector_pair("h", &sys.h, &sys.dh_dx, &x, sys.n_y);
        probe.vector_pair("xi", &sys.xi, &sys.dxi_dw, &w, sys.n_y);
        probe.density_pair("log_rho_v", &sys.log_rho_v, &sys.dlog_rho_v_dv, &v);
        probe.density_pair("log_rho_w", &sys.log_rho_w, &sys.dlog_rho_w_dw, &w);

        if let Some(inv) = &sys.v_from_costate {
            // v(λ) must satisfy the stationarity condition it claims to solve
            let lambda = draw(sys.n_x);
            report.checks += 1;
            match call_vec(inv, t, &lambda) {
                Ok(vv) if vv.len() == sys.n_v => {
                    let r = (sys.dlog_rho_v_dv)(t, &vv) + (sys.dnu_dv)(t, &vv).transpose() * &lambda;
                    let scale = 1.0 + lambda.amax();
                    if !(r.amax() <= 1e-8 * scale) {
                        report.flag(
                            "v_from_costate",
                            p,
                            format!("does not solve the stationarity condition (residual {:.3e})", r.amax()),
                        );
                    }
                }
                Ok(vv) => report.flag(
                    "v_from_costate",
                    p,
                    format!("returned {} components, expected {}", vv.len(), sys.n_v),
                ),
                Err(m) => report.flag("v_from_costate", p, m),
            }
        }
    }
    report
}

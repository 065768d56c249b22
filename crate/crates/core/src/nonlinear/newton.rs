use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Step halvings tried before giving up on an iteration.
    pub max_cuts: usize,
    /// Converged when the residual ∞-norm is at or below this.
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            max_cuts: 10,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    /// Residual ∞-norm before each iteration and at exit.
    pub history: Vec<f64>,
}

fn inf_norm(r: &DVector<f64>) -> f64 {
    r.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY })
}

/// Damped Newton on `F(z) = 0`.
///
/// `step(z, r)` returns the Newton correction solving `J(z) dz = -r`.
/// Each iteration halves the step (up to `max_cuts` times) until the
/// residual 2-norm decreases.
pub fn damped_newton<R, S>(z: &mut DVector<f64>, mut residual: R, mut step: S, opts: NewtonOptions) -> Result<NewtonReport>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    S: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut r = residual(z)?;
    let mut history = vec![inf_norm(&r)];
    let diverged = |iterations: usize, history: Vec<f64>| Error::NewtonDivergence {
        iterations,
        best_residual: history.iter().cloned().fold(f64::INFINITY, f64::min),
        history,
    };
    for it in 0..opts.max_iterations {
        let norm = *history.last().unwrap();
        if norm <= opts.tol {
            return Ok(NewtonReport {
                iterations: it,
                residual: norm,
                history,
            });
        }
        let dz = match step(z, &r) {
            Ok(dz) if dz.iter().all(|v| v.is_finite()) => dz,
            _ => return Err(diverged(it, history)),
        };
        let base = r.norm();
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=opts.max_cuts {
            let trial = &*z + &dz * t;
            if let Ok(rt) = residual(&trial) {
                let n = rt.norm();
                if n.is_finite() && n < base {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((zn, rn)) => {
                *z = zn;
                r = rn;
                history.push(inf_norm(&r));
            }
            None => return Err(diverged(it + 1, history)),
        }
    }
    let norm = *history.last().unwrap();
    if norm <= opts.tol {
        Ok(NewtonReport {
            iterations: opts.max_iterations,
            residual: norm,
            history,
        })
    } else {
        Err(diverged(opts.max_iterations, history))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn solves_cubic_system() {
        // x³ + y = 9, x - y = 1 has the root (2, 1)
        let f = |z: &DVector<f64>| Ok(DVector::from_vec(vec![z[0].powi(3) + z[1] - 9.0, z[0] - z[1] - 1.0]));
        let step = |z: &DVector<f64>, r: &DVector<f64>| {
            let j = DMatrix::from_row_slice(2, 2, &[3.0 * z[0] * z[0], 1.0, 1.0, -1.0]);
            Ok(j.lu().solve(&(-r)).unwrap())
        };
        let mut z = DVector::from_vec(vec![10.0, -3.0]);
        let rep = damped_newton(&mut z, f, step, NewtonOptions::default()).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-10 && (z[1] - 1.0).abs() < 1e-10);
        assert!(rep.iterations < 30);
    }

    #[test]
    fn reports_divergence() {
        // x² + 1 = 0 has no real root
        let f = |z: &DVector<f64>| Ok(DVector::from_element(1, z[0] * z[0] + 1.0));
        let step = |z: &DVector<f64>, r: &DVector<f64>| Ok(DVector::from_element(1, -r[0] / (2.0 * z[0])));
        let mut z = DVector::from_element(1, 0.5);
        match damped_newton(&mut z, f, step, NewtonOptions::default()) {
            Err(Error::NewtonDivergence { best_residual, history, .. }) => {
                assert!(best_residual >= 1.0);
                assert!(!history.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }
}

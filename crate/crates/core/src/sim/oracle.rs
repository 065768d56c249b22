//! Brute-force reference for linear-Gaussian problems: the negative
//! log-likelihood discretized by the trapezoid rule on a fine grid and
//! minimized as an equality-constrained quadratic program.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, BandedMatrix};
use crate::model::{LinearGaussianSystem, MeasurementSet};
use crate::sim::grid_steps;
use crate::spline::Spline;

/// Fine grid laid over the measurement intervals.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    pub dt: f64,
    /// Steps per measurement interval.
    pub steps: Vec<usize>,
    /// Grid times; knot `k` sits at `knot_index[k]`.
    pub times: Vec<f64>,
    pub knot_index: Vec<usize>,
}

impl OracleGrid {
    pub fn new(ms: &MeasurementSet, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt}")));
        }
        let t = ms.times();
        let mut steps = Vec::with_capacity(ms.intervals());
        let mut times = vec![t[0]];
        let mut knot_index = vec![0];
        for k in 0..ms.intervals() {
            let n = grid_steps(ms.gap(k), dt, "measurement gap vs dt")?;
            let h = ms.gap(k) / n as f64;
            for j in 1..n {
                times.push(t[k] + j as f64 * h);
            }
            times.push(t[k + 1]);
            knot_index.push(times.len() - 1);
            steps.push(n);
        }
        Ok(Self {
            dt,
            steps,
            times,
            knot_index,
        })
    }

    fn step(&self, ms: &MeasurementSet, k: usize) -> f64 {
        ms.gap(k) / self.steps[k] as f64
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub grid: OracleGrid,
    pub states: Vec<DVector<f64>>,
    /// Process noise at the grid nodes of each interval, both ends included.
    pub v: Vec<Vec<DVector<f64>>>,
    /// Discretized negative log-likelihood (up to constants).
    pub cost: f64,
}

impl OracleSolution {
    pub fn knot_states(&self) -> Vec<DVector<f64>> {
        self.grid.knot_index.iter().map(|&i| self.states[i].clone()).collect()
    }
}

struct Weights {
    q_inv: DMatrix<f64>,
    s_inv: DMatrix<f64>,
}

fn weights(lgs: &LinearGaussianSystem, ms: &MeasurementSet) -> Result<Weights> {
    lgs.validate()?;
    if ms.n_y() != lgs.n_y() {
        return Err(Error::DimensionMismatch {
            context: "measurement dimension".into(),
            expected: lgs.n_y().to_string(),
            got: ms.n_y().to_string(),
        });
    }
    Ok(Weights {
        q_inv: spd_inverse(&lgs.q, "Q")?,
        s_inv: lgs.measurement_precision()?,
    })
}

fn trapezoid_weight(j: usize, n: usize) -> f64 {
    if j == 0 || j == n {
        0.5
    } else {
        1.0
    }
}

/// Cost of a discrete path: `Σ_k w_k Σ_j c_j h ½ vᵀQ⁻¹v + Σ_k ½ rᵀS⁻¹r`.
fn cost_of(
    lgs: &LinearGaussianSystem,
    ms: &MeasurementSet,
    grid: &OracleGrid,
    w: &Weights,
    states: &[DVector<f64>],
    v: &[Vec<DVector<f64>>],
) -> f64 {
    let mut cost = 0.0;
    for k in 0..ms.intervals() {
        let h = grid.step(ms, k);
        let wk = ms.interval_weight(k);
        let n = grid.steps[k];
        for (j, vj) in v[k].iter().enumerate() {
            cost += wk * trapezoid_weight(j, n) * h * 0.5 * (vj.transpose() * &w.q_inv * vj)[0];
        }
    }
    for (k, &i) in grid.knot_index.iter().enumerate() {
        let r = &ms.values()[k] - &lgs.c * &states[i];
        cost += 0.5 * (r.transpose() * &w.s_inv * &r)[0];
    }
    cost
}

/// Minimizes the discretized cost over all grid states and noise values
/// subject to the trapezoid dynamics. The KKT system is ordered along the
/// grid so it is banded.
pub fn solve_discretized_mle(lgs: &LinearGaussianSystem, ms: &MeasurementSet, dt: f64) -> Result<OracleSolution> {
    let w = weights(lgs, ms)?;
    let grid = OracleGrid::new(ms, dt)?;
    let (nx, nv) = (lgs.n_x(), lgs.n_v());
    let eye = DMatrix::<f64>::identity(nx, nx);

    // column offsets of every block in grid order
    let mut x_at = vec![0usize; grid.times.len()];
    let mut v_at: Vec<Vec<usize>> = Vec::with_capacity(ms.intervals());
    let mut mu_at: Vec<Vec<usize>> = Vec::with_capacity(ms.intervals());
    let mut pos = nx;
    let mut gi = 0;
    for k in 0..ms.intervals() {
        let n = grid.steps[k];
        let mut vk = vec![pos];
        let mut mk = Vec::with_capacity(n);
        pos += nv;
        for _ in 0..n {
            mk.push(pos);
            pos += nx;
            vk.push(pos);
            pos += nv;
            gi += 1;
            x_at[gi] = pos;
            pos += nx;
        }
        v_at.push(vk);
        mu_at.push(mk);
    }
    let dim = pos;

    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = DVector::zeros(dim);
    let block = |trip: &mut Vec<(usize, usize, f64)>, r0: usize, c0: usize, m: &DMatrix<f64>, sym: bool| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    trip.push((r0 + i, c0 + j, v));
                    if sym {
                        trip.push((c0 + j, r0 + i, v));
                    }
                }
            }
        }
    };

    // measurement terms
    let ct_s = lgs.c.transpose() * &w.s_inv;
    let hx = &ct_s * &lgs.c;
    for (k, &i) in grid.knot_index.iter().enumerate() {
        block(&mut trip, x_at[i], x_at[i], &hx, false);
        let g = &ct_s * &ms.values()[k];
        rhs.rows_mut(x_at[i], nx).copy_from(&g);
    }
    // noise terms and dynamics
    let mut gi = 0;
    for k in 0..ms.intervals() {
        let n = grid.steps[k];
        let h = grid.step(ms, k);
        let wk = ms.interval_weight(k);
        let e_next = &eye - &lgs.a * (0.5 * h);
        let e_prev = -(&eye + &lgs.a * (0.5 * h));
        let e_v = &lgs.b * (-0.5 * h);
        for j in 0..=n {
            let hv = &w.q_inv * (wk * trapezoid_weight(j, n) * h);
            block(&mut trip, v_at[k][j], v_at[k][j], &hv, false);
        }
        for j in 0..n {
            let r = mu_at[k][j];
            block(&mut trip, r, x_at[gi], &e_prev, true);
            block(&mut trip, r, x_at[gi + 1], &e_next, true);
            block(&mut trip, r, v_at[k][j], &e_v, true);
            block(&mut trip, r, v_at[k][j + 1], &e_v, true);
            gi += 1;
        }
    }
    let z = BandedMatrix::from_triplets(dim, &trip).solve(&rhs)?;

    let states: Vec<DVector<f64>> = x_at.iter().map(|&c| z.rows(c, nx).into_owned()).collect();
    let v: Vec<Vec<DVector<f64>>> = v_at
        .iter()
        .map(|vk| vk.iter().map(|&c| z.rows(c, nv).into_owned()).collect())
        .collect();
    let cost = cost_of(lgs, ms, &grid, &w, &states, &v);
    Ok(OracleSolution { grid, states, v, cost })
}

/// Propagates the trapezoid dynamics from `x0` under the given noise values
/// and returns the discretized cost with the resulting states.
pub fn discretized_cost(
    lgs: &LinearGaussianSystem,
    ms: &MeasurementSet,
    dt: f64,
    x0: &DVector<f64>,
    v: &[Vec<DVector<f64>>],
) -> Result<(f64, Vec<DVector<f64>>)> {
    let w = weights(lgs, ms)?;
    let grid = OracleGrid::new(ms, dt)?;
    if v.len() != ms.intervals() || v.iter().zip(&grid.steps).any(|(vk, &n)| vk.len() != n + 1) {
        return Err(Error::DimensionMismatch {
            context: "noise samples per interval".into(),
            expected: "steps + 1 per interval".into(),
            got: format!("{:?}", v.iter().map(|vk| vk.len()).collect::<Vec<_>>()),
        });
    }
    let nx = lgs.n_x();
    let eye = DMatrix::<f64>::identity(nx, nx);
    let mut states = vec![x0.clone()];
    for k in 0..ms.intervals() {
        let h = grid.step(ms, k);
        let lhs = (&eye - &lgs.a * (0.5 * h))
            .lu();
        let fwd = &eye + &lgs.a * (0.5 * h);
        for j in 0..grid.steps[k] {
            let x = states.last().unwrap();
            let b = &fwd * x + &lgs.b * ((&v[k][j] + &v[k][j + 1]) * (0.5 * h));
            let next = lhs
                .solve(&b)
                .ok_or_else(|| Error::Singular("trapezoid step matrix".into()))?;
            states.push(next);
        }
    }
    Ok((cost_of(lgs, ms, &grid, &w, &states, v), states))
}

/// Noise values of a spline at the oracle grid nodes, taken from the
/// segment owning each interval so knot values are one-sided.
pub fn spline_noise_on_grid(spline: &Spline, ms: &MeasurementSet, dt: f64) -> Result<Vec<Vec<DVector<f64>>>> {
    let grid = OracleGrid::new(ms, dt)?;
    let t = ms.times();
    (0..ms.intervals())
        .map(|k| {
            let n = grid.steps[k];
            (0..=n)
                .map(|j| {
                    let tj = if j == n { t[k + 1] } else { t[k] + j as f64 * grid.step(ms, k) };
                    Ok(spline.segment_state(k, tj)?.v)
                })
                .collect()
        })
        .collect()
}

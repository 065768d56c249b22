#![allow(dead_code)]

use mlspline::model::{
    preset_double_integrator, LinearGaussianSystem, MeasurementSet, StochasticSystem, TimeHorizon,
};
use mlspline::rng::NoiseSource;
use mlspline::sim::{sample_measurements, simulate, Scheme, SimConfig};
use nalgebra::{DMatrix, DVector};

/// Preview-style scenario: point mass from rest at 10, σ_p = 4, σ_m = 1,
/// f0 = 5 on [0, 10].
pub fn preview_data(seed: u64) -> (StochasticSystem, LinearGaussianSystem, MeasurementSet) {
    let (sys, lgs) = preset_double_integrator(4.0, 1.0).unwrap();
    let cfg = SimConfig {
        dt: 0.01,
        horizon: TimeHorizon::new(0.0, 10.0).unwrap(),
        x0: vec![10.0, 0.0],
        sigma_p: 4.0,
        f0: 5.0,
        sigma_m: 1.0,
        seed,
        scheme: Scheme::PaperVerlet,
    };
    let traj = simulate(&cfg, &sys).unwrap();
    let ms = sample_measurements(&traj, 5.0, 1.0, seed).unwrap();
    (sys, lgs, ms)
}

pub fn scalar_data(times: &[f64], ys: &[f64]) -> MeasurementSet {
    MeasurementSet::new(
        times.to_vec(),
        ys.iter().map(|&y| DVector::from_element(1, y)).collect(),
        None,
    )
    .unwrap()
}

pub fn uniform_scalar(ys: &[f64], f0: f64) -> MeasurementSet {
    let times: Vec<f64> = (0..ys.len()).map(|k| k as f64 / f0).collect();
    MeasurementSet::uniform(times, ys.iter().map(|&y| DVector::from_element(1, y)).collect(), f0).unwrap()
}

/// Sequential draws from one stream.
pub struct Draws {
    src: NoiseSource,
    next: u64,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self {
            src: NoiseSource::new(seed, 99),
            next: 0,
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.next += 1;
        self.src.normal(self.next)
    }

    pub fn uniform(&mut self) -> f64 {
        self.next += 1;
        self.src.uniform(self.next)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

/// Random linear-Gaussian instance with `n_x <= 3`, `K <= 8` and gaps that
/// are multiples of 0.04 (so oracle grids down to 1e-3 fit).
pub fn random_instance(seed: u64) -> (LinearGaussianSystem, MeasurementSet) {
    let mut d = Draws::new(seed);
    let nx = 1 + d.below(3);
    let nv = 1 + d.below(nx);
    let ny = 1 + d.below(nx.min(2));
    let a = DMatrix::from_fn(nx, nx, |_, _| 0.6 * d.normal());
    let b = DMatrix::from_fn(nx, nv, |_, _| d.normal());
    let c = DMatrix::from_fn(ny, nx, |_, _| d.normal());
    let dm = DMatrix::identity(ny, ny);
    let q = DMatrix::from_diagonal(&DVector::from_fn(nv, |_, _| 0.5 + d.uniform()));
    let r = DMatrix::from_diagonal(&DVector::from_fn(ny, |_, _| 0.05 + 0.3 * d.uniform()));
    let lgs = LinearGaussianSystem::new(a, b, c, dm, q, r).unwrap();
    // enough knots to pin every state component
    let k = (nx + 1).max(3) + d.below(9 - (nx + 1).max(3));
    let mut times = vec![0.0];
    for _ in 0..k {
        let gap = 0.04 * (5 + d.below(11)) as f64;
        times.push(times.last().unwrap() + gap);
    }
    let values = (0..=k).map(|_| DVector::from_fn(ny, |_, _| d.normal())).collect();
    let ms = MeasurementSet::new(times, values, None).unwrap();
    (lgs, ms)
}

pub fn max_knot_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// `ln J` of a feasible perturbation of a point-mass solution: piecewise
/// constant noise offsets `dv[k]` on each interval plus an initial offset
/// `(dx0, dv0)`. The states move by the double integral of the offsets and
/// the measurement noise absorbs the change, so every constraint still
/// holds.
pub fn perturbed_log_objective(
    sys: &StochasticSystem,
    ms: &MeasurementSet,
    spline: &mlspline::spline::Spline,
    dv: &[f64],
    dx0: (f64, f64),
) -> f64 {
    let t = ms.times();
    let mut shift = vec![dx0];
    for k in 0..ms.intervals() {
        let h = t[k + 1] - t[k];
        let (p, v) = *shift.last().unwrap();
        shift.push((p + v * h + 0.5 * dv[k] * h * h, v + dv[k] * h));
    }
    let v_path = |k: usize, s: f64| {
        let mut v = spline.segment_state(k, s).unwrap().v;
        v[0] += dv[k];
        v
    };
    let w: Vec<DVector<f64>> = (0..ms.len())
        .map(|k| DVector::from_element(1, ms.values()[k][0] - spline.knots.x[k][0] - shift[k].0))
        .collect();
    mlspline::likelihood::log_objective(sys, ms, &v_path, &spline.knots.v, &w)
        .unwrap()
        .log_value
}

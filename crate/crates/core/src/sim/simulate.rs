use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fmt_f64, MeasurementSet, StochasticSystem, TimeHorizon};
use crate::rng::{NoiseSource, MEASUREMENT_STREAM, PROCESS_STREAM};

/// Tolerance for grid alignment of sample times.
pub const GRID_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `r += ṙ dt + ½ a dt²`, `ṙ += a dt` with `a ~ N(0, σ_p²)` per step,
    /// independent of `dt`.
    PaperVerlet,
    /// `x += dt (f + ν(σ_p ξ / √dt))`, `ξ ~ N(0, I)`: white noise with
    /// intensity `σ_p²`, consistent under grid refinement.
    EulerMaruyama,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::PaperVerlet => "paper-verlet",
            Scheme::EulerMaruyama => "euler-maruyama",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: TimeHorizon,
    pub x0: Vec<f64>,
    pub sigma_p: f64,
    pub f0: f64,
    pub sigma_m: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

/// Integer `n` with `n · step = span` to within [`GRID_RTOL`].
pub fn grid_steps(span: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = span / step;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > GRID_RTOL * n {
        return Err(Error::InvalidParameter(format!(
            "{what}: {span} is not an integer multiple of {step}"
        )));
    }
    Ok(n as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {}", self.dt)));
        }
        TimeHorizon::new(self.horizon.t0, self.horizon.tk)?;
        if !(self.f0 > 0.0) || !self.f0.is_finite() {
            return Err(Error::InvalidParameter(format!("f0 = {}", self.f0)));
        }
        for (name, s) in [("sigma_p", self.sigma_p), ("sigma_m", self.sigma_m)] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {s}")));
            }
        }
        grid_steps(self.horizon.length(), self.dt, "horizon vs dt")?;
        grid_steps(1.0 / self.f0, self.dt, "sample period vs dt")?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon.length() / self.dt).round() as usize
    }
}

/// States on a uniform grid, with the process-noise draw applied on each
/// step (one fewer than the number of states).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    /// Index of the grid point at time `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let t0 = self.times[0];
        let dt = (self.times[self.len() - 1] - t0) / (self.len() - 1).max(1) as f64;
        let i = ((t - t0) / dt).round();
        if i < 0.0 || i as usize >= self.len() {
            return None;
        }
        let i = i as usize;
        ((self.times[i] - t).abs() <= GRID_RTOL * dt.max(t.abs())).then_some(i)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_x()).map(|i| format!("x{i}")));
        wtr.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `t,x1,...,xn`; noise draws are not stored in the file.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::Csv("expected header t,x1,...,xn".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))?;
            times.push(nums[0]);
            states.push(DVector::from_column_slice(&nums[1..]));
        }
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Csv("trajectory times must be increasing with at least 2 rows".into()));
        }
        Ok(Self {
            times,
            states,
            noise: Vec::new(),
        })
    }
}

// probe points for the structural check of the Verlet scheme
const PROBES: [[f64; 3]; 3] = [[0.3, -1.2, 0.7], [2.0, 0.5, -1.1], [-0.4, 3.0, 0.2]];

fn is_point_mass(sys: &StochasticSystem) -> bool {
    if sys.n_x != 2 || sys.n_v != 1 {
        return false;
    }
    PROBES.iter().all(|p| {
        let x = DVector::from_vec(vec![p[0], p[1]]);
        let v = DVector::from_element(1, p[2]);
        let f = (sys.f)(0.0, &x);
        let nu = (sys.nu)(0.0, &v);
        f.len() == 2 && nu.len() == 2 && f[0] == p[1] && f[1] == 0.0 && nu[0] == 0.0 && nu[1] == p[2]
    })
}

/// Simulates `sys` on the grid `t0 + i dt`. Draws are addressed by
/// `(seed, step, component)`, so the run is bit-reproducible.
pub fn simulate(cfg: &SimConfig, sys: &StochasticSystem) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.x0.len() != sys.n_x {
        return Err(Error::DimensionMismatch {
            context: "x0".into(),
            expected: sys.n_x.to_string(),
            got: cfg.x0.len().to_string(),
        });
    }
    if cfg.scheme == Scheme::PaperVerlet && !is_point_mass(sys) {
        return Err(Error::WrongSystem(
            "paper-verlet needs the point-mass structure ẋ₁ = x₂, ẋ₂ = v".into(),
        ));
    }
    let n = cfg.steps();
    let dt = cfg.dt;
    let t0 = cfg.horizon.t0;
    let src = NoiseSource::new(cfg.seed, PROCESS_STREAM);
    let nv = sys.n_v;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut noise = Vec::with_capacity(n);
    let mut x = DVector::from_vec(cfg.x0.clone());
    times.push(t0);
    states.push(x.clone());
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        let xi = DVector::from_fn(nv, |j, _| src.normal((i * nv + j) as u64));
        match cfg.scheme {
            Scheme::PaperVerlet => {
                let a = cfg.sigma_p * xi[0];
                x[0] += x[1] * dt + 0.5 * a * dt * dt;
                x[1] += a * dt;
                noise.push(DVector::from_element(1, a));
            }
            Scheme::EulerMaruyama => {
                let v = xi * (cfg.sigma_p / dt.sqrt());
                let dx = ((sys.f)(t, &x) + (sys.nu)(t, &v)) * dt;
                x += dx;
                noise.push(v);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation(format!("state diverged at t = {}", t + dt)));
        }
        times.push(t0 + (i + 1) as f64 * dt);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states, noise })
}

/// Samples `y_k = x₁(t_k) + σ_m ξ_k` every `1/f0` starting at `t_0`.
pub fn sample_measurements(traj: &Trajectory, f0: f64, sigma_m: f64, seed: u64) -> Result<MeasurementSet> {
    sample_measurements_with(traj, &|x: &DVector<f64>| DVector::from_element(1, x[0]), f0, sigma_m, seed)
}

/// Samples `y_k = h(x(t_k)) + σ_m ξ_k` (independent components).
pub fn sample_measurements_with(
    traj: &Trajectory,
    h: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    f0: f64,
    sigma_m: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if traj.len() < 2 {
        return Err(Error::Simulation("trajectory has fewer than 2 points".into()));
    }
    let dt = traj.times[1] - traj.times[0];
    let stride = grid_steps(1.0 / f0, dt, "sample period vs trajectory grid")?;
    let src = NoiseSource::new(seed, MEASUREMENT_STREAM);
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < traj.len() {
        let y0 = h(&traj.states[i]);
        let k = times.len();
        let ny = y0.len();
        let y = DVector::from_fn(ny, |j, _| y0[j] + sigma_m * src.normal((k * ny + j) as u64));
        times.push(traj.times[i]);
        values.push(y);
        i += stride;
    }
    MeasurementSet::new(times, values, Some(f0))
}

/// Slope `(y_{k+1} - y_k)/(t_{k+1} - t_k)` on each interval.
pub fn finite_difference_velocity(ms: &MeasurementSet) -> Vec<DVector<f64>> {
    let (t, y) = (ms.times(), ms.values());
    (0..ms.intervals())
        .map(|k| (&y[k + 1] - &y[k]) / (t[k + 1] - t[k]))
        .collect()
}

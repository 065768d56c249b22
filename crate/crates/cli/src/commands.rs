use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use mlspline::model::{fmt_f64, MeasurementSet, TimeHorizon};
use mlspline::optimality::{verify_spline, ResidualBundle};
use mlspline::sim::{
    finite_difference_velocity, sample_measurements_with, simulate, Scheme, SimConfig, Trajectory,
};
use mlspline::spline::{eval_spline, Spline};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::preset::{read_json, Preset, PresetArgs, PresetConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METHODS: [&str; 4] = ["optimal-spline", "harmonic-spline", "cubic-spline", "finite-difference"];

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::config(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_measurements(path: &Path, f0: Option<f64>) -> Result<MeasurementSet, Failure> {
    let file = File::open(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(MeasurementSet::read_csv(file, f0)?)
}

// ---- simulate

/// Simulation run: the model keys plus the grid, initial state and seed.
/// `sigma_p` and `sigma_m` drive both the model and the noise draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub model: PresetConfig,
    pub dt: f64,
    pub t0: f64,
    pub tk: f64,
    pub x0: Vec<f64>,
    pub f0: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config scheme (paper-verlet | euler-maruyama).
    #[arg(long)]
    pub scheme: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    scheme: &'a str,
    preset: &'a str,
    params: &'a SimulateConfig,
    tool_version: &'a str,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg: SimulateConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &args.scheme {
        cfg.scheme = serde_json::from_value(serde_json::Value::String(s.clone()))
            .map_err(|_| Failure::config(format!("unknown scheme {s}; use paper-verlet or euler-maruyama")))?;
    }
    // noise-free runs are allowed: the densities are never evaluated while
    // simulating, so any positive scale builds the same dynamics
    let mut model = cfg.model.clone();
    for s in [&mut model.sigma_p, &mut model.sigma_m] {
        if *s == Some(0.0) {
            *s = Some(1.0);
        }
    }
    let preset = model.build()?;
    let sim = SimConfig {
        dt: cfg.dt,
        horizon: TimeHorizon::new(cfg.t0, cfg.tk).map_err(|e| Failure::config(e.to_string()))?,
        x0: cfg.x0.clone(),
        sigma_p: cfg.model.sigma_p.ok_or_else(|| Failure::config("config needs sigma_p"))?,
        f0: cfg.f0,
        sigma_m: cfg.model.sigma_m.ok_or_else(|| Failure::config("config needs sigma_m"))?,
        seed: cfg.seed,
        scheme: cfg.scheme,
    };
    sim.validate().map_err(|e| Failure::config(e.to_string()))?;
    let traj = simulate(&sim, preset.system())?;
    let ms = match &preset {
        Preset::Linear { lgs, .. } => {
            let c = lgs.c.clone();
            sample_measurements_with(&traj, &move |x: &DVector<f64>| &c * x, sim.f0, sim.sigma_m, sim.seed)?
        }
        _ => sample_measurements_with(
            &traj,
            &|x: &DVector<f64>| DVector::from_element(1, x[0]),
            sim.f0,
            sim.sigma_m,
            sim.seed,
        )?,
    };
    out_dir(&args.out)?;
    let mut w = create(&args.out.join("trajectory.csv"))?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("measurements.csv"))?;
    ms.write_csv(&mut w)?;
    w.flush()?;
    let manifest = Manifest {
        seed: cfg.seed,
        scheme: cfg.scheme.name(),
        preset: cfg.model.name()?,
        params: &cfg,
        tool_version: TOOL_VERSION,
    };
    write_json(&args.out.join("manifest.json"), &manifest)
}

// ---- enrich

#[derive(Debug, Args)]
pub struct EnrichArgs {
    #[arg(long)]
    pub measurements: PathBuf,
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Output directory for spline.json and samples.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Dense samples per measurement interval.
    #[arg(long, default_value_t = 100)]
    pub per_interval: usize,
    /// Collocation nodes per interval (pendulum).
    #[arg(long, default_value_t = mlspline::nonlinear::DEFAULT_NODES)]
    pub nodes: usize,
    /// Nominal sampling frequency; inferred from the data when absent.
    #[arg(long)]
    pub f0: Option<f64>,
}

fn write_samples(path: &Path, spline: &Spline, per_interval: usize) -> Result<(), Failure> {
    let samples = spline.dense_samples(per_interval)?;
    let (nx, nv) = (spline.n_x(), samples[0].1.v.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=nx).map(|i| format!("x{i}")));
    if nv == 1 {
        header.push("v".into());
    } else {
        header.extend((1..=nv).map(|i| format!("v{i}")));
    }
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for (t, p) in samples {
        let mut row = vec![fmt_f64(t)];
        row.extend(p.x.iter().chain(p.v.iter()).map(|v| fmt_f64(*v)));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_enrich(args: &EnrichArgs) -> Result<(), Failure> {
    let preset = args.preset.resolve()?.build()?;
    let ms = read_measurements(&args.measurements, args.f0)?;
    let spline = preset.solve(&ms, args.nodes)?;
    out_dir(&args.out)?;
    let mut w = create(&args.out.join("spline.json"))?;
    spline.write_json(&mut w)?;
    w.flush()?;
    write_samples(&args.out.join("samples.csv"), &spline, args.per_interval)
}

// ---- verify

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub spline: PathBuf,
    #[arg(long)]
    pub measurements: PathBuf,
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Largest residual accepted for every condition.
    #[arg(long, default_value_t = mlspline::optimality::VERIFY_TOL)]
    pub threshold: f64,
    /// Interior sample points per interval.
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub f0: Option<f64>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    threshold: f64,
    passed: bool,
    max_abs: f64,
    violations: Vec<String>,
    #[serde(flatten)]
    bundle: &'a ResidualBundle,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let preset = args.preset.resolve()?.build()?;
    let ms = read_measurements(&args.measurements, args.f0)?;
    let file = File::open(&args.spline).map_err(|e| Failure::config(format!("{}: {e}", args.spline.display())))?;
    let spline = Spline::read_json(file)?;
    let bundle = verify_spline(preset.system(), &ms, &spline, args.grid)?;
    let violations = bundle.violations(args.threshold);
    let report = VerifyReport {
        threshold: args.threshold,
        passed: violations.is_empty(),
        max_abs: bundle.max_abs(),
        violations: violations.clone(),
        bundle: &bundle,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::config(e.to_string()))?;
    println!("{text}");
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if violations.is_empty() {
        Ok(())
    } else {
        let detail: Vec<String> = violations
            .iter()
            .map(|k| format!("{k} = {:e}", bundle.get(k).unwrap_or(f64::INFINITY)))
            .collect();
        Err(Failure::invalid(format!(
            "optimality conditions violated above {:e}: {}",
            args.threshold,
            detail.join(", ")
        )))
    }
}

// ---- compare

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub measurements: PathBuf,
    /// Trajectory CSV with the true states.
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma-separated list from: optimal-spline, harmonic-spline,
    /// cubic-spline, finite-difference.
    #[arg(long, default_value = "optimal-spline,cubic-spline,finite-difference")]
    pub methods: String,
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Output directory for metrics.json and per-method CSVs.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = mlspline::nonlinear::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long)]
    pub f0: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub position_rmse: f64,
    /// Absent when the truth or the estimate has no velocity component.
    pub velocity_rmse: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Metrics {
    grid_points: usize,
    methods: Vec<MethodMetrics>,
}

fn parse_methods(list: &str) -> Result<Vec<String>, Failure> {
    let methods: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if methods.is_empty() {
        return Err(Failure::invalid(format!("no methods given; valid methods: {}", METHODS.join(", "))));
    }
    for m in &methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(Failure::invalid(format!(
                "unknown method {m}; valid methods: {}",
                METHODS.join(", ")
            )));
        }
    }
    Ok(methods)
}

// estimate (position, velocity) at each grid time
fn estimate(
    method: &str,
    base: &PresetConfig,
    ms: &MeasurementSet,
    grid: &[f64],
    nodes: usize,
) -> Result<Vec<(f64, Option<f64>)>, Failure> {
    if method == "finite-difference" {
        let slopes = finite_difference_velocity(ms);
        let (t, y) = (ms.times(), ms.values());
        return grid
            .iter()
            .map(|&s| {
                let k = ms.interval_of(s)?;
                let u = (s - t[k]) / (t[k + 1] - t[k]);
                Ok(((1.0 - u) * y[k][0] + u * y[k + 1][0], Some(slopes[k][0])))
            })
            .collect::<Result<_, mlspline::Error>>()
            .map_err(Failure::from);
    }
    let mut cfg = base.clone();
    match method {
        "harmonic-spline" => cfg.preset = Some("harmonic".into()),
        "cubic-spline" => cfg.preset = Some("double-integrator".into()),
        _ => {}
    }
    let spline = cfg.build()?.solve(ms, nodes)?;
    grid.iter()
        .map(|&s| {
            let p = eval_spline(&spline, s)?;
            Ok((p.x[0], (p.x.len() > 1).then(|| p.x[1])))
        })
        .collect::<Result<_, mlspline::Error>>()
        .map_err(Failure::from)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let methods = parse_methods(&args.methods)?;
    let base = args.preset.resolve()?;
    let ms = read_measurements(&args.measurements, args.f0)?;
    let file = File::open(&args.truth).map_err(|e| Failure::config(format!("{}: {e}", args.truth.display())))?;
    let truth = Trajectory::read_csv(file)?;
    let (t0, tk) = (ms.times()[0], *ms.times().last().unwrap());
    let slack = 1e-9 * (tk - t0);
    if truth.times[0] > t0 + slack || *truth.times.last().unwrap() < tk - slack {
        return Err(Failure::invalid("truth trajectory does not cover the measurement horizon"));
    }
    for &t in ms.times() {
        if truth.index_of(t).is_none() {
            return Err(Failure::invalid(format!("grid misalignment: measurement time {t} is not a truth grid node")));
        }
    }
    let idx: Vec<usize> = (0..truth.len())
        .filter(|&i| truth.times[i] >= t0 - slack && truth.times[i] <= tk + slack)
        .collect();
    let grid: Vec<f64> = idx.iter().map(|&i| truth.times[i].clamp(t0, tk)).collect();
    let has_velocity = truth.n_x() > 1;
    out_dir(&args.out)?;
    let mut rows = Vec::new();
    for method in &methods {
        let est = estimate(method, &base, &ms, &grid, args.nodes)?;
        let n = grid.len() as f64;
        let pos = (idx.iter().zip(&est).map(|(&i, e)| (e.0 - truth.states[i][0]).powi(2)).sum::<f64>() / n).sqrt();
        let vel = if has_velocity && est.iter().all(|e| e.1.is_some()) {
            let s: f64 = idx
                .iter()
                .zip(&est)
                .map(|(&i, e)| (e.1.unwrap() - truth.states[i][1]).powi(2))
                .sum();
            Some((s / n).sqrt())
        } else {
            None
        };
        let mut w = create(&args.out.join(format!("{method}.csv")))?;
        writeln!(w, "{}", if est[0].1.is_some() { "t,x1,x2" } else { "t,x1" })?;
        for (t, e) in grid.iter().zip(&est) {
            match e.1 {
                Some(v) => writeln!(w, "{},{},{}", fmt_f64(*t), fmt_f64(e.0), fmt_f64(v))?,
                None => writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(e.0))?,
            }
        }
        w.flush()?;
        rows.push(MethodMetrics {
            method: method.clone(),
            position_rmse: pos,
            velocity_rmse: vel,
        });
    }
    let metrics = Metrics {
        grid_points: grid.len(),
        methods: rows,
    };
    write_json(&args.out.join("metrics.json"), &metrics)?;
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

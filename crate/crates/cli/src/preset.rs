use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use mlspline::lingauss::solve_spline;
use mlspline::model::{
    preset_alpha_particle, preset_double_integrator, preset_harmonic, preset_pendulum, AlphaParticle,
    LinearGaussianSystem, MeasurementSet, StochasticSystem,
};
use mlspline::nonlinear::{initial_guess, solve_alpha, solve_collocation};
use mlspline::spline::Spline;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const PRESETS: [&str; 5] = ["double-integrator", "harmonic", "alpha", "pendulum", "linear-custom"];

/// Model selection as it appears in a config file. Every key is optional so
/// command-line flags can fill or override it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PresetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<u32>,
    /// Matrices for `linear-custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LinearGaussianSystem>,
}

#[derive(Debug, Clone, Args)]
pub struct PresetArgs {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// double-integrator | harmonic | alpha | pendulum | linear-custom
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "sigma-p")]
    pub sigma_p: Option<f64>,
    #[arg(long = "sigma-m")]
    pub sigma_m: Option<f64>,
    /// Natural frequency for the harmonic preset.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Integer exponent for the alpha preset.
    #[arg(long)]
    pub alpha: Option<u32>,
    /// JSON file with {a, b, c, d, q, r} for linear-custom.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

impl PresetArgs {
    /// Config file values overlaid with any flags.
    pub fn resolve(&self) -> Result<PresetConfig, Failure> {
        let mut cfg: PresetConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PresetConfig::default(),
        };
        self.overlay(&mut cfg)?;
        Ok(cfg)
    }

    pub fn overlay(&self, cfg: &mut PresetConfig) -> Result<(), Failure> {
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        if let Some(v) = self.sigma_p {
            cfg.sigma_p = Some(v);
        }
        if let Some(v) = self.sigma_m {
            cfg.sigma_m = Some(v);
        }
        if let Some(v) = self.omega {
            cfg.omega = Some(v);
        }
        if let Some(v) = self.alpha {
            cfg.alpha = Some(v);
        }
        if let Some(p) = &self.model {
            cfg.model = Some(read_json(p)?);
        }
        Ok(())
    }
}

pub enum Preset {
    Linear {
        system: StochasticSystem,
        lgs: LinearGaussianSystem,
    },
    Alpha(AlphaParticle),
    Pendulum(StochasticSystem),
}

fn need(v: Option<f64>, key: &str, preset: &str) -> Result<f64, Failure> {
    v.ok_or_else(|| Failure::config(format!("preset {preset} needs {key}")))
}

impl PresetConfig {
    pub fn name(&self) -> Result<&str, Failure> {
        self.preset
            .as_deref()
            .ok_or_else(|| Failure::config(format!("no preset given; choose one of {}", PRESETS.join(", "))))
    }

    pub fn build(&self) -> Result<Preset, Failure> {
        let name = self.name()?;
        let bad = |e: mlspline::Error| Failure::config(format!("preset {name}: {e}"));
        match name {
            "double-integrator" => {
                let (sp, sm) = (need(self.sigma_p, "sigma_p", name)?, need(self.sigma_m, "sigma_m", name)?);
                let (system, lgs) = preset_double_integrator(sp, sm).map_err(bad)?;
                Ok(Preset::Linear { system, lgs })
            }
            "harmonic" => {
                let (sp, sm) = (need(self.sigma_p, "sigma_p", name)?, need(self.sigma_m, "sigma_m", name)?);
                let omega = need(self.omega, "omega", name)?;
                let (system, lgs) = preset_harmonic(omega, sp, sm).map_err(bad)?;
                Ok(Preset::Linear { system, lgs })
            }
            "alpha" => {
                let (sp, sm) = (need(self.sigma_p, "sigma_p", name)?, need(self.sigma_m, "sigma_m", name)?);
                let alpha = self
                    .alpha
                    .ok_or_else(|| Failure::config("preset alpha needs alpha"))?;
                Ok(Preset::Alpha(preset_alpha_particle(alpha, sp, sm).map_err(bad)?))
            }
            "pendulum" => {
                let (sp, sm) = (need(self.sigma_p, "sigma_p", name)?, need(self.sigma_m, "sigma_m", name)?);
                Ok(Preset::Pendulum(preset_pendulum(sp, sm).map_err(bad)?))
            }
            "linear-custom" => {
                let lgs = self
                    .model
                    .clone()
                    .ok_or_else(|| Failure::config("preset linear-custom needs model matrices"))?;
                lgs.validate().map_err(bad)?;
                Ok(Preset::Linear {
                    system: lgs.to_stochastic(name),
                    lgs,
                })
            }
            other => Err(Failure::config(format!(
                "unknown preset {other}; choose one of {}",
                PRESETS.join(", ")
            ))),
        }
    }
}

impl Preset {
    pub fn system(&self) -> &StochasticSystem {
        match self {
            Preset::Linear { system, .. } => system,
            Preset::Alpha(p) => &p.system,
            Preset::Pendulum(s) => s,
        }
    }

    /// Closed form for linear presets, the α solver or collocation otherwise.
    pub fn solve(&self, ms: &MeasurementSet, nodes: usize) -> Result<Spline, Failure> {
        let out = match self {
            Preset::Linear { lgs, .. } => solve_spline(lgs, ms),
            Preset::Alpha(p) => solve_alpha(p, ms),
            Preset::Pendulum(sys) => solve_collocation(sys, ms, &initial_guess(sys, ms), nodes),
        };
        out.map_err(Failure::from)
    }
}

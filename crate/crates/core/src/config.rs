//! Run configuration: a single strict JSON document (unknown keys rejected)
//! from which every component of a run is built.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{FilipovicGeometry, GridSpec};
use crate::error::{Error, Result};
use crate::process::OUProcess;

fn default_x_max() -> f64 {
    4.0
}
fn default_n_points() -> usize {
    16
}
fn default_alpha() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Allowed constant-extrapolation range beyond x_max (defaults to x_max).
    #[serde(default)]
    pub max_extrapolation: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_max: default_x_max(),
            n_points: default_n_points(),
            alpha: default_alpha(),
            max_extrapolation: None,
        }
    }
}

fn default_sigma() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    1.0
}
fn default_dt_quadrature() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_dt_quadrature")]
    pub dt_quadrature: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            gamma: default_gamma(),
            dt_quadrature: default_dt_quadrature(),
        }
    }
}

fn default_n_paths() -> usize {
    200_000
}
fn default_seed() -> u64 {
    42
}
fn default_k_sigma() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            seed: default_seed(),
            k_sigma: default_k_sigma(),
        }
    }
}

fn default_degree() -> usize {
    16
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Payoff domain bound; when absent, 4× the forward level at the
    /// relevant maturity.
    #[serde(default)]
    pub domain_m: Option<f64>,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            degree: default_degree(),
            domain_m: None,
        }
    }
}

/// The validated run configuration.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub pricing: PricingConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.x_max, self.grid.n_points, self.grid.alpha)?;
        if !(self.noise.sigma >= 0.0) {
            return Err(Error::Config("noise.sigma must be ≥ 0".into()));
        }
        if !(self.noise.gamma > 0.0) {
            return Err(Error::Config("noise.gamma must be > 0".into()));
        }
        if !(self.noise.dt_quadrature > 0.0) {
            return Err(Error::Config("noise.dt_quadrature must be > 0".into()));
        }
        if self.mc.n_paths < 100 {
            return Err(Error::Config("mc.n_paths must be ≥ 100".into()));
        }
        if !(self.mc.k_sigma > 0.0) {
            return Err(Error::Config("mc.k_sigma must be > 0".into()));
        }
        if self.pricing.degree > crate::pricing::DEGREE_CAP {
            return Err(Error::Config(format!(
                "pricing.degree exceeds cap {}",
                crate::pricing::DEGREE_CAP
            )));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<FilipovicGeometry> {
        let grid = GridSpec::new(self.grid.x_max, self.grid.n_points, self.grid.alpha)?;
        Ok(match self.grid.max_extrapolation {
            Some(range) => FilipovicGeometry::with_extrapolation(grid, range),
            None => FilipovicGeometry::new(grid),
        })
    }

    pub fn ou_process(&self) -> Result<OUProcess> {
        OUProcess::with_exponential_kernel(
            self.geometry()?,
            self.noise.sigma,
            self.noise.gamma,
            self.noise.dt_quadrature,
        )
    }

    /// Hash of the resolved configuration, embedded in every report.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

//! Run manifests.

use greenop::fixtures::{generate_coefficients, Generator};
use greenop::io::{load_coefficients, GridSpec};
use greenop::operator::{default_delta, garding_constants, CoefficientSet, NormMode};
use greenop::solver::SolverConfig;
use greenop::{Error, SpaceTimeGrid};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Green,
    Cauchy,
    Offdiag,
    Gaussian,
    Coulomb,
    Gn,
    Norms,
    Solve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Green => "green",
            Self::Cauchy => "cauchy",
            Self::Offdiag => "offdiag",
            Self::Gaussian => "gaussian",
            Self::Coulomb => "coulomb",
            Self::Gn => "gn",
            Self::Norms => "norms",
            Self::Solve => "solve",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedSource {
    pub generator: Generator,
    #[serde(default)]
    pub seed: u64,
}

/// A coefficient manifest path or a named generator with its seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSource {
    Manifest(PathBuf),
    Generated(GeneratedSource),
}

fn default_kappa() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    400
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Must agree with the command line when present.
    #[serde(default)]
    pub command: Option<Command>,
    pub grid: GridSpec,
    #[serde(default)]
    pub coefficients: Option<CoefficientSource>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// `λ/(1+Λ)` of the coefficients when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub mode: Option<NormMode>,
    /// Root seed for probes and random fields.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rhs: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// A manifest with its location, so relative paths can be resolved.
#[derive(Debug, Clone)]
pub struct Run {
    pub manifest: RunManifest,
    pub base: PathBuf,
    pub grid: SpaceTimeGrid,
}

impl Run {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        let grid = manifest.grid.build()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, base, grid })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn coefficients(&self) -> Result<CoefficientSet, Error> {
        match &self.manifest.coefficients {
            None => Err(Error::InvalidArgument("this command needs a coefficient source".into())),
            Some(CoefficientSource::Manifest(p)) => load_coefficients(&self.resolve(p), &self.grid),
            Some(CoefficientSource::Generated(g)) => generate_coefficients(&g.generator, &self.grid, g.seed),
        }
    }

    pub fn solver_config(&self, coeffs: &CoefficientSet) -> SolverConfig {
        let m = &self.manifest;
        let delta = m.delta.unwrap_or_else(|| default_delta(&garding_constants(coeffs)));
        let mut cfg = SolverConfig::new(m.kappa, delta, m.tol).with_mode(m.mode.unwrap_or(NormMode::Inhomogeneous));
        cfg.max_iter = m.max_iter;
        cfg.seed = m.seed;
        cfg
    }

    /// Command parameters; `null` or absent means all defaults.
    pub fn params<T: DeserializeOwned + Default>(&self) -> Result<T, Error> {
        if self.manifest.params.is_null() {
            return Ok(T::default());
        }
        Ok(serde_json::from_value(self.manifest.params.clone())?)
    }

    pub fn required_params<T: DeserializeOwned>(&self) -> Result<T, Error> {
        if self.manifest.params.is_null() {
            return Err(Error::InvalidArgument("this command needs a params object".into()));
        }
        Ok(serde_json::from_value(self.manifest.params.clone())?)
    }
}

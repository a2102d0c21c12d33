//! TOML experiment configuration.

use std::path::Path;

use l1kde_core::{Density, DensitySpec, Kernel, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub density: Option<DensitySpec>,
    pub kernel: Option<KernelSpec>,
    pub simulate: Option<SimulateCfg>,
    pub blocks: Option<BlocksCfg>,
    pub depoisson: Option<DepoissonCfg>,
    pub expbound: Option<ExpboundCfg>,
    pub rates: Option<RatesCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub n: Vec<usize>,
    /// Explicit bandwidths, one per n; otherwise h = h_scale * n^h_exponent.
    pub h: Option<Vec<f64>>,
    pub h_exponent: Option<f64>,
    #[serde(default = "one")]
    pub h_scale: f64,
    pub replicates: usize,
    #[serde(default = "ks_max")]
    pub ks_max: f64,
    /// Tail-ratio grid evaluated on the last schedule point.
    #[serde(default)]
    pub tail_x: Vec<f64>,
    #[serde(default = "min_hits")]
    pub min_tail_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksCfg {
    pub n: usize,
    pub h: f64,
    #[serde(default = "psi_scale")]
    pub psi_scale: f64,
    #[serde(default = "alpha")]
    pub alpha: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepoissonCfg {
    pub n: usize,
    pub h: f64,
    pub replicates: usize,
    #[serde(default = "permutations")]
    pub permutations: usize,
    #[serde(default = "psi_scale")]
    pub psi_scale: f64,
    #[serde(default = "alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpboundCfg {
    pub n: usize,
    pub h: f64,
    pub lambdas: Vec<f64>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesCfg {
    pub example: u8,
    pub gamma: Option<f64>,
    pub n: Vec<usize>,
    pub h: Option<Vec<f64>>,
    #[serde(default = "third")]
    pub h_exponent: f64,
    #[serde(default = "one")]
    pub a_const: f64,
    #[serde(default = "asymptotic_psi")]
    pub psi_scale: f64,
}

fn one() -> f64 {
    1.0
}
fn ks_max() -> f64 {
    0.08
}
fn min_hits() -> usize {
    20
}
fn psi_scale() -> f64 {
    0.5
}
fn alpha() -> f64 {
    0.05
}
fn permutations() -> usize {
    999
}
fn third() -> f64 {
    -1.0 / 3.0
}
fn asymptotic_psi() -> f64 {
    256.0
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("missing key 'seed' (set it in the config or pass --seed)".into()))
    }

    pub fn density(&self) -> Result<Density, CliError> {
        let spec = self.density.clone().unwrap_or(DensitySpec::Uniform { lo: 0.0, hi: 1.0 });
        Ok(Density::new(spec)?)
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        Ok(self.kernel.clone().unwrap_or_default().build()?)
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| CliError::Config(format!("missing section [{name}]")))
    }
}

impl SimulateCfg {
    pub fn schedule(&self) -> Result<Vec<(usize, f64)>, CliError> {
        match (&self.h, self.h_exponent) {
            (Some(h), _) if h.len() == self.n.len() => Ok(self.n.iter().copied().zip(h.iter().copied()).collect()),
            (Some(_), _) => Err(CliError::Config("simulate.h must have one entry per simulate.n".into())),
            (None, Some(e)) => Ok(self.n.iter().map(|&n| (n, self.h_scale * (n as f64).powf(e))).collect()),
            (None, None) => Err(CliError::Config("missing key 'simulate.h' or 'simulate.h_exponent'".into())),
        }
    }
}

impl RatesCfg {
    pub fn schedule(&self) -> Result<Vec<(usize, f64)>, CliError> {
        match &self.h {
            Some(h) if h.len() == self.n.len() => Ok(self.n.iter().copied().zip(h.iter().copied()).collect()),
            Some(_) => Err(CliError::Config("rates.h must have one entry per rates.n".into())),
            None => Ok(self.n.iter().map(|&n| (n, (n as f64).powf(self.h_exponent))).collect()),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(if self.example == 1 { 0.7 } else { 0.5 })
    }
}

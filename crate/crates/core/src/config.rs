//! Experiment configuration (TOML), validation, and the run manifest that
//! stamps every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::regions::{GnVersion, RegionParams};
use crate::scalar_maps::{standard_map_f, CircleMap, Psi};

/// psi selection: a named built-in or explicit Fourier coefficients
/// (pairs [a_k, b_k] for k = 1, 2, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiSpec {
    Named(String),
    Fourier(Vec<[f64; 2]>),
}

impl PsiSpec {
    pub fn build(&self) -> Result<Psi> {
        match self {
            PsiSpec::Named(name) => match name.as_str() {
                "sin" => Ok(Psi::sine()),
                other => Err(Error::Config(format!(
                    "unknown psi \"{other}\"; use \"sin\" or a Fourier coefficient list"
                ))),
            },
            PsiSpec::Fourier(terms) => {
                if terms.is_empty() {
                    return Err(Error::Config("fourier coefficient list is empty".into()));
                }
                Ok(Psi::from_fourier(terms.iter().map(|t| (t[0], t[1])).collect()))
            }
        }
    }
}

fn default_a() -> f64 {
    0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub psi: PsiSpec,
    pub l: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    /// Use the conjugated standard map L sin(2 pi x) + 2x instead of
    /// L psi + a.
    #[serde(default)]
    pub standard_map: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
}

fn default_burn_in() -> usize {
    10_000
}

fn default_replicas() -> usize {
    16
}

fn default_grid() -> [usize; 3] {
    [32, 32, 64]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub n_steps: usize,
    #[serde(default = "default_replicas")]
    pub n_replicas: usize,
    #[serde(default = "default_grid")]
    pub grid: [usize; 3],
}

fn default_version() -> String {
    "thm2".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub c: f64,
    pub c0: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(default = "default_version")]
    pub version: String,
}

impl RegionSpec {
    pub fn build(&self) -> Result<RegionParams> {
        let version = match self.version.as_str() {
            "thm1" => GnVersion::OneScale,
            "thm2" => GnVersion::TwoScale,
            other => return Err(Error::Config(format!("unknown G_N version \"{other}\""))),
        };
        Ok(RegionParams { c: self.c, c0: self.c0, p: self.p, beta: self.beta, version })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub l_values: Vec<f64>,
    #[serde(default)]
    pub epsilon_values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Option<String>,
}

/// Full experiment configuration. Unknown keys are rejected at parse time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    pub noise: NoiseSpec,
    pub chain: ChainSpec,
    pub regions: RegionSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise.epsilon > 0.0 && self.noise.epsilon <= 0.5) {
            return Err(Error::Config(format!(
                "epsilon = {} out of (0, 1/2]",
                self.noise.epsilon
            )));
        }
        if self.map.l <= 1.0 {
            return Err(Error::Config(format!("L = {} must exceed 1", self.map.l)));
        }
        for &l in &self.sweep.l_values {
            if l <= 1.0 {
                return Err(Error::Config(format!("sweep L = {l} must exceed 1")));
            }
        }
        for &e in &self.sweep.epsilon_values {
            if !(e > 0.0 && e <= 0.5) {
                return Err(Error::Config(format!("sweep epsilon = {e} out of (0, 1/2]")));
            }
        }
        if !(self.regions.beta > 0.0 && self.regions.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta = {} out of (0, 1)",
                self.regions.beta
            )));
        }
        if self.chain.grid.contains(&0) {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if let Some(f) = &self.output.format {
            if f != "csv" && f != "json" {
                return Err(Error::Config(format!("unknown output format \"{f}\"")));
            }
        }
        self.map.psi.build()?;
        self.regions.build()?;
        Ok(())
    }

    /// The circle map selected by this configuration.
    pub fn build_map(&self) -> Result<CircleMap> {
        if self.map.standard_map {
            return Ok(standard_map_f(self.map.l));
        }
        Ok(CircleMap::new(self.map.psi.build()?, self.map.l, self.map.a))
    }
}

/// Provenance record for one run: a hash over the canonical configuration,
/// tool version and base seed. Wall-clock time is kept out of the hash and
/// out of data artifacts so reruns are byte-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub task_seeds: Vec<(String, u64)>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        let canonical = toml::to_string(config).expect("config serializes");
        let version = env!("CARGO_PKG_VERSION").to_string();
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hasher.update(version.as_bytes());
        hasher.update(config.noise.seed.to_le_bytes());
        let hash = hasher.finalize();
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        RunManifest {
            config_hash: hex[..16].to_string(),
            version,
            seed: config.noise.seed,
            task_seeds: Vec::new(),
        }
    }

    pub fn record_task(&mut self, name: &str, seed: u64) {
        self.task_seeds.push((name.to_string(), seed));
    }
}

pub const EXAMPLE_CONFIG: &str = r#"# randmap experiment configuration

[map]
psi = "sin"          # or a Fourier list: psi = [[1.0, 0.0], [0.0, 0.5]]
l = 10.0
a = 0.0
standard_map = false

[noise]
epsilon = 0.01
seed = 12345

[chain]
burn_in = 10000
n_steps = 1000000
n_replicas = 16
grid = [32, 32, 64]

[regions]
c = 0.01
c0 = 0.2
p = 0.4
beta = 0.5
version = "thm2"

[sweep]
l_values = [5.0, 10.0, 20.0]
epsilon_values = []

[output]
# path = "results.csv"
# format = "csv"
"#;

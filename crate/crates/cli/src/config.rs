use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qsmooth::classical::ForwardKind;
use qsmooth::hybrid::HybridForwardKind;
use qsmooth::magnetometer::MagnetometerConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ClassicalSmoother,
    HybridSmoother,
    Magnetometer,
    Hardy,
    Weakmeas,
}

/// Top-level file accepted by `run`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "empty_object")]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn one() -> usize {
    1
}

/// Deserializes with the failing key path in the error message.
pub fn parse_str<T: DeserializeOwned>(text: &str, prefix: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| schema_error(prefix, e))
}

pub fn parse_value<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| schema_error(prefix, e))
}

fn schema_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = e.path().to_string();
    let path = match (prefix.is_empty(), path.as_str()) {
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, _) => format!("{prefix}.{path}"),
    };
    CliError::Schema(format!("at '{path}': {}", e.into_inner()))
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_str(&text, "")
}

/// Classical signal on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// dx = −γx dt + √Q dW on a uniform grid.
    Ou {
        gamma: f64,
        #[serde(rename = "Q")]
        q: f64,
        points: usize,
        /// Grid bounds; ±6 stationary standard deviations by default.
        #[serde(default)]
        range: Option<[f64; 2]>,
    },
    /// Two-state chain x ∈ {0, 1} with rates 0→1 (`up`) and 1→0 (`down`).
    Telegraph { up: f64, down: f64 },
}

/// Poisson channel with intensity λ(x) = Σ_i c_i x^i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyChannel {
    pub name: String,
    pub coefficients: Vec<f64>,
}

/// Gaussian prior on the signal; the stationary law of the process by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mean: f64,
    pub var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalParams {
    pub process: ProcessSpec,
    pub channels: Vec<PolyChannel>,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub forward: ForwardKind,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub keep_densities: bool,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    /// Start of the simulated truth; drawn from the prior when absent.
    #[serde(default)]
    pub x0: Option<f64>,
    /// Directory holding record.csv and record.json to smooth instead of simulating.
    #[serde(default)]
    pub record: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinOp {
    Sx,
    Sy,
    Sz,
    Splus,
    Sminus,
    Identity,
}

/// Hamiltonian term c·x^power·Ô.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianTerm {
    pub op: SpinOp,
    pub coefficient: f64,
    #[serde(default)]
    pub x_power: u32,
}

/// Jump operator √rate·Ô.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpChannel {
    pub name: String,
    pub op: SpinOp,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpDissipator {
    pub op: SpinOp,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialSpin {
    /// m = +s.
    #[default]
    Up,
    /// m = −s.
    Down,
    /// Coherent state along +x.
    X,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridParams {
    pub process: ProcessSpec,
    /// Spin quantum number s; the quantum dimension is 2s + 1.
    #[serde(default = "half")]
    pub spin: f64,
    #[serde(default)]
    pub hamiltonian: Vec<HamiltonianTerm>,
    pub channels: Vec<OpChannel>,
    #[serde(default)]
    pub dissipators: Vec<OpDissipator>,
    #[serde(default = "default_observables")]
    pub observables: Vec<SpinOp>,
    #[serde(default)]
    pub initial: InitialSpin,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub forward: HybridForwardKind,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub keep_densities: bool,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub record: Option<PathBuf>,
}

fn half() -> f64 {
    0.5
}

fn default_observables() -> Vec<SpinOp> {
    vec![SpinOp::Sz]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MagnetometerAction {
    Simulate,
    Estimate,
    Benchmark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetometerParams {
    pub action: MagnetometerAction,
    #[serde(default = "MagnetometerConfig::benchmark_default")]
    pub model: MagnetometerConfig,
    #[serde(default)]
    pub record: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardyParams {
    /// One of CC, CD, DC, DD; all four when absent.
    #[serde(default)]
    pub outcome: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakmeasParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    pub shots: u64,
    /// "hardy:<outcome>" (N = 4) or "random".
    pub pair: String,
}

//! Resolved run configuration and the manifest written next to every output.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use conductance_lab::environment::{generate, read_environment, Defect, EnvironmentSpec, ModelParams, ModelTag};
use conductance_lab::harness::Functional;
use conductance_lab::{Environment, LabError, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

/// Everything that determines the data a run writes. Worker count and output
/// directory are execution details and live in [`Manifest::execution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub workers: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub env_id: Option<String>,
    pub outputs: Vec<String>,
    pub execution: Execution,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| LabError::Parse { what: "manifest", detail: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate an environment and validate it.
    GenEnv(SpecArgs),
    /// Validate an environment.
    Validate(EnvArgs),
    /// Simulate independent walks from one start.
    Simulate(SimulateArgs),
    /// Exact interval computations.
    Exact(ExactArgs),
    /// Estimate the diffusivity from endpoint variances.
    EstimateSigma(SigmaArgs),
    /// Classify sites as good or nice, or scan for nice-site density.
    ClassifySites(ClassifyArgs),
    /// Uniform-CLT sweep over a start-point window.
    VerifyUclt(UcltArgs),
    /// Repeat a run from its manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenEnv(_) => "gen-env",
            Command::Validate(_) => "validate",
            Command::Simulate(_) => "simulate",
            Command::Exact(_) => "exact",
            Command::EstimateSigma(_) => "estimate-sigma",
            Command::ClassifySites(_) => "classify-sites",
            Command::VerifyUclt(_) => "verify-uclt",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Homogeneous,
    IidPolynomial,
    BlockCounterexample,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SpecArgs {
    #[arg(long, value_enum, default_value = "homogeneous")]
    pub model: Model,
    /// Nearest-neighbour conductance of a homogeneous field.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// Range-2 conductance of a homogeneous field.
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long = "tail-k", default_value_t = 2.0)]
    pub tail_k: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tail_beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub block_eps: f64,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-20_000i64, 20_000])]
    pub window: Vec<i64>,
    /// Environment seed; defaults to the master seed.
    #[arg(long)]
    pub env_seed: Option<u64>,
    /// `edge:x:value` or `pair:x:y:value`; repeatable.
    #[arg(long = "defect")]
    pub defects: Vec<String>,
}

impl SpecArgs {
    pub fn to_spec(&self, master: u64) -> Result<EnvironmentSpec> {
        let window = match self.window.as_slice() {
            &[lo, hi] => (lo, hi),
            _ => return Err(LabError::InvalidSpec("--window takes two values".into())),
        };
        let seed = self.env_seed.unwrap_or(master);
        let mut spec = match self.model {
            Model::Homogeneous => {
                let mut profile = vec![self.c1];
                profile.extend(self.c2);
                EnvironmentSpec::homogeneous(profile, window, seed)
            }
            Model::IidPolynomial => EnvironmentSpec::iid_polynomial(self.kappa, self.tail_k, self.tail_beta, window, seed),
            Model::BlockCounterexample => EnvironmentSpec::block_counterexample(self.block_eps, window, seed),
        };
        for d in &self.defects {
            spec = spec.with_defect(d.parse::<Defect>()?);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EnvArgs {
    /// Environment file from `gen-env`; without it the field is generated
    /// from the model flags.
    #[arg(long = "env")]
    pub file: Option<PathBuf>,
    #[command(flatten)]
    pub spec: SpecArgs,
}

impl EnvArgs {
    pub fn load(&self, master: u64) -> Result<Environment> {
        match &self.file {
            Some(p) => read_environment(std::fs::File::open(p)?),
            None => generate(&self.spec.to_spec(master)?),
        }
    }
}

/// Shorthand used in reports for where a field came from.
pub fn describe(env: &Environment) -> String {
    let model = match &env.params {
        Some(ModelParams::Homogeneous { profile }) => format!("homogeneous {profile:?}"),
        Some(ModelParams::BlockCounterexample { block_eps }) => format!("block-counterexample eps={block_eps}"),
        Some(ModelParams::IidPolynomial) => {
            format!("iid-polynomial kappa={} K={} beta={}", env.kappa, env.tail_k, env.tail_beta)
        }
        None if env.model_tag == ModelTag::File => "file".to_string(),
        None => env.model_tag.to_string(),
    };
    format!("{model} window={:?} R={}", env.window(), env.truncation_radius())
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub x: i64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Also write every path in the binary dump format.
    #[arg(long)]
    pub dump: bool,
    #[arg(long, default_value_t = 6.0)]
    pub margin_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactOp {
    Escape,
    ExitDist,
    ExitTime,
    Confinement,
    CommuteCheck,
    ReversalCheck,
    Margin,
}

impl ExactOp {
    pub fn name(self) -> &'static str {
        match self {
            ExactOp::Escape => "escape",
            ExactOp::ExitDist => "exit-dist",
            ExactOp::ExitTime => "exit-time",
            ExactOp::Confinement => "confinement",
            ExactOp::CommuteCheck => "commute-check",
            ExactOp::ReversalCheck => "reversal-check",
            ExactOp::Margin => "margin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExactArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, value_enum)]
    pub op: ExactOp,
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    pub a: i64,
    #[arg(long, default_value_t = 10, allow_negative_numbers = true)]
    pub b: i64,
    /// Start site; defaults to the midpoint (every interior site for commute-check).
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<i64>,
    /// Boundary site for reversal-check; defaults to `b`.
    #[arg(long, allow_negative_numbers = true)]
    pub y: Option<i64>,
    /// Escape radius.
    #[arg(long = "L", visible_alias = "l", default_value_t = 10)]
    pub l: i64,
    #[arg(long, default_value_t = 2000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long)]
    pub two_sided: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SigmaArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 3000, 10_000])]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0i64])]
    pub starts: Vec<i64>,
    #[arg(long, default_value_t = 6.0)]
    pub margin_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[arg(long, default_value_t = 0.2)]
    pub eps: f64,
    /// Threshold table to load; built from Brownian samples when absent.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub threshold_samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub threshold_dt: f64,
    /// Bridge-correct Brownian sup statistics.
    #[arg(long)]
    pub bridge: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0i64])]
    pub sites: Vec<i64>,
    /// Run the nice-site density scan instead of classifying `--sites`.
    #[arg(long)]
    pub scan: bool,
    #[arg(long, default_value_t = 0.45)]
    pub nu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 4)]
    pub sites_per_interval: usize,
    /// Diffusivity; estimated when absent.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 4000)]
    pub sigma_paths: usize,
    #[arg(long, default_value_t = 1000)]
    pub mc: usize,
    #[arg(long, default_value_t = 1000)]
    pub surrogate_paths: usize,
    #[arg(long, default_value_t = 8)]
    pub metric_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct UcltArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// Start window exponent: starts range over `[-H n^alpha, H n^alpha]`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 4000, 16_000])]
    pub n_list: Vec<usize>,
    /// Catalogue functional; repeatable. Defaults to the whole catalogue.
    #[arg(long = "functional")]
    pub functionals: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    pub paths_per_start: usize,
    #[arg(long, default_value_t = 10.0)]
    pub grid_divisor: f64,
    #[arg(long, default_value_t = 32)]
    pub grid_extra: usize,
    #[arg(long, default_value_t = 100_000)]
    pub brownian_samples: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 4000)]
    pub sigma_paths: usize,
    /// Sites classified before the sweep, spread over the smallest-n window.
    #[arg(long, default_value_t = 3)]
    pub classify: usize,
    #[arg(long, default_value_t = 500)]
    pub classify_mc: usize,
    #[arg(long, default_value_t = 6.0)]
    pub margin_factor: f64,
}

impl UcltArgs {
    pub fn functionals(&self) -> Result<Vec<Functional>> {
        if self.functionals.is_empty() {
            return Ok(Functional::CATALOGUE.to_vec());
        }
        self.functionals.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

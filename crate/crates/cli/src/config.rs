//! Flat TOML experiment configuration.
//!
//! Every key is optional. Values are resolved as built-in default, then the
//! config file, then the `SEED` environment variable, then command-line flags.

use std::path::Path;

use dirform::basis::{synthesize_path, PathSample};
use dirform::cylindrical::{CylindricalFunction, SampleTime, Truncation};
use dirform::generator::{DriftSign, GeneratorConfig};
use dirform::spectral::{EigenvalueSequence, LambdaRule};
use dirform::weight::{WeightModel, WeightSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path dimension `d`.
    pub dimension: usize,
    /// Eigenvalue rule: `constant`, `power:<a>`, `log`, `geometric:<b>` or
    /// `table:<v1>,<v2>,...;hold|power:<a>`.
    pub lambda: String,
    /// Multiplies every eigenvalue.
    pub lambda_scale: f64,
    /// Weight potential: `zero`, `trig[:c[:a1,a2,..]]` or `bump[:kappa[:radius]]`.
    pub weight: String,
    /// `minus` (σ = -1) or `plus` (σ = +1).
    pub drift_sign: String,
    /// Grid level of sampled and start paths.
    pub grid_level: u32,
    /// Monte Carlo sample count, or ensemble size for simulations.
    pub samples: usize,
    pub seed: u64,
    /// Levels of dyadic points swept by `basis` and `lemma`.
    pub max_level: u32,
    /// Depth of the closability probe.
    pub probe_depth: u32,
    /// Haar levels kept in series at non-dyadic times.
    pub truncation_level: u32,
    /// First cylindrical function, in the polynomial syntax over `f_times`.
    pub f: String,
    pub f_times: Vec<String>,
    pub g: String,
    pub g_times: Vec<String>,
    /// Number of simulated Wiener coordinates `N`.
    pub truncation: usize,
    pub dt: f64,
    /// Simulation horizon; defaults to the last ladder time.
    pub horizon: Option<f64>,
    /// Times at which moment rates are measured; defaults to `4, 16, 64` times `dt`.
    pub ladder: Option<Vec<f64>>,
    /// Coordinates whose local moments are reported.
    pub indices: Vec<u64>,
    /// Wiener coordinates of the start path `τ`.
    pub start: Vec<f64>,
    /// Evaluation functional `x^v(γ(s))` for `moments`; both keys or neither.
    pub eval_coordinate: Option<usize>,
    pub eval_time: Option<String>,
    /// Write CSV tables next to the JSON report.
    pub csv: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            lambda: "power:0.5".into(),
            lambda_scale: 1.0,
            weight: "zero".into(),
            drift_sign: "minus".into(),
            grid_level: 6,
            samples: 10_000,
            seed: 0,
            max_level: 6,
            probe_depth: 24,
            truncation_level: 16,
            f: "x1".into(),
            f_times: vec!["1".into()],
            g: "x1".into(),
            g_times: vec!["1".into()],
            truncation: 8,
            dt: 1e-4,
            horizon: None,
            ladder: None,
            indices: vec![1, 2, 3],
            start: Vec::new(),
            eval_coordinate: None,
            eval_time: None,
            csv: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lambda(&self) -> Result<EigenvalueSequence, CliError> {
        let rule: LambdaRule = self.lambda.parse()?;
        Ok(EigenvalueSequence::new(rule, self.lambda_scale, self.dimension)?)
    }

    pub fn weight(&self) -> Result<WeightModel, CliError> {
        let spec: WeightSpec = self.weight.parse()?;
        Ok(spec.build(self.dimension)?)
    }

    pub fn drift_sign(&self) -> Result<DriftSign, CliError> {
        Ok(self.drift_sign.parse()?)
    }

    pub fn generator(&self) -> Result<GeneratorConfig, CliError> {
        let mut cfg = GeneratorConfig::new(self.lambda()?, self.weight()?)?.with_sign(self.drift_sign()?);
        cfg.truncation = Truncation {
            level: self.truncation_level,
        };
        Ok(cfg)
    }

    fn function(&self, text: &str, times: &[String]) -> Result<CylindricalFunction, CliError> {
        let times = times
            .iter()
            .map(|t| t.parse::<SampleTime>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CylindricalFunction::parse_polynomial(times, self.dimension, text)?)
    }

    pub fn f(&self) -> Result<CylindricalFunction, CliError> {
        self.function(&self.f, &self.f_times)
    }

    pub fn g(&self) -> Result<CylindricalFunction, CliError> {
        self.function(&self.g, &self.g_times)
    }

    pub fn start_path(&self) -> Result<PathSample, CliError> {
        Ok(synthesize_path(&self.start, self.grid_level, self.dimension)?)
    }

    pub fn ladder(&self) -> Vec<f64> {
        self.ladder
            .clone()
            .unwrap_or_else(|| dirform::simulate::default_ladder(self.dt))
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
            .unwrap_or_else(|| self.ladder().iter().copied().fold(0.0, f64::max))
    }

    /// Checks that do not need any numerical work.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.dimension == 0 {
            return Err(CliError::Config("dimension must be positive".into()));
        }
        if self.eval_coordinate.is_some() != self.eval_time.is_some() {
            return Err(CliError::Config(
                "eval_coordinate and eval_time must be given together".into(),
            ));
        }
        self.lambda()?;
        self.weight()?;
        self.drift_sign()?;
        Ok(())
    }
}

//! The generator `𝐀F = Σ_i λ_i [∂²_{S_i}F + (∂_{S_i}φ/φ) ∂_{S_i}F + σ 𝔊_i ∂_{S_i}F]`
//! on cylindrical functions with dyadic times, the drifts of coordinate and
//! evaluation functionals, and a Monte Carlo check of `ℰ(F,G) = ∫(-𝐀F) G φ dν`.
//!
//! Gaussian integration by parts fixes `σ = -1`; `σ = +1` is kept as
//! [`DriftSign::Plus`] for comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{schauder_scalar, wiener_coefficient, BasisIndex, PathSample};
use crate::cylindrical::{CylindricalFunction, FunctionClass, SampleTime, Truncation};
use crate::error::{Error, Result};
use crate::montecarlo::{column_estimates, sample_rows, Estimate, SamplerConfig};
use crate::spectral::{series_verdict, worst_chain_tail, EigenvalueSequence, Verdict};
use crate::weight::WeightModel;

/// Sign `σ` in front of `𝔊_i ∂_{S_i}F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    /// `σ = +1`.
    Plus,
    /// `σ = -1`, the Ornstein–Uhlenbeck drift.
    #[default]
    Minus,
}

impl DriftSign {
    pub fn sigma(self) -> f64 {
        match self {
            DriftSign::Plus => 1.0,
            DriftSign::Minus => -1.0,
        }
    }

    pub fn both() -> [DriftSign; 2] {
        [DriftSign::Minus, DriftSign::Plus]
    }
}

impl fmt::Display for DriftSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftSign::Plus => "plus",
            DriftSign::Minus => "minus",
        })
    }
}

impl FromStr for DriftSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plus" | "+" | "+1" => Ok(DriftSign::Plus),
            "minus" | "-" | "-1" => Ok(DriftSign::Minus),
            other => Err(Error::InvalidArgument(format!(
                "unknown drift sign {other:?} (expected minus or plus)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub lambda: EigenvalueSequence,
    pub weight: WeightModel,
    pub drift_sign: DriftSign,
    /// Truncation for series at non-dyadic times.
    pub truncation: Truncation,
}

impl GeneratorConfig {
    pub fn new(lambda: EigenvalueSequence, weight: WeightModel) -> Result<Self> {
        if lambda.dim() != weight.dim() {
            return Err(Error::InvalidArgument(format!(
                "eigenvalues are indexed for dimension {}, weight has dimension {}",
                lambda.dim(),
                weight.dim()
            )));
        }
        Ok(Self {
            lambda,
            weight,
            drift_sign: DriftSign::default(),
            truncation: Truncation::default(),
        })
    }

    pub fn with_sign(mut self, sign: DriftSign) -> Self {
        self.drift_sign = sign;
        self
    }

    pub fn dim(&self) -> usize {
        self.lambda.dim()
    }
}

/// The two parts of `𝐀F(γ)`: `symmetric = Σ λ_i [∂²F + (∂φ/φ) ∂F]` and
/// `coupling = Σ λ_i 𝔊_i ∂F`, so that `𝐀F = symmetric + σ coupling`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParts {
    pub symmetric: f64,
    pub coupling: f64,
}

impl GeneratorParts {
    pub fn value(&self, sign: DriftSign) -> f64 {
        self.symmetric + sign.sigma() * self.coupling
    }
}

fn require_y(f: &CylindricalFunction) -> Result<u32> {
    match (f.class(), f.dyadic_level()) {
        (FunctionClass::Y, Some(level)) => Ok(level),
        _ => Err(Error::Rejected(
            "the generator is only defined here for dyadic sample times; use evaluation_drift".into(),
        )),
    }
}

fn check_dims(f: &CylindricalFunction, path: &PathSample, cfg: &GeneratorConfig) -> Result<()> {
    if f.dim() != cfg.dim() || path.dim() != cfg.dim() {
        return Err(Error::InvalidArgument("dimension mismatch in generator input".into()));
    }
    Ok(())
}

/// Index set, stencil and eigenvalues for `𝐀F`; reusable across paths.
#[derive(Debug, Clone)]
pub struct GeneratorPlan {
    indices: Vec<u64>,
    stencil: crate::cylindrical::Stencil,
    lambdas: Vec<f64>,
}

impl GeneratorPlan {
    pub fn new(f: &CylindricalFunction, cfg: &GeneratorConfig) -> Result<Self> {
        require_y(f)?;
        if f.dim() != cfg.dim() {
            return Err(Error::InvalidArgument("dimension mismatch in generator input".into()));
        }
        let indices = f.index_set(0);
        Ok(Self {
            stencil: f.stencil(&indices),
            lambdas: indices.iter().map(|&i| cfg.lambda.value(i)).collect(),
            indices,
        })
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn parts(&self, f: &CylindricalFunction, path: &PathSample, cfg: &GeneratorConfig) -> Result<GeneratorParts> {
        check_dims(f, path, cfg)?;
        let der = f.derivatives(path, &self.stencil)?;
        let mut symmetric = 0.0;
        let mut coupling = 0.0;
        for (k, &i) in self.indices.iter().enumerate() {
            let (first, second) = (der.first[k], der.second[k]);
            if first == 0.0 && second == 0.0 {
                continue;
            }
            let l = self.lambdas[k];
            let log_phi = if first == 0.0 {
                0.0
            } else {
                cfg.weight.log_phi_directional(path, i)?
            };
            symmetric += l * (second + log_phi * first);
            if first != 0.0 {
                coupling += l * wiener_coefficient(path, i)? * first;
            }
        }
        Ok(GeneratorParts { symmetric, coupling })
    }
}

/// `𝐀F(γ)` for `F` with dyadic times. The path must resolve every index in
/// the support of `F`.
pub fn apply_generator(f: &CylindricalFunction, path: &PathSample, cfg: &GeneratorConfig) -> Result<f64> {
    let plan = GeneratorPlan::new(f, cfg)?;
    Ok(plan.parts(f, path, cfg)?.value(cfg.drift_sign))
}

/// Local drift of the Wiener coordinate `𝔊_i`: `λ_i [∂_{S_i}φ/φ + σ 𝔊_i]`.
pub fn coordinate_drift(index: u64, path: &PathSample, cfg: &GeneratorConfig) -> Result<f64> {
    let l = cfg.lambda.value(index);
    let g = wiener_coefficient(path, index)?;
    let a = cfg.weight.log_phi_directional(path, index)?;
    Ok(l * (a + cfg.drift_sign.sigma() * g))
}

/// Drift of `x^v(γ(s))` with its truncation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationDrift {
    pub value: f64,
    /// Number of basis indices summed.
    pub terms: usize,
    /// `None` for dyadic `s`, where the sum is exact.
    pub truncation_level: Option<u32>,
    /// Bound on the omitted terms; `None` when exact or when the weight
    /// declares no derivative bounds.
    pub tail_bound: Option<f64>,
    pub first_verdict: Option<Verdict>,
    pub second_verdict: Option<Verdict>,
}

/// `Σ_i λ_i S_i^v(s) [∂_{S_i}φ/φ + σ 𝔊_i(τ)]` for coordinate `v` (1-based).
///
/// For dyadic `s` the sum is finite and `τ` must resolve it. Otherwise the
/// series is truncated at Haar level `max(P, level(τ))`; beyond the grid of
/// `τ` the coordinates `𝔊_i(τ)` vanish, and the remaining terms are bounded
/// by `¼ sup|∇(Δf + |∇f|²)| Σ_{p>P} λ_{i_p} 4^-p`.
pub fn evaluation_drift(v: usize, s: SampleTime, path: &PathSample, cfg: &GeneratorConfig) -> Result<EvaluationDrift> {
    let d = cfg.dim();
    if v == 0 || v > d {
        return Err(Error::InvalidArgument(format!("coordinate {v} outside 1..={d}")));
    }
    if path.dim() != d {
        return Err(Error::InvalidArgument("dimension mismatch in generator input".into()));
    }
    let f = CylindricalFunction::coordinate(s, v, d)?;
    let sigma = cfg.drift_sign.sigma();
    let (levels, verdicts) = match s {
        SampleTime::Dyadic(q) => (q.level(), None),
        SampleTime::Real(_) => {
            let first = series_verdict(&cfg.lambda, 1);
            let second = series_verdict(&cfg.lambda, 2);
            if first != Verdict::Converges || second != Verdict::Converges {
                return Err(Error::Rejected(format!(
                    "drift of x^{v}(γ({s})) needs convergent series Σλ/2^p ({first}) and Σλ²/2^p ({second}) for {}",
                    cfg.lambda
                )));
            }
            (cfg.truncation.level.max(path.level()), Some((first, second)))
        }
    };
    let indices = f.index_set(levels);
    let mut value = 0.0;
    for &i in &indices {
        let idx = BasisIndex::new(i, d)?;
        let w = schauder_scalar(idx.rank(), s.value());
        if w == 0.0 {
            continue;
        }
        let g = if verdicts.is_some() && idx.resolution() > path.level() {
            0.0
        } else {
            wiener_coefficient(path, i)?
        };
        let a = cfg.weight.log_phi_directional(path, i)?;
        value += cfg.lambda.value(i) * w * (a + sigma * g);
    }
    let tail_bound = match verdicts {
        None => None,
        Some(_) if cfg.weight.is_trivial() => Some(0.0),
        Some(_) => match cfg.weight.potential().bounds() {
            Some(b) => worst_chain_tail(&cfg.lambda, v, 1, 2.0, levels)
                .map(|t| 0.25 * b.compensator_gradient_sup * t),
            None => None,
        },
    };
    Ok(EvaluationDrift {
        value,
        terms: indices.len(),
        truncation_level: verdicts.map(|_| levels),
        tail_bound,
        first_verdict: verdicts.map(|v| v.0),
        second_verdict: verdicts.map(|v| v.1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCheck {
    pub sign: DriftSign,
    /// `∫ (-𝐀F) G φ dν`.
    pub generator_side: Estimate,
    /// Paired difference `ℰ(F,G) - ∫(-𝐀F)Gφ dν` on the same samples.
    pub difference: Estimate,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub energy: Estimate,
    pub checks: Vec<SignCheck>,
    /// Conventions for which the identity holds within `tolerance_se` standard errors.
    pub passing: Vec<DriftSign>,
    pub tolerance_se: f64,
}

impl SymmetryReport {
    pub fn passes(&self, sign: DriftSign) -> bool {
        self.passing.contains(&sign)
    }
}

/// Monte Carlo estimates of `ℰ(F,G)` and `∫(-𝐀F) G φ dν` for both signs on
/// one sample stream. Passing is `|difference| <= 3 SE`.
pub fn symmetry_oracle(
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    cfg: &GeneratorConfig,
    sampler: &SamplerConfig,
) -> Result<SymmetryReport> {
    const TOLERANCE_SE: f64 = 3.0;
    let level_f = require_y(f)?;
    let level_g = require_y(g)?;
    if g.dim() != cfg.dim() {
        return Err(Error::InvalidArgument("dimension mismatch in generator input".into()));
    }
    let needed = level_f.max(level_g);
    if sampler.level < needed {
        return Err(Error::Resolution {
            index: f.index_set(0).last().copied().unwrap_or(1),
            needed,
            available: sampler.level,
        });
    }
    let plan = GeneratorPlan::new(f, cfg)?;
    let mut indices = f.index_set(0);
    indices.extend(g.index_set(0));
    indices.sort_unstable();
    indices.dedup();
    let lambdas: Vec<f64> = indices.iter().map(|&i| cfg.lambda.value(i)).collect();
    let (sf, sg) = (f.stencil(&indices), g.stencil(&indices));
    let signs = DriftSign::both();
    let rows = sample_rows(sampler, cfg.dim(), |_, path| {
        let phi = cfg.weight.phi(path)?;
        let (_, df) = f.first_derivatives(path, &sf)?;
        let (gv, dg) = g.first_derivatives(path, &sg)?;
        let energy = phi
            * lambdas
                .iter()
                .zip(df.iter().zip(&dg))
                .map(|(l, (a, b))| l * (a * b))
                .sum::<f64>();
        let parts = plan.parts(f, path, cfg)?;
        let mut row = vec![energy];
        for sign in signs {
            let rhs = -parts.value(sign) * gv * phi;
            row.push(rhs);
            row.push(energy - rhs);
        }
        Ok(row)
    })?;
    let est = column_estimates(&rows, 1 + 2 * signs.len());
    let checks: Vec<SignCheck> = signs
        .iter()
        .enumerate()
        .map(|(k, &sign)| {
            let difference = est[2 + 2 * k];
            SignCheck {
                sign,
                generator_side: est[1 + 2 * k],
                difference,
                passes: difference.within(0.0, TOLERANCE_SE),
            }
        })
        .collect();
    Ok(SymmetryReport {
        energy: est[0],
        passing: checks.iter().filter(|c| c.passes).map(|c| c.sign).collect(),
        checks,
        tolerance_se: TOLERANCE_SE,
    })
}

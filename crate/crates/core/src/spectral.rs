//! The diagonal diffusion operator `A S_i = λ_i S_i`, the per-level index
//! chains through a dyadic point, the closed-form eigen-sum and the
//! closability verdicts derived from the chain series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{schauder_scalar, BasisIndex, DyadicRational};
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Continuation of an explicit eigenvalue table past its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TableTail {
    /// Repeat the last value.
    Hold,
    /// `λ_i = λ_n (i/n)^alpha` for `i > n`.
    Power { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum LambdaRule {
    Constant,
    /// `λ_i = i^alpha`
    Power { alpha: f64 },
    /// `λ_i = ln(1 + i)`
    Logarithmic,
    /// `λ_i = 2^(beta m)` where `m` is the Haar level of index `i`.
    GeometricLevel { beta: f64 },
    Table { values: Vec<f64>, tail: TableTail },
}

/// Nondecreasing positive eigenvalues `λ_1, λ_2, ...`, `λ_i = scale * rule(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueSequence {
    rule: LambdaRule,
    scale: f64,
    dim: usize,
}

/// Indices probed for monotonicity on construction.
const MONOTONE_PROBE: u64 = 1 << 14;

impl EigenvalueSequence {
    pub fn new(rule: LambdaRule, scale: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSequence("dimension must be positive".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidSequence(format!("scale {scale} must be positive")));
        }
        match &rule {
            LambdaRule::Power { alpha } if !(alpha.is_finite() && *alpha >= 0.0) => {
                return Err(Error::InvalidSequence(format!(
                    "power exponent {alpha} must be >= 0 for a nondecreasing sequence"
                )))
            }
            LambdaRule::GeometricLevel { beta } if !(beta.is_finite() && *beta >= 0.0) => {
                return Err(Error::InvalidSequence(format!(
                    "level exponent {beta} must be >= 0 for a nondecreasing sequence"
                )))
            }
            LambdaRule::Table { values, tail } => {
                if values.is_empty() {
                    return Err(Error::InvalidSequence("empty eigenvalue table".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidSequence("table entries must be positive".into()));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidSequence("table must be nondecreasing".into()));
                }
                if let TableTail::Power { alpha } = tail {
                    if !(alpha.is_finite() && *alpha >= 0.0) {
                        return Err(Error::InvalidSequence(format!(
                            "tail exponent {alpha} must be >= 0"
                        )));
                    }
                }
            }
            _ => {}
        }
        let seq = Self { rule, scale, dim };
        let mut prev = 0.0;
        for i in 1..=MONOTONE_PROBE {
            let v = seq.value(i);
            if !(v.is_finite() && v > 0.0) || v < prev {
                return Err(Error::InvalidSequence(format!(
                    "λ_{i} = {v} breaks positivity or monotonicity"
                )));
            }
            prev = v;
        }
        Ok(seq)
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::new(LambdaRule::Constant, value, dim).expect("positive constant")
    }

    pub fn power(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(LambdaRule::Power { alpha }, 1.0, dim)
    }

    pub fn rule(&self) -> &LambdaRule {
        &self.rule
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.rule.clone(), self.scale, dim)
    }

    /// `λ_i` for the 1-based index `i`.
    pub fn value(&self, i: u64) -> f64 {
        assert!(i >= 1, "eigenvalues are indexed from 1");
        self.scale * self.unscaled(i)
    }

    fn unscaled(&self, i: u64) -> f64 {
        match &self.rule {
            LambdaRule::Constant => 1.0,
            LambdaRule::Power { alpha } => (i as f64).powf(*alpha),
            LambdaRule::Logarithmic => (i as f64).ln_1p(),
            LambdaRule::GeometricLevel { beta } => {
                let level = BasisIndex::new(i, self.dim)
                    .expect("valid index")
                    .haar_level()
                    .map_or(0, |(m, _)| m);
                (beta * level as f64).exp2()
            }
            LambdaRule::Table { values, tail } => {
                let n = values.len() as u64;
                if i <= n {
                    values[(i - 1) as usize]
                } else {
                    let last = values[values.len() - 1];
                    match tail {
                        TableTail::Hold => last,
                        TableTail::Power { alpha } => last * (i as f64 / n as f64).powf(*alpha),
                    }
                }
            }
        }
    }

    /// `ln λ` at the largest index of Haar level `p - 1` in direction `j`,
    /// i.e. at `d (2^p - 1) + j`. Stays finite for `p` far beyond `u64`.
    pub fn ln_worst_chain_value(&self, p: u32, j: usize) -> f64 {
        let d = self.dim as u64;
        if let Some(i) = (p <= 56)
            .then(|| d.checked_mul((1u64 << p) - 1))
            .flatten()
            .and_then(|x| x.checked_add(j as u64))
        {
            return self.value(i).ln();
        }
        // ln i = p ln 2 + ln(d - (d - j) 2^-p); the correction is below 2^-56 here
        let ln_i = p as f64 * LN2 + (d as f64).ln();
        let unscaled = match &self.rule {
            LambdaRule::Constant => 0.0,
            LambdaRule::Power { alpha } => alpha * ln_i,
            LambdaRule::Logarithmic => ln_i.ln(),
            LambdaRule::GeometricLevel { beta } => beta * (p - 1) as f64 * LN2,
            LambdaRule::Table { values, tail } => {
                let last = values[values.len() - 1].ln();
                match tail {
                    TableTail::Hold => last,
                    TableTail::Power { alpha } => last + alpha * (ln_i - (values.len() as f64).ln()),
                }
            }
        };
        self.scale.ln() + unscaled
    }
}

impl fmt::Display for EigenvalueSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match &self.rule {
            LambdaRule::Constant => "constant".to_string(),
            LambdaRule::Power { alpha } => format!("power:{alpha}"),
            LambdaRule::Logarithmic => "log".to_string(),
            LambdaRule::GeometricLevel { beta } => format!("geometric:{beta}"),
            LambdaRule::Table { values, tail } => {
                let list: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                let tail = match tail {
                    TableTail::Hold => "hold".to_string(),
                    TableTail::Power { alpha } => format!("power:{alpha}"),
                };
                format!("table:{};{tail}", list.join(","))
            }
        };
        if self.scale == 1.0 {
            write!(f, "{rule}")
        } else {
            write!(f, "{}*{rule}", self.scale)
        }
    }
}

impl FromStr for LambdaRule {
    type Err = Error;

    /// `constant`, `power:<alpha>`, `log`, `geometric:<beta>`,
    /// `table:<v1>,<v2>,...[;hold|;power:<alpha>]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidSequence(format!("cannot parse lambda rule {s:?}: {why}"));
        let num = |v: &str| -> Result<f64> { v.trim().parse::<f64>().map_err(|_| bad("expected a number")) };
        let (head, rest) = match s.trim().split_once(':') {
            Some((h, r)) => (h.trim(), Some(r)),
            None => (s.trim(), None),
        };
        match (head, rest) {
            ("constant", None) => Ok(LambdaRule::Constant),
            ("power", Some(a)) => Ok(LambdaRule::Power { alpha: num(a)? }),
            ("log", None) | ("logarithmic", None) => Ok(LambdaRule::Logarithmic),
            ("geometric", Some(b)) => Ok(LambdaRule::GeometricLevel { beta: num(b)? }),
            ("table", Some(body)) => {
                let (list, tail) = match body.split_once(';') {
                    Some((l, t)) => (l, Some(t.trim())),
                    None => (body, None),
                };
                let values = list.split(',').map(num).collect::<Result<Vec<_>>>()?;
                let tail = match tail {
                    None | Some("hold") => TableTail::Hold,
                    Some(t) => match t.split_once(':') {
                        Some(("power", a)) => TableTail::Power { alpha: num(a)? },
                        _ => return Err(bad("unknown table tail")),
                    },
                };
                Ok(LambdaRule::Table { values, tail })
            }
            _ => Err(bad("unknown rule")),
        }
    }
}

/// Per-level indices whose Schauder functions do not vanish at a dyadic point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexChain {
    pub digits: Vec<u8>,
    pub direction: usize,
    pub dim: usize,
    /// `indices[p-1]` is the chain index at Haar level `p - 1`.
    pub indices: Vec<u64>,
}

/// Index of the level-`(p-1)` Schauder function in direction `j` whose support
/// straddles the point with binary digits `digits` (only `c_1..c_{p-1}` matter).
fn chain_index(digits: &[u8], p: usize, j: usize, d: usize) -> u64 {
    // rank - 1 = 2^(p-1) + sum_{q<p} c_q 2^(p-1-q)
    let offset = digits[..p - 1]
        .iter()
        .fold(0u64, |acc, &c| (acc << 1) | c as u64);
    d as u64 * ((1u64 << (p - 1)) + offset) + j as u64
}

pub fn index_chain(s: &DyadicRational, direction: usize, dim: usize) -> Result<IndexChain> {
    if direction == 0 || direction > dim {
        return Err(Error::InvalidArgument(format!(
            "direction {direction} outside 1..={dim}"
        )));
    }
    let digits = s.digits();
    let indices = (1..=digits.len())
        .map(|p| chain_index(&digits, p, direction, dim))
        .collect();
    Ok(IndexChain {
        digits,
        direction,
        dim,
        indices,
    })
}

/// Evaluates `Σ_i λ_i ⟨S_i(s), e_j⟩²` through the level-by-level identity:
/// `λ_j s² + Σ_p λ_{i_p} 2^(p-1) (c_p 2^-p + (-1)^c_p Σ_{q>p} c_q 2^-q)²`.
pub fn eigen_sum_closed_form(
    s: &DyadicRational,
    direction: usize,
    lambda: &EigenvalueSequence,
) -> Result<f64> {
    let chain = index_chain(s, direction, lambda.dim())?;
    let value = s.value();
    let correction = chain_correction(&chain.digits, &chain.indices, lambda);
    Ok(lambda.value(direction as u64) * value * value + correction)
}

fn chain_correction(digits: &[u8], indices: &[u64], lambda: &EigenvalueSequence) -> f64 {
    let r = digits.len();
    // c[0] = c[r+1] = 0
    let c = |q: usize| -> f64 {
        if q == 0 || q > r {
            0.0
        } else {
            digits[q - 1] as f64
        }
    };
    (1..=r)
        .map(|p| {
            let tail: f64 = (p + 1..=r + 1).map(|q| c(q) * (-(q as f64)).exp2()).sum();
            let sign = if digits[p - 1] == 1 { -1.0 } else { 1.0 };
            let bracket = c(p) * (-(p as f64)).exp2() + sign * tail;
            lambda.value(indices[p - 1]) * ((p - 1) as f64).exp2() * bracket * bracket
        })
        .sum()
}

/// Direct sum `Σ_{i <= d 2^r} λ_i ⟨S_i(s), e_j⟩²`; every later term vanishes.
pub fn eigen_sum_brute_force(
    s: &DyadicRational,
    direction: usize,
    lambda: &EigenvalueSequence,
) -> Result<f64> {
    let d = lambda.dim();
    if direction == 0 || direction > d {
        return Err(Error::InvalidArgument(format!(
            "direction {direction} outside 1..={d}"
        )));
    }
    let x = s.value();
    let n = (d as u64) << s.level();
    let mut total = 0.0;
    for i in 1..=n {
        let idx = BasisIndex::new(i, d)?;
        if idx.direction() != direction {
            continue;
        }
        let v = schauder_scalar(idx.rank(), x);
        total += lambda.value(i) * v * v;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Inconclusive,
    Diverges,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converges => "converges",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Diverges => "diverges",
        })
    }
}

/// Symbolic convergence of `Σ_p λ^power_{i_p} 2^-p` along the worst chain.
pub fn series_verdict(lambda: &EigenvalueSequence, power: u32) -> Verdict {
    let growth_ok = |rate: f64| {
        if rate * f64::from(power) < 1.0 {
            Verdict::Converges
        } else {
            Verdict::Diverges
        }
    };
    match lambda.rule() {
        LambdaRule::Constant | LambdaRule::Logarithmic => Verdict::Converges,
        LambdaRule::Power { alpha } => growth_ok(*alpha),
        LambdaRule::GeometricLevel { beta } => growth_ok(*beta),
        LambdaRule::Table { .. } => Verdict::Inconclusive,
    }
}

/// Upper bound for `Σ_{p > from} λ^power_{i_p} 2^(-decay p)` along the
/// all-ones chain of direction `j` (largest index per level). `None` when
/// the series is not known to converge.
pub fn worst_chain_tail(
    lambda: &EigenvalueSequence,
    direction: usize,
    power: u32,
    decay: f64,
    from: u32,
) -> Option<f64> {
    if matches!(lambda.rule(), LambdaRule::Table { .. }) {
        return None;
    }
    // the ratio of consecutive terms is nonincreasing for every symbolic rule
    let term = |p: u32| (power as f64 * lambda.ln_worst_chain_value(p, direction) - decay * p as f64 * LN2).exp();
    const TERMS: u32 = 400;
    let mut total = 0.0;
    for p in from + 1..=from + TERMS {
        total += term(p);
    }
    let last = term(from + TERMS);
    let next = term(from + TERMS + 1);
    let ratio = next / last;
    if !(ratio < 1.0) || !total.is_finite() {
        return None;
    }
    Some(total + next / (1.0 - ratio))
}

/// Digits `1,0,1,0,...,1` of length `r` (odd).
fn alternating_digits(r: usize) -> Vec<u8> {
    (1..=r).map(|q| (q % 2) as u8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub direction: usize,
    /// Worst-case (all digits one) chain, `d(2^p - 1) + j` for `p = 1..=P`.
    pub worst_chain: Vec<u64>,
    /// Cumulative `Σ_{p<=P'} λ_{i_p} / 2^p`.
    pub partial_sums: Vec<f64>,
    /// Cumulative `Σ_{p<=P'} λ²_{i_p} / 2^p`.
    pub second_partial_sums: Vec<f64>,
    /// Ratio of the last two terms of the first series.
    pub last_term_ratio: f64,
    pub tail_bound: Option<f64>,
    pub sandwich: SandwichCheck,
}

/// Finite-depth check of `Σ/8 <= correction <= Σ/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCheck {
    /// Smallest `correction / Σ λ_{i_p} 2^-p` over alternating digit patterns.
    pub alternating_min_ratio: f64,
    /// Largest ratio over alternating and all-ones patterns.
    pub max_ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosabilityReport {
    pub lambda: String,
    pub dimension: usize,
    pub probe_depth: u32,
    /// `Σ λ_{i_p} / 2^p < ∞`: closability on cylindrical functions with arbitrary times.
    pub verdict: Verdict,
    /// `Σ λ²_{i_p} / 2^p < ∞`: needed for drifts of non-dyadic evaluations.
    pub second_moment_verdict: Verdict,
    pub conclusion: String,
    pub directions: Vec<DirectionReport>,
    pub interpretation: String,
}

impl ClosabilityReport {
    pub fn z_closable(&self) -> bool {
        self.verdict == Verdict::Converges
    }
}

pub fn closability_report(
    lambda: &EigenvalueSequence,
    probe_depth: u32,
) -> Result<ClosabilityReport> {
    if !(8..=56).contains(&probe_depth) {
        return Err(Error::InvalidArgument(format!(
            "probe depth {probe_depth} must lie in 8..=56"
        )));
    }
    let d = lambda.dim();
    let mut directions = Vec::with_capacity(d);
    for j in 1..=d {
        let worst: Vec<u64> = (1..=probe_depth)
            .map(|p| d as u64 * ((1u64 << p) - 1) + j as u64)
            .collect();
        let terms: Vec<f64> = worst
            .iter()
            .enumerate()
            .map(|(k, &i)| lambda.value(i) * (-((k + 1) as f64)).exp2())
            .collect();
        let mut acc = 0.0;
        let partial_sums = terms.iter().map(|t| { acc += t; acc }).collect();
        let mut acc2 = 0.0;
        let second_partial_sums = worst
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                acc2 += lambda.value(i).powi(2) * (-((k + 1) as f64)).exp2();
                acc2
            })
            .collect();
        let n = terms.len();
        directions.push(DirectionReport {
            direction: j,
            worst_chain: worst,
            partial_sums,
            second_partial_sums,
            last_term_ratio: terms[n - 1] / terms[n - 2],
            tail_bound: if series_verdict(lambda, 1) == Verdict::Converges {
                worst_chain_tail(lambda, j, 1, 1.0, probe_depth)
            } else {
                None
            },
            sandwich: sandwich_check(lambda, j, probe_depth),
        });
    }
    let verdict = series_verdict(lambda, 1);
    let conclusion = match verdict {
        Verdict::Converges => "closable on arbitrary-time cylindrical functions; both closures coincide",
        Verdict::Diverges => "only closability on dyadic-time cylindrical functions is guaranteed",
        Verdict::Inconclusive => "convergence not decidable from a finite table; see partial sums",
    }
    .to_string();
    Ok(ClosabilityReport {
        lambda: lambda.to_string(),
        dimension: d,
        probe_depth,
        verdict,
        second_moment_verdict: series_verdict(lambda, 2),
        conclusion,
        directions,
        interpretation: "series evaluated along the all-ones digit pattern, which maximises every \
                         chain index and hence every eigenvalue of a nondecreasing sequence; \
                         finiteness for all digit patterns is equivalent up to the factors 1/8 and 1/2"
            .to_string(),
    })
}

fn sandwich_check(lambda: &EigenvalueSequence, j: usize, depth: u32) -> SandwichCheck {
    let d = lambda.dim();
    let ratio = |digits: &[u8]| {
        let indices: Vec<u64> = (1..=digits.len()).map(|p| chain_index(digits, p, j, d)).collect();
        let correction = chain_correction(digits, &indices, lambda);
        let series: f64 = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| lambda.value(i) * (-((k + 1) as f64)).exp2())
            .sum();
        correction / series
    };
    let mut alt_min = f64::INFINITY;
    let mut max = 0.0f64;
    for r in 1..=depth as usize {
        if r % 2 == 1 {
            let q = ratio(&alternating_digits(r));
            alt_min = alt_min.min(q);
            max = max.max(q);
        }
        max = max.max(ratio(&vec![1; r]));
    }
    SandwichCheck {
        alternating_min_ratio: alt_min,
        max_ratio: max,
        holds: alt_min >= 0.125 - 1e-12 && max <= 0.5 + 1e-12,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    /// multiply by `λ_i`
    A,
    /// multiply by `λ_i^{1/2}`
    SqrtA,
    /// multiply by `λ_i^{-1/2}`
    J,
}

/// Applies a function of `A` to a finite coefficient sequence (`h[k]` pairs with `S_{k+1}`).
pub fn spectral_apply(lambda: &EigenvalueSequence, h: &[f64], mode: SpectralMode) -> Vec<f64> {
    h.iter()
        .enumerate()
        .map(|(k, &x)| {
            let l = lambda.value(k as u64 + 1);
            match mode {
                SpectralMode::A => l * x,
                SpectralMode::SqrtA => l.sqrt() * x,
                SpectralMode::J => x / l.sqrt(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dy(n: u64, l: u32) -> DyadicRational {
        DyadicRational::new(n, l).unwrap()
    }

    #[test]
    fn chain_examples() {
        assert_eq!(index_chain(&dy(3, 2), 1, 1).unwrap().indices, vec![2, 4]);
        assert_eq!(index_chain(&dy(1, 1), 1, 1).unwrap().indices, vec![2]);
        assert_eq!(index_chain(&dy(1, 1), 2, 2).unwrap().indices, vec![4]);
        assert!(index_chain(&DyadicRational::one(), 1, 1).unwrap().indices.is_empty());
        assert!(index_chain(&dy(1, 1), 3, 2).is_err());
    }

    #[test]
    fn closed_form_anchor() {
        let lin = EigenvalueSequence::power(1.0, 1).unwrap();
        let v = eigen_sum_closed_form(&dy(3, 2), 1, &lin).unwrap();
        assert_abs_diff_eq!(v, 19.0 / 16.0, epsilon = 1e-15);
        let b = eigen_sum_brute_force(&dy(3, 2), 1, &lin).unwrap();
        assert_abs_diff_eq!(b, 19.0 / 16.0, epsilon = 1e-15);
        let one = EigenvalueSequence::constant(1.0, 1);
        assert_abs_diff_eq!(eigen_sum_closed_form(&dy(3, 2), 1, &one).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(eigen_sum_closed_form(&DyadicRational::one(), 1, &lin).unwrap(), 1.0);
    }

    #[test]
    fn half_point_identity() {
        let lin = EigenvalueSequence::power(1.0, 1).unwrap();
        let v = eigen_sum_closed_form(&DyadicRational::half(), 1, &lin).unwrap();
        assert_abs_diff_eq!(v, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn verdict_examples() {
        let r = |seq: EigenvalueSequence| closability_report(&seq, 16).unwrap();
        assert_eq!(r(EigenvalueSequence::constant(1.0, 1)).verdict, Verdict::Converges);
        let lin = r(EigenvalueSequence::power(1.0, 1).unwrap());
        assert_eq!(lin.verdict, Verdict::Diverges);
        assert_eq!(lin.directions[0].worst_chain[..4], [2, 4, 8, 16]);
        // worst chain 2^p: every term equals one
        for (p, s) in lin.directions[0].partial_sums.iter().enumerate() {
            assert_abs_diff_eq!(*s, (p + 1) as f64, epsilon = 1e-12);
        }
        let sqrt = r(EigenvalueSequence::power(0.5, 1).unwrap());
        assert_eq!(sqrt.verdict, Verdict::Converges);
        assert_eq!(sqrt.second_moment_verdict, Verdict::Diverges);
        assert_eq!(r(EigenvalueSequence::power(1.5, 1).unwrap()).verdict, Verdict::Diverges);
        let table = EigenvalueSequence::new(
            LambdaRule::Table { values: vec![1.0, 2.0, 2.0], tail: TableTail::Hold },
            1.0,
            1,
        )
        .unwrap();
        let t = r(table);
        assert_eq!(t.verdict, Verdict::Inconclusive);
        assert_eq!(t.directions[0].partial_sums.len(), 16);
        assert!(closability_report(&EigenvalueSequence::constant(1.0, 1), 4).is_err());
    }

    #[test]
    fn tail_bound_matches_geometric_series() {
        let one = EigenvalueSequence::constant(1.0, 1);
        // Σ_{p>10} 2^-p = 2^-10
        assert_abs_diff_eq!(worst_chain_tail(&one, 1, 1, 1.0, 10).unwrap(), 2f64.powi(-10), epsilon = 1e-15);
        let lin = EigenvalueSequence::power(1.0, 1).unwrap();
        assert!(worst_chain_tail(&lin, 1, 1, 1.0, 10).is_none());
        assert!(worst_chain_tail(&lin, 1, 1, 2.0, 10).is_some());
    }

    #[test]
    fn rejects_decreasing_sequences() {
        assert!(EigenvalueSequence::power(-0.5, 1).is_err());
        assert!(EigenvalueSequence::new(
            LambdaRule::Table { values: vec![2.0, 1.0], tail: TableTail::Hold },
            1.0,
            1
        )
        .is_err());
        assert!(EigenvalueSequence::new(LambdaRule::Constant, 0.0, 1).is_err());
    }

    #[test]
    fn parse_rules() {
        assert_eq!("power:0.5".parse::<LambdaRule>().unwrap(), LambdaRule::Power { alpha: 0.5 });
        assert_eq!("log".parse::<LambdaRule>().unwrap(), LambdaRule::Logarithmic);
        assert_eq!(
            "table:1,2,3;power:0.5".parse::<LambdaRule>().unwrap(),
            LambdaRule::Table { values: vec![1.0, 2.0, 3.0], tail: TableTail::Power { alpha: 0.5 } }
        );
        assert!("power".parse::<LambdaRule>().is_err());
        assert!("cubic:2".parse::<LambdaRule>().is_err());
    }

    #[test]
    fn spectral_apply_examples() {
        let lin = EigenvalueSequence::power(1.0, 1).unwrap();
        assert_eq!(spectral_apply(&lin, &[1.0, 1.0, 0.0], SpectralMode::A), vec![1.0, 2.0, 0.0]);
        let unit = [0.0, 0.0, 1.0];
        let j = spectral_apply(&lin, &unit, SpectralMode::J);
        assert_abs_diff_eq!(j[2], 3f64.powf(-0.5), epsilon = 1e-15);
        let h = [0.3, -1.2, 2.5, 0.7];
        let back = spectral_apply(
            &lin,
            &spectral_apply(&lin, &spectral_apply(&lin, &h, SpectralMode::A), SpectralMode::J),
            SpectralMode::J,
        );
        for (a, b) in back.iter().zip(h) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn geometric_level_values() {
        let g = EigenvalueSequence::new(LambdaRule::GeometricLevel { beta: 1.0 }, 1.0, 2).unwrap();
        // d = 2: indices 1..4 are levels 0, 5..8 level 1, 9..16 level 2
        assert_eq!(g.value(4), 1.0);
        assert_eq!(g.value(5), 2.0);
        assert_eq!(g.value(16), 4.0);
        assert_abs_diff_eq!(g.ln_worst_chain_value(3, 1), (g.value(15)).ln(), epsilon = 1e-12);
    }
}

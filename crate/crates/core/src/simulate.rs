//! Galerkin-truncated diffusion in Schauder coordinates and Monte Carlo
//! estimates of its local first and second moments.
//!
//! The first `N` Wiener coordinates evolve by Euler–Maruyama:
//!
//! `Y_i ← Y_i + λ_i [∂_{S_i}φ/φ(γ(Y)) + σ Y_i] dt + √(2 λ_i dt) ξ_i`
//!
//! where `γ(Y)` is the path synthesized from `Y` on the grid of the start
//! path. This is one concrete realization of the process whose generator and
//! moments are computed in [`crate::generator`]; only its short-time
//! behaviour is compared against the analytic targets.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{schauder_scalar, wiener_coefficients, BasisIndex, DyadicRational, PathSample};
use crate::error::{Error, Result};
use crate::generator::{coordinate_drift, DriftSign, GeneratorConfig};
use crate::montecarlo::{pairwise_sum, stream_rng, Estimate};
use crate::weight::GradientScratch;

/// Label attached to every simulation report.
pub const DYNAMICS_LABEL: &str =
    "coordinate SDE dY_i = λ_i[∂_{S_i}φ/φ(γ(Y)) + σY_i]dt + √(2λ_i)dW_i, Euler–Maruyama, Galerkin-truncated";

const OVERFLOW_LIMIT: f64 = 1e100;

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Number of simulated coordinates `N`.
    pub truncation: usize,
    pub dt: f64,
    pub horizon: f64,
    pub members: usize,
    pub seed: u64,
    /// Start path `τ`; its first `N` coordinates are the initial state and its
    /// grid is used to synthesize `γ(Y)`.
    pub start: PathSample,
    pub generator: GeneratorConfig,
    /// Drop the Brownian increments (deterministic test dynamics).
    pub noise: bool,
}

impl SimConfig {
    pub fn new(generator: GeneratorConfig, start: PathSample, truncation: usize) -> Self {
        Self {
            truncation,
            dt: 1e-4,
            horizon: 64e-4,
            members: 10_000,
            seed: 0,
            start,
            generator,
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.generator.dim();
        if self.start.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "start path has dimension {}, model has {d}",
                self.start.dim()
            )));
        }
        if self.truncation == 0 || self.truncation > d << self.start.level() {
            return Err(Error::InvalidArgument(format!(
                "truncation {} must lie in 1..={} for start grid level {}",
                self.truncation,
                d << self.start.level(),
                self.start.level()
            )));
        }
        if self.truncation >= 1 << COORDINATE_BITS {
            return Err(Error::InvalidArgument(format!(
                "truncation {} exceeds the simulator limit {}",
                self.truncation,
                (1usize << COORDINATE_BITS) - 1
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.dt <= self.horizon / 10.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} must not exceed horizon / 10 = {}",
                self.dt,
                self.horizon / 10.0
            )));
        }
        if self.members < 2 {
            return Err(Error::InvalidArgument("ensemble needs at least two members".into()));
        }
        Ok(())
    }

    /// First `N` Wiener coordinates of the start path.
    pub fn initial_state(&self) -> Result<Vec<f64>> {
        wiener_coefficients(&self.start, self.truncation)
    }

    /// The start path projected onto the simulated coordinates.
    pub fn projected_start(&self) -> Result<PathSample> {
        let mut path = PathSample::zero(self.start.level(), self.start.dim());
        path.resynthesize(&self.initial_state()?)?;
        Ok(path)
    }

    fn steps_for(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if !(t > 0.0) || k < 1.0 || (k * self.dt - t).abs() > 1e-9 * t {
            return Err(Error::InvalidArgument(format!(
                "ladder time {t} is not a positive multiple of dt = {}",
                self.dt
            )));
        }
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "ladder time {t} exceeds horizon {}",
                self.horizon
            )));
        }
        Ok(k as usize)
    }
}

/// `{4 dt, 16 dt, 64 dt}`.
pub fn default_ladder(dt: f64) -> Vec<f64> {
    vec![4.0 * dt, 16.0 * dt, 64.0 * dt]
}

/// Immutable per-run coefficients of the Euler step.
struct Dynamics {
    n: usize,
    lambdas: Vec<f64>,
    noise_sd: Vec<f64>,
    sigma: f64,
    dt: f64,
    generator: GeneratorConfig,
    level: u32,
    dim: usize,
}

struct Scratch {
    path: PathSample,
    drift: Vec<f64>,
    noise: Vec<f64>,
    gradient: GradientScratch,
}

impl Dynamics {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.truncation;
        let lambdas: Vec<f64> = (1..=n as u64).map(|i| cfg.generator.lambda.value(i)).collect();
        let noise_sd = lambdas
            .iter()
            .map(|l| if cfg.noise { (2.0 * l * cfg.dt).sqrt() } else { 0.0 })
            .collect();
        Ok(Self {
            n,
            lambdas,
            noise_sd,
            sigma: cfg.generator.drift_sign.sigma(),
            dt: cfg.dt,
            generator: cfg.generator.clone(),
            level: cfg.start.level(),
            dim: cfg.start.dim(),
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            path: PathSample::zero(self.level, self.dim),
            drift: vec![0.0; self.n],
            noise: vec![0.0; self.n],
            gradient: GradientScratch::default(),
        }
    }

    /// One Euler–Maruyama step of a single member.
    fn advance(&self, y: &mut [f64], rngs: &mut [ChaCha8Rng], s: &mut Scratch, step: usize, member: usize) -> Result<()> {
        let weight = &self.generator.weight;
        if weight.is_trivial() {
            s.drift.fill(0.0);
        } else {
            s.path.resynthesize(y)?;
            weight.log_phi_gradient_into(&s.path, &mut s.drift, &mut s.gradient)?;
        }
        for (xi, rng) in s.noise.iter_mut().zip(rngs.iter_mut()) {
            *xi = StandardNormal.sample(rng);
        }
        for i in 0..self.n {
            let drift = self.lambdas[i] * (s.drift[i] + self.sigma * y[i]);
            let next = y[i] + drift * self.dt + self.noise_sd[i] * s.noise[i];
            if !next.is_finite() || next.abs() > OVERFLOW_LIMIT {
                return Err(Error::Overflow {
                    step,
                    time: step as f64 * self.dt,
                    member,
                    coordinate: i + 1,
                    value: next,
                });
            }
            y[i] = next;
        }
        Ok(())
    }
}

/// Bits of the stream id reserved for the coordinate.
const COORDINATE_BITS: u32 = 20;

/// One stream per `(member, coordinate)`, so the noise driving coordinate `i`
/// does not depend on the truncation `N`.
fn member_streams(seed: u64, member: usize, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|i| stream_rng(seed, ((member as u64) << COORDINATE_BITS) | i as u64))
        .collect()
}

/// An `M x N` ensemble of coordinate vectors with one random stream per
/// member and coordinate.
pub struct Ensemble {
    dynamics: Dynamics,
    state: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    steps: usize,
}

impl Ensemble {
    /// Every member starts at the coordinates of `cfg.start`.
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let dynamics = Dynamics::new(cfg)?;
        let y0 = cfg.initial_state()?;
        let state = y0.iter().copied().cycle().take(cfg.members * cfg.truncation).collect();
        let rngs = (0..cfg.members)
            .flat_map(|m| member_streams(cfg.seed, m, cfg.truncation))
            .collect();
        Ok(Self {
            dynamics,
            state,
            rngs,
            steps: 0,
        })
    }

    pub fn members(&self) -> usize {
        self.rngs.len() / self.dynamics.n
    }

    pub fn coordinates(&self) -> usize {
        self.dynamics.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dynamics.dt
    }

    /// Row-major `M x N` state.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn member(&self, m: usize) -> &[f64] {
        let n = self.dynamics.n;
        &self.state[m * n..(m + 1) * n]
    }

    /// Values of coordinate `i` (1-based) across members.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        let n = self.dynamics.n;
        self.state.iter().skip(i - 1).step_by(n).copied().collect()
    }

    pub fn step(&mut self) -> Result<()> {
        let n = self.dynamics.n;
        let step = self.steps + 1;
        let dynamics = &self.dynamics;
        self.state
            .par_chunks_mut(n)
            .zip(self.rngs.par_chunks_mut(n))
            .enumerate()
            .try_for_each_init(
                || dynamics.scratch(),
                |scratch, (m, (y, rng))| dynamics.advance(y, rng, scratch, step, m),
            )?;
        self.steps = step;
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<()> {
        let target = (t / self.dynamics.dt).round() as usize;
        while self.steps < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn summary(&self) -> EnsembleSummary {
        let coordinates = (1..=self.dynamics.n)
            .map(|i| {
                let values = self.coordinate(i);
                let mean = Estimate::from_samples(&values);
                let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
                CoordinateSummary {
                    index: i as u64,
                    mean,
                    second_moment: Estimate::from_samples(&sq),
                    variance: mean.std_error.powi(2) * values.len() as f64,
                }
            })
            .collect();
        EnsembleSummary {
            time: self.time(),
            steps: self.steps,
            members: self.members(),
            coordinates,
        }
    }
}

/// Advances every member by one Euler–Maruyama step.
pub fn step_ensemble(ensemble: &mut Ensemble) -> Result<()> {
    ensemble.step()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSummary {
    pub index: u64,
    pub mean: Estimate,
    pub second_moment: Estimate,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub time: f64,
    pub steps: usize,
    pub members: usize,
    pub coordinates: Vec<CoordinateSummary>,
}

/// A linear functional `Σ w_k Y_{i_k}` of the coordinates (0-based `i_k`).
type Observable = Vec<(usize, f64)>;

/// Per member, the increments of every observable at every ladder step,
/// laid out `[ladder][observable]`. Members are simulated independently and
/// returned in order.
fn observable_increments(cfg: &SimConfig, observables: &[Observable], ladder_steps: &[usize]) -> Result<Vec<Vec<f64>>> {
    let dynamics = Dynamics::new(cfg)?;
    let y0 = cfg.initial_state()?;
    let eval = |y: &[f64], o: &Observable| o.iter().map(|&(k, w)| w * y[k]).sum::<f64>();
    let base: Vec<f64> = observables.iter().map(|o| eval(&y0, o)).collect();
    let last = *ladder_steps.last().expect("nonempty ladder");
    (0..cfg.members)
        .into_par_iter()
        .map_init(
            || dynamics.scratch(),
            |scratch, m| {
                let mut rngs = member_streams(cfg.seed, m, cfg.truncation);
                let mut y = y0.clone();
                let mut out = Vec::with_capacity(ladder_steps.len() * observables.len());
                let mut next = 0;
                for step in 1..=last {
                    dynamics.advance(&mut y, &mut rngs, scratch, step, m)?;
                    if step == ladder_steps[next] {
                        out.extend(observables.iter().zip(&base).map(|(o, b)| eval(&y, o) - b));
                        next += 1;
                    }
                }
                Ok(out)
            },
        )
        .collect()
}

/// OLS weights of the intercept at `t = 0` over the ladder.
fn intercept_weights(ts: &[f64]) -> Vec<f64> {
    let k = ts.len() as f64;
    let s1: f64 = ts.iter().sum();
    let s2: f64 = ts.iter().map(|t| t * t).sum();
    let det = k * s2 - s1 * s1;
    ts.iter().map(|t| (s2 - t * s1) / det).collect()
}

/// Empirical rate at one ladder time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub t: f64,
    pub estimate: Estimate,
    pub pass: bool,
}

/// Rates along the ladder, their linear extrapolation to `t = 0`, and the
/// comparison with the analytic limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub target: f64,
    pub ladder: Vec<RateEstimate>,
    pub extrapolated: Estimate,
    /// Extrapolated rate within `tolerance_se` standard errors of the target.
    pub pass: bool,
    pub relative_error: f64,
}

/// Tolerance, in standard errors, of every pass flag.
pub const TOLERANCE_SE: f64 = 3.0;

fn moment_series(per_member: &[Vec<f64>], ladder: &[f64], column: impl Fn(&[f64], usize) -> f64, target: f64) -> MomentSeries {
    let weights = intercept_weights(ladder);
    let rates: Vec<Vec<f64>> = ladder
        .iter()
        .enumerate()
        .map(|(k, &t)| per_member.iter().map(|row| column(row, k) / t).collect())
        .collect();
    let intercepts: Vec<f64> = (0..per_member.len())
        .map(|m| pairwise_sum(&weights.iter().zip(&rates).map(|(w, r)| w * r[m]).collect::<Vec<_>>()))
        .collect();
    let extrapolated = Estimate::from_samples(&intercepts);
    MomentSeries {
        target,
        ladder: ladder
            .iter()
            .zip(&rates)
            .map(|(&t, r)| {
                let estimate = Estimate::from_samples(r);
                RateEstimate {
                    t,
                    estimate,
                    pass: estimate.within(target, TOLERANCE_SE),
                }
            })
            .collect(),
        extrapolated,
        pass: extrapolated.within(target, TOLERANCE_SE),
        relative_error: if target != 0.0 {
            (extrapolated.mean - target).abs() / target.abs()
        } else {
            extrapolated.mean.abs()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexMoments {
    pub index: u64,
    /// `(1/t) E[𝔊_i(X_t) - 𝔊_i(τ)]` against `λ_i [∂_{S_i}φ/φ(τ) + σ 𝔊_i(τ)]`.
    pub first: MomentSeries,
    /// `(1/t) E[(𝔊_i(X_t) - 𝔊_i(τ))²]` against `2 λ_i`.
    pub second: MomentSeries,
}

/// Run parameters echoed in every moment report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub dynamics: &'static str,
    pub drift_sign: DriftSign,
    pub lambda: String,
    pub weight: String,
    pub truncation: usize,
    pub grid_level: u32,
    pub dt: f64,
    pub members: usize,
    pub seed: u64,
    pub ladder: Vec<f64>,
}

impl RunInfo {
    fn new(cfg: &SimConfig, ladder: &[f64]) -> Self {
        Self {
            dynamics: DYNAMICS_LABEL,
            drift_sign: cfg.generator.drift_sign,
            lambda: cfg.generator.lambda.to_string(),
            weight: cfg.generator.weight.name().to_string(),
            truncation: cfg.truncation,
            grid_level: cfg.start.level(),
            dt: cfg.dt,
            members: cfg.members,
            seed: cfg.seed,
            ladder: ladder.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub run: RunInfo,
    pub indices: Vec<IndexMoments>,
}

/// One CSV line: `index, t, empirical_rate, se, analytic_target, pass`.
/// The extrapolated rate appears with `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub index: u64,
    pub t: f64,
    pub empirical_rate: f64,
    pub se: f64,
    pub analytic_target: f64,
    pub pass: bool,
}

fn series_rows(index: u64, s: &MomentSeries) -> impl Iterator<Item = CsvRow> + '_ {
    s.ladder
        .iter()
        .map(move |r| CsvRow {
            index,
            t: r.t,
            empirical_rate: r.estimate.mean,
            se: r.estimate.std_error,
            analytic_target: s.target,
            pass: r.pass,
        })
        .chain(std::iter::once(CsvRow {
            index,
            t: 0.0,
            empirical_rate: s.extrapolated.mean,
            se: s.extrapolated.std_error,
            analytic_target: s.target,
            pass: s.pass,
        }))
}

impl MomentReport {
    pub fn first_moment_rows(&self) -> Vec<CsvRow> {
        self.indices.iter().flat_map(|m| series_rows(m.index, &m.first)).collect()
    }

    pub fn second_moment_rows(&self) -> Vec<CsvRow> {
        self.indices.iter().flat_map(|m| series_rows(m.index, &m.second)).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.indices.iter().all(|m| m.first.pass && m.second.pass)
    }
}

fn ladder_steps(cfg: &SimConfig, ladder: &[f64]) -> Result<Vec<usize>> {
    if ladder.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "extrapolation needs at least three ladder times, got {}",
            ladder.len()
        )));
    }
    let steps = ladder.iter().map(|&t| cfg.steps_for(t)).collect::<Result<Vec<_>>>()?;
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("ladder times must be strictly increasing".into()));
    }
    Ok(steps)
}

/// Local first and second moments of the coordinates `indices` (1-based, `<= N`).
pub fn estimate_local_moments(cfg: &SimConfig, indices: &[u64], ladder: &[f64]) -> Result<MomentReport> {
    let steps = ladder_steps(cfg, ladder)?;
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i as usize > cfg.truncation) {
        return Err(Error::InvalidArgument(format!(
            "index {bad} is not among the {} simulated coordinates",
            cfg.truncation
        )));
    }
    let start = cfg.projected_start()?;
    let observables: Vec<Observable> = indices.iter().map(|&i| vec![(i as usize - 1, 1.0)]).collect();
    let rows = observable_increments(cfg, &observables, &steps)?;
    let nobs = observables.len();
    let indices = indices
        .iter()
        .enumerate()
        .map(|(o, &i)| {
            let first_target = coordinate_drift(i, &start, &cfg.generator)?;
            let second_target = 2.0 * cfg.generator.lambda.value(i);
            Ok(IndexMoments {
                index: i,
                first: moment_series(&rows, ladder, |r, k| r[k * nobs + o], first_target),
                second: moment_series(&rows, ladder, |r, k| r[k * nobs + o].powi(2), second_target),
            })
        })
        .collect::<Result<_>>()?;
    Ok(MomentReport {
        run: RunInfo::new(cfg, ladder),
        indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationMomentReport {
    pub run: RunInfo,
    pub coordinate: usize,
    pub time: DyadicRational,
    /// Whether all indices with `S_i(s) != 0` are simulated.
    pub complete: bool,
    /// `(1/t) E[x^v(X_t(s)) - x^v(τ(s))]` against
    /// `Σ_{i<=N} λ_i S_i^v(s) [∂_{S_i}φ/φ(τ) + σ 𝔊_i(τ)]`.
    pub first: MomentSeries,
    /// Squared increments against `2 Σ_{i<=N} λ_i S_i^v(s)²`.
    pub second: MomentSeries,
}

/// Local moments of the evaluation functional `x^v(γ(s))`, `v` 1-based.
pub fn estimate_evaluation_moments(
    cfg: &SimConfig,
    v: usize,
    s: DyadicRational,
    ladder: &[f64],
) -> Result<EvaluationMomentReport> {
    let steps = ladder_steps(cfg, ladder)?;
    let d = cfg.generator.dim();
    if v == 0 || v > d {
        return Err(Error::InvalidArgument(format!("coordinate {v} outside 1..={d}")));
    }
    if s.level() > cfg.start.level() {
        return Err(Error::InvalidArgument(format!(
            "time {s} is not on the grid of level {}",
            cfg.start.level()
        )));
    }
    let start = cfg.projected_start()?;
    let mut observable = Observable::new();
    let mut first_target = 0.0;
    let mut second_target = 0.0;
    for i in 1..=cfg.truncation as u64 {
        let idx = BasisIndex::new(i, d)?;
        if idx.direction() != v {
            continue;
        }
        let w = schauder_scalar(idx.rank(), s.value());
        if w == 0.0 {
            continue;
        }
        observable.push((i as usize - 1, w));
        first_target += w * coordinate_drift(i, &start, &cfg.generator)?;
        second_target += 2.0 * cfg.generator.lambda.value(i) * w * w;
    }
    // the last index with S_i(s) != 0 has Haar level r - 1
    let needed = d as u64 * (1u64 << s.level());
    let rows = observable_increments(cfg, std::slice::from_ref(&observable), &steps)?;
    Ok(EvaluationMomentReport {
        run: RunInfo::new(cfg, ladder),
        coordinate: v,
        time: s,
        complete: cfg.truncation as u64 >= needed,
        first: moment_series(&rows, ladder, |r, k| r[k], first_target),
        second: moment_series(&rows, ladder, |r, k| r[k].powi(2), second_target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::synthesize_path;
    use crate::spectral::EigenvalueSequence;
    use crate::weight::WeightModel;
    use approx::assert_abs_diff_eq;

    fn flat_cfg(n: usize, level: u32) -> SimConfig {
        let gen = GeneratorConfig::new(EigenvalueSequence::constant(1.0, 1), WeightModel::zero(1)).unwrap();
        SimConfig::new(gen, PathSample::zero(level, 1), n)
    }

    #[test]
    fn intercept_weights_recover_lines() {
        let ts = [1.0, 2.0, 4.0];
        let w = intercept_weights(&ts);
        let line = |t: f64| 3.0 - 0.5 * t;
        let fit: f64 = w.iter().zip(&ts).map(|(w, &t)| w * line(t)).sum();
        assert_abs_diff_eq!(fit, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = flat_cfg(4, 1);
        assert!(cfg.validate().is_err());
        cfg.truncation = 2;
        cfg.dt = 1.0;
        cfg.horizon = 5.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        cfg.horizon = 1.0;
        assert!(cfg.validate().is_ok());
        assert!(estimate_local_moments(&cfg, &[1], &[0.1, 0.2]).is_err());
        assert!(estimate_local_moments(&cfg, &[1], &[0.1, 0.25, 0.3]).is_err());
        assert!(estimate_local_moments(&cfg, &[3], &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn deterministic_decay_without_noise() {
        let gen = GeneratorConfig::new(EigenvalueSequence::power(1.0, 1).unwrap(), WeightModel::zero(1)).unwrap();
        let start = synthesize_path(&[1.0, -2.0, 0.5, 3.0], 2, 1).unwrap();
        let mut cfg = SimConfig::new(gen, start, 4);
        cfg.noise = false;
        cfg.members = 2;
        cfg.dt = 1e-4;
        cfg.horizon = 0.1;
        let mut ens = Ensemble::new(&cfg).unwrap();
        ens.run_until(0.1).unwrap();
        for (i, y0) in [1.0, -2.0, 0.5, 3.0].iter().enumerate() {
            let lambda = (i + 1) as f64;
            let exact = y0 * (-lambda * 0.1f64).exp();
            assert!((ens.member(1)[i] - exact).abs() < 1e-3 * y0.abs(), "coordinate {}", i + 1);
        }
    }

    #[test]
    fn one_step_gaussian_law() {
        let mut cfg = flat_cfg(2, 1);
        cfg.members = 20_000;
        cfg.dt = 0.01;
        cfg.horizon = 0.1;
        let mut ens = Ensemble::new(&cfg).unwrap();
        ens.step().unwrap();
        let s = ens.summary();
        for c in &s.coordinates {
            assert!(c.mean.within(0.0, 4.0), "{c:?}");
            assert!(c.second_moment.within(0.02, 4.0), "{c:?}");
        }
    }

    #[test]
    fn overflow_guard_reports_location() {
        let gen = GeneratorConfig::new(EigenvalueSequence::constant(1e3, 1), WeightModel::zero(1))
            .unwrap()
            .with_sign(DriftSign::Plus);
        let start = synthesize_path(&[1.0], 0, 1).unwrap();
        let mut cfg = SimConfig::new(gen, start, 1);
        cfg.members = 2;
        cfg.dt = 1.0;
        cfg.horizon = 100.0;
        let mut ens = Ensemble::new(&cfg).unwrap();
        let err = ens.run_until(100.0).unwrap_err();
        assert!(matches!(err, Error::Overflow { coordinate: 1, .. }), "{err}");
    }

    #[test]
    fn flat_model_first_moment_vanishes_at_zero() {
        let mut cfg = flat_cfg(4, 2);
        cfg.members = 2000;
        cfg.seed = 3;
        let r = estimate_local_moments(&cfg, &[1, 2], &default_ladder(cfg.dt)).unwrap();
        for m in &r.indices {
            assert_eq!(m.first.target, 0.0);
            assert_eq!(m.second.target, 2.0);
            assert!(m.first.pass, "{m:?}");
        }
        assert_eq!(r.first_moment_rows().len(), 8);
    }

    #[test]
    fn evaluation_targets() {
        let gen = GeneratorConfig::new(EigenvalueSequence::constant(1.0, 1), WeightModel::zero(1)).unwrap();
        let start = synthesize_path(&[2.0], 2, 1).unwrap();
        let mut cfg = SimConfig::new(gen, start, 4);
        cfg.members = 100;
        let r = estimate_evaluation_moments(&cfg, 1, DyadicRational::one(), &default_ladder(cfg.dt)).unwrap();
        assert_eq!(r.first.target, -2.0);
        assert_eq!(r.second.target, 2.0);
        assert!(r.complete);
    }
}

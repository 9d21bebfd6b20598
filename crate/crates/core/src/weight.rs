//! Girsanov weights `φ = exp{∫⟨b(γ), dγ⟩ - ½∫|b(γ)|² ds}` with gradient drift
//! `b = ∇f`.
//!
//! By Itô's formula `log φ = f(γ(1)) - f(0) - ½∫(Δf + |∇f|²)(γ_s) ds`, which
//! needs no stochastic integral. Every evaluator below works from that
//! representation; time integrals run over grid cells (where the path is
//! linear) with a fixed five-point Gauss rule. The stochastic-integral form of
//! `∂_{S_i}φ/φ` is kept as an independent cross-check.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{haar_unchecked, rank_resolution, schauder_scalar, BasisIndex, PathSample};
use crate::error::{Error, Result};
use crate::quadrature::{NODES, WEIGHTS};

/// Declared sup-norm information for a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialBounds {
    /// `sup |f|`
    pub sup_abs: f64,
    /// lower bound of `Δf + |∇f|²`
    pub compensator_min: f64,
    /// upper bound of `Δf + |∇f|²`
    pub compensator_max: f64,
    /// `sup |∇(Δf + |∇f|²)|`
    pub compensator_gradient_sup: f64,
}

/// A potential `f ∈ C_b^3(R^d)` with exact derivatives; `b = ∇f`.
///
/// Third derivatives enter through `∇Δf`, which the Itô-free directional
/// derivative of `log φ` needs.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `d × d`.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
    fn laplacian(&self, x: &[f64]) -> f64;
    fn grad_laplacian(&self, x: &[f64], out: &mut [f64]);
    fn bounds(&self) -> Option<PotentialBounds>;

    /// `Δf + |∇f|²`
    fn compensator(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        self.laplacian(x) + g.iter().map(|v| v * v).sum::<f64>()
    }

    /// `∇(Δf + |∇f|²) = ∇Δf + 2 ∇²f ∇f`
    fn compensator_gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.gradient(x, &mut g);
        self.hessian(x, &mut h);
        self.grad_laplacian(x, out);
        for (a, o) in out.iter_mut().enumerate() {
            *o += 2.0 * (0..d).map(|c| h[a * d + c] * g[c]).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPotential {
    dim: usize,
}

impl Potential for ZeroPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn laplacian(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn grad_laplacian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn bounds(&self) -> Option<PotentialBounds> {
        Some(PotentialBounds {
            sup_abs: 0.0,
            compensator_min: 0.0,
            compensator_max: 0.0,
            compensator_gradient_sup: 0.0,
        })
    }
    fn compensator(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn compensator_gradient(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `f(x) = c sin⟨a, x⟩`
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPotential {
    amplitude: f64,
    frequency: Vec<f64>,
    freq_sq: f64,
}

impl TrigPotential {
    pub fn new(amplitude: f64, frequency: Vec<f64>) -> Result<Self> {
        if frequency.is_empty() || !amplitude.is_finite() || frequency.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("trig potential needs finite parameters".into()));
        }
        let freq_sq = frequency.iter().map(|a| a * a).sum();
        Ok(Self {
            amplitude,
            frequency,
            freq_sq,
        })
    }

    fn phase(&self, x: &[f64]) -> f64 {
        self.frequency.iter().zip(x).map(|(a, v)| a * v).sum()
    }
}

impl Potential for TrigPotential {
    fn dim(&self) -> usize {
        self.frequency.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * self.phase(x).sin()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let c = self.amplitude * self.phase(x).cos();
        for (o, a) in out.iter_mut().zip(&self.frequency) {
            *o = c * a;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let c = -self.amplitude * self.phase(x).sin();
        let d = self.dim();
        for r in 0..d {
            for s in 0..d {
                out[r * d + s] = c * self.frequency[r] * self.frequency[s];
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        -self.amplitude * self.phase(x).sin() * self.freq_sq
    }

    fn grad_laplacian(&self, x: &[f64], out: &mut [f64]) {
        let c = -self.amplitude * self.phase(x).cos() * self.freq_sq;
        for (o, a) in out.iter_mut().zip(&self.frequency) {
            *o = c * a;
        }
    }

    fn compensator(&self, x: &[f64]) -> f64 {
        let (s, c) = self.phase(x).sin_cos();
        let k = self.amplitude;
        self.freq_sq * (-k * s + k * k * c * c)
    }

    fn compensator_gradient(&self, x: &[f64], out: &mut [f64]) {
        let (s, c) = self.phase(x).sin_cos();
        let k = self.amplitude;
        let scale = self.freq_sq * (-k * c - 2.0 * k * k * c * s);
        for (o, a) in out.iter_mut().zip(&self.frequency) {
            *o = scale * a;
        }
    }

    fn bounds(&self) -> Option<PotentialBounds> {
        let k = self.amplitude.abs();
        let a2 = self.freq_sq;
        Some(PotentialBounds {
            sup_abs: k,
            compensator_min: -k * a2,
            compensator_max: k * a2 + k * k * a2,
            compensator_gradient_sup: (k * a2 + k * k * a2) * a2.sqrt(),
        })
    }
}

/// Quadratic near the origin, saturating at `κR²/2`:
/// `f(x) = (κ/2) |x|² / (1 + |x|²/R²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpQuadraticPotential {
    dim: usize,
    kappa: f64,
    radius: f64,
}

impl BumpQuadraticPotential {
    pub fn new(dim: usize, kappa: f64, radius: f64) -> Result<Self> {
        if dim == 0 || !kappa.is_finite() || !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(
                "bump-quadratic potential needs dim >= 1, finite kappa and radius > 0".into(),
            ));
        }
        Ok(Self { dim, kappa, radius })
    }

    /// `(u, g', g'', g''')` for `f = g(u)`, `u = |x|²`.
    fn profile(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        let u: f64 = x.iter().map(|v| v * v).sum();
        let r2 = self.radius * self.radius;
        let w = 1.0 / (1.0 + u / r2);
        let k = self.kappa;
        (
            u,
            0.5 * k * w * w,
            -k * w * w * w / r2,
            3.0 * k * w.powi(4) / (r2 * r2),
        )
    }
}

impl Potential for BumpQuadraticPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u: f64 = x.iter().map(|v| v * v).sum();
        0.5 * self.kappa * u / (1.0 + u / (self.radius * self.radius))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let (_, g1, _, _) = self.profile(x);
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * g1 * v;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let (_, g1, g2, _) = self.profile(x);
        let d = self.dim;
        for r in 0..d {
            for s in 0..d {
                let delta = if r == s { 2.0 * g1 } else { 0.0 };
                out[r * d + s] = delta + 4.0 * g2 * x[r] * x[s];
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let (u, g1, g2, _) = self.profile(x);
        2.0 * self.dim as f64 * g1 + 4.0 * u * g2
    }

    fn grad_laplacian(&self, x: &[f64], out: &mut [f64]) {
        let (u, _, g2, g3) = self.profile(x);
        let slope = 2.0 * self.dim as f64 * g2 + 4.0 * g2 + 4.0 * u * g3;
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * slope * v;
        }
    }

    fn compensator(&self, x: &[f64]) -> f64 {
        let (u, g1, g2, _) = self.profile(x);
        2.0 * self.dim as f64 * g1 + 4.0 * u * g2 + 4.0 * u * g1 * g1
    }

    fn compensator_gradient(&self, x: &[f64], out: &mut [f64]) {
        let (u, g1, g2, g3) = self.profile(x);
        let slope = 2.0 * self.dim as f64 * g2
            + 4.0 * g2
            + 4.0 * u * g3
            + 4.0 * g1 * g1
            + 8.0 * u * g1 * g2;
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * slope * v;
        }
    }

    fn bounds(&self) -> Option<PotentialBounds> {
        let k = self.kappa.abs();
        let r = self.radius;
        let d = self.dim as f64;
        Some(PotentialBounds {
            sup_abs: 0.5 * k * r * r,
            compensator_min: -(d + 4.0) * k,
            compensator_max: (d + 4.0) * k + k * k * r * r,
            compensator_gradient_sup: (2.0 * d + 16.0) * k / r + 5.0 * k * k * r,
        })
    }
}

/// Named weight model as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum WeightSpec {
    Zero,
    /// `c sin⟨a, x⟩`; an empty frequency means `a = (1, ..., 1)`.
    Trig { amplitude: f64, frequency: Vec<f64> },
    BumpQuadratic { kappa: f64, radius: f64 },
}

impl WeightSpec {
    pub fn build(&self, dim: usize) -> Result<WeightModel> {
        let potential: Arc<dyn Potential> = match self {
            WeightSpec::Zero => Arc::new(ZeroPotential { dim }),
            WeightSpec::Trig { amplitude, frequency } => {
                let freq = if frequency.is_empty() {
                    vec![1.0; dim]
                } else if frequency.len() == dim {
                    frequency.clone()
                } else {
                    return Err(Error::InvalidArgument(format!(
                        "trig frequency has {} entries, dimension is {dim}",
                        frequency.len()
                    )));
                };
                Arc::new(TrigPotential::new(*amplitude, freq)?)
            }
            WeightSpec::BumpQuadratic { kappa, radius } => {
                Arc::new(BumpQuadraticPotential::new(dim, *kappa, *radius)?)
            }
        };
        Ok(WeightModel {
            potential,
            trivial: matches!(self, WeightSpec::Zero),
            name: self.to_string(),
        })
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Zero => write!(f, "zero"),
            WeightSpec::Trig { amplitude, frequency } => {
                write!(f, "trig:{amplitude}")?;
                if !frequency.is_empty() {
                    let a: Vec<String> = frequency.iter().map(|v| v.to_string()).collect();
                    write!(f, ":{}", a.join(","))?;
                }
                Ok(())
            }
            WeightSpec::BumpQuadratic { kappa, radius } => write!(f, "bump:{kappa}:{radius}"),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    /// `zero`, `trig[:c[:a1,...,ad]]`, `bump[:kappa[:radius]]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse weight model {s:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let mut parts = s.trim().split(':');
        match parts.next().map(str::trim) {
            Some("zero") if parts.clone().next().is_none() => Ok(WeightSpec::Zero),
            Some("trig") => {
                let amplitude = parts.next().map(num).transpose()?.unwrap_or(1.0);
                let frequency = match parts.next() {
                    Some(list) => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(WeightSpec::Trig { amplitude, frequency })
            }
            Some("bump") => {
                let kappa = parts.next().map(num).transpose()?.unwrap_or(1.0);
                let radius = parts.next().map(num).transpose()?.unwrap_or(1.0);
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(WeightSpec::BumpQuadratic { kappa, radius })
            }
            _ => Err(bad()),
        }
    }
}

/// How the pathwise integral `∫ h(γ_s) dγ_s` is discretised on each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathwiseRule {
    /// `h(γ(t_l)) · Δγ_l`; converges to the Itô integral on Brownian paths.
    LeftPoint,
    /// Gauss average of `h` along the segment times `Δγ_l`; the exact
    /// Riemann–Stieltjes integral of the linear interpolant (Stratonovich limit).
    SegmentAverage,
}

/// The weight `φ` generated by a potential.
#[derive(Clone)]
pub struct WeightModel {
    potential: Arc<dyn Potential>,
    trivial: bool,
    name: String,
}

impl fmt::Debug for WeightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightModel").field("name", &self.name).finish()
    }
}

impl WeightModel {
    pub fn zero(dim: usize) -> Self {
        WeightSpec::Zero.build(dim).expect("zero weight")
    }

    pub fn trig(amplitude: f64, frequency: Vec<f64>) -> Result<Self> {
        let dim = frequency.len();
        WeightSpec::Trig { amplitude, frequency }.build(dim)
    }

    pub fn custom(name: impl Into<String>, potential: Arc<dyn Potential>) -> Self {
        Self {
            potential,
            trivial: false,
            name: name.into(),
        }
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `φ ≡ 1`.
    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    fn check_dim(&self, path: &PathSample) -> Result<()> {
        if path.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "path dimension {} does not match weight dimension {}",
                path.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn log_phi(&self, path: &PathSample) -> Result<f64> {
        self.check_dim(path)?;
        if self.trivial {
            return Ok(0.0);
        }
        let d = self.dim();
        let f = self.potential.as_ref();
        let n = path.cells();
        let h = path.spacing();
        let origin = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut integral = 0.0;
        for l in 0..n {
            let (lo, hi) = (path.point(l), path.point(l + 1));
            let mut cell = 0.0;
            for (&node, &w) in NODES.iter().zip(&WEIGHTS) {
                lerp(lo, hi, node, &mut x);
                cell += w * f.compensator(&x);
            }
            integral += h * cell;
        }
        Ok(f.value(path.point(n)) - f.value(&origin) - 0.5 * integral)
    }

    pub fn phi(&self, path: &PathSample) -> Result<f64> {
        Ok(self.log_phi(path)?.exp())
    }

    /// `∂_{S_i}φ / φ` from the Itô-free representation:
    /// `⟨b(γ(1)), S_i(1)⟩ - ½ ∫ ⟨∇(Δf + |∇f|²)(γ_s), S_i(s)⟩ ds`.
    ///
    /// When `S_i` is coarser than the grid the quadrature nodes coincide with
    /// those of [`log_phi`](Self::log_phi), so this is the exact derivative of
    /// the computed `log φ` along `S_i`.
    pub fn log_phi_directional(&self, path: &PathSample, index: u64) -> Result<f64> {
        self.check_dim(path)?;
        if self.trivial {
            return Ok(0.0);
        }
        let idx = BasisIndex::new(index, self.dim())?;
        let j = idx.direction() - 1;
        let rank = idx.rank();
        let f = self.potential.as_ref();
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut boundary = 0.0;
        let s1 = schauder_scalar(rank, 1.0);
        if s1 != 0.0 {
            f.gradient(path.point(path.cells()), &mut g);
            boundary = g[j] * s1;
        }
        let integral = integrate_on_support(path, idx, |x, s, out| {
            f.compensator_gradient(x, out);
            out[j] * schauder_scalar(rank, s)
        });
        Ok(boundary - 0.5 * integral)
    }

    /// `∂_{S_i}φ / φ` for all `i = 1..=n` at once; requires `n <= d 2^L`.
    pub fn log_phi_gradient(&self, path: &PathSample, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        let mut scratch = GradientScratch::default();
        self.log_phi_gradient_into(path, &mut out, &mut scratch)?;
        Ok(out)
    }

    pub(crate) fn log_phi_gradient_into(
        &self,
        path: &PathSample,
        out: &mut [f64],
        scratch: &mut GradientScratch,
    ) -> Result<()> {
        self.check_dim(path)?;
        let n = out.len();
        let d = self.dim();
        if n > d << path.level() {
            return Err(Error::Resolution {
                index: n as u64,
                needed: rank_resolution(((n - 1) / d + 1) as u64),
                available: path.level(),
            });
        }
        if self.trivial {
            out.fill(0.0);
            return Ok(());
        }
        let f = self.potential.as_ref();
        let cells = path.cells();
        let h = path.spacing();
        let q = NODES.len();
        // ∇V at every quadrature node, layout [cell][node][coord]
        scratch.field.resize(cells * q * d, 0.0);
        scratch.x.resize(d, 0.0);
        for l in 0..cells {
            let (lo, hi) = (path.point(l), path.point(l + 1));
            for (k, &node) in NODES.iter().enumerate() {
                lerp(lo, hi, node, &mut scratch.x);
                let at = (l * q + k) * d;
                f.compensator_gradient(&scratch.x, &mut scratch.field[at..at + d]);
            }
        }
        scratch.g.resize(d, 0.0);
        f.gradient(path.point(cells), &mut scratch.g);
        for (slot, value) in out.iter_mut().enumerate() {
            let idx = BasisIndex::new(slot as u64 + 1, d)?;
            let j = idx.direction() - 1;
            let rank = idx.rank();
            let (a, b) = idx.support();
            let first = (a * cells as f64) as usize;
            let last = (b * cells as f64) as usize;
            let mut integral = 0.0;
            for l in first..last {
                let t0 = l as f64 * h;
                let mut cell = 0.0;
                for (k, (&node, &w)) in NODES.iter().zip(&WEIGHTS).enumerate() {
                    let s = t0 + node * h;
                    cell += w * scratch.field[(l * q + k) * d + j] * schauder_scalar(rank, s);
                }
                integral += h * cell;
            }
            *value = scratch.g[j] * schauder_scalar(rank, 1.0) - 0.5 * integral;
        }
        Ok(())
    }

    /// `∂_{S_i}φ / φ` from the stochastic-integral form
    /// `Σ_j ∫⟨∇b_j(γ), S_i⟩ dγ_j + ∫⟨b(γ), g_i⟩ ds - ∫⟨Σ_j b_j ∇b_j(γ), S_i⟩ ds`,
    /// with the pairing taken in `R^d`. Only for cross-checks.
    pub fn log_phi_directional_stochastic(
        &self,
        path: &PathSample,
        index: u64,
        rule: PathwiseRule,
    ) -> Result<f64> {
        self.check_dim(path)?;
        let d = self.dim();
        let idx = BasisIndex::new(index, d)?;
        if idx.resolution() > path.level() {
            return Err(Error::Resolution {
                index,
                needed: idx.resolution(),
                available: path.level(),
            });
        }
        if self.trivial {
            return Ok(0.0);
        }
        let f = self.potential.as_ref();
        let j = idx.direction() - 1;
        let rank = idx.rank();
        let cells = path.cells();
        let h = path.spacing();
        let (a, b) = idx.support();
        let first = (a * cells as f64) as usize;
        let last = (b * cells as f64) as usize;
        let mut x = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut total = 0.0;
        for l in first..last {
            let (lo, hi) = (path.point(l), path.point(l + 1));
            let t0 = l as f64 * h;
            let haar = haar_unchecked(rank, t0 + 0.5 * h);
            // ⟨∇b_k, e_j⟩ = ∂_j ∂_k f, so the integrand of dγ_k is H[k][j] S_i
            let stochastic = match rule {
                PathwiseRule::LeftPoint => {
                    f.hessian(lo, &mut hess);
                    let s = schauder_scalar(rank, t0);
                    (0..d).map(|k| hess[k * d + j] * (hi[k] - lo[k])).sum::<f64>() * s
                }
                PathwiseRule::SegmentAverage => {
                    let mut acc = 0.0;
                    for (&node, &w) in NODES.iter().zip(&WEIGHTS) {
                        lerp(lo, hi, node, &mut x);
                        f.hessian(&x, &mut hess);
                        let s = schauder_scalar(rank, t0 + node * h);
                        acc += w * s * (0..d).map(|k| hess[k * d + j] * (hi[k] - lo[k])).sum::<f64>();
                    }
                    acc
                }
            };
            let mut drift = 0.0;
            for (&node, &w) in NODES.iter().zip(&WEIGHTS) {
                lerp(lo, hi, node, &mut x);
                f.gradient(&x, &mut grad);
                f.hessian(&x, &mut hess);
                let hb: f64 = (0..d).map(|k| hess[j * d + k] * grad[k]).sum();
                let s = schauder_scalar(rank, t0 + node * h);
                drift += w * (grad[j] * haar - hb * s);
            }
            total += stochastic + h * drift;
        }
        Ok(total)
    }

    /// Interval `[lower, upper]` containing `φ(γ)` for every path, from
    /// `|f(γ(1)) - f(0)| <= 2 sup|f|` and the range of `Δf + |∇f|²`.
    pub fn bounds_certificate(&self) -> Result<(f64, f64)> {
        let b = self.potential.bounds().ok_or_else(|| {
            Error::CertificateUnavailable(format!("weight {:?} declares no bounds", self.name))
        })?;
        Ok((
            (-2.0 * b.sup_abs - 0.5 * b.compensator_max).exp(),
            (2.0 * b.sup_abs - 0.5 * b.compensator_min).exp(),
        ))
    }
}

#[derive(Debug, Default)]
pub(crate) struct GradientScratch {
    field: Vec<f64>,
    x: Vec<f64>,
    g: Vec<f64>,
}

fn lerp(lo: &[f64], hi: &[f64], theta: f64, out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
        *o = a + theta * (b - a);
    }
}

/// `∫ integrand(γ_s, s) ds` over the support of `S_i`, on cells fine enough
/// that both the path and `S_i` are linear on each.
fn integrate_on_support(
    path: &PathSample,
    idx: BasisIndex,
    mut integrand: impl FnMut(&[f64], f64, &mut [f64]) -> f64,
) -> f64 {
    let d = path.dim();
    let level = path.level().max(idx.resolution());
    let cells = 1usize << level;
    let h = (-(level as f64)).exp2();
    let (a, b) = idx.support();
    let first = (a * cells as f64) as usize;
    let last = (b * cells as f64) as usize;
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut total = 0.0;
    for l in first..last {
        let t0 = l as f64 * h;
        path.eval_into(t0, &mut lo).expect("grid time in range");
        path.eval_into(t0 + h, &mut hi).expect("grid time in range");
        let mut cell = 0.0;
        for (&node, &w) in NODES.iter().zip(&WEIGHTS) {
            lerp(&lo, &hi, node, &mut x);
            cell += w * integrand(&x, t0 + node * h, &mut buf);
        }
        total += h * cell;
    }
    total
}

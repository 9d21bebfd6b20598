//! Haar and Schauder functions on `[0,1]`, dyadic arithmetic, and the
//! Lévy–Ciesielski correspondence between piecewise-linear paths and their
//! Wiener coordinates.
//!
//! Basis indices are flat and 1-based: index `i` carries the vector Haar
//! function `H_r e_j` with `i = d(r-1) + j`. For `r >= 2` the rank splits as
//! `r = 2^m + k` with `1 <= k <= 2^m`, and `H_r` lives on
//! `[(k-1)2^-m, k 2^-m)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dyadic level handled exactly (`2^level` must fit an `f64` mantissa).
pub const MAX_DYADIC_LEVEL: u32 = 52;

/// A dyadic rational `numerator * 2^-level` in `(0, 1]`, kept in reduced form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DyadicRational {
    numerator: u64,
    level: u32,
}

impl DyadicRational {
    pub fn new(numerator: u64, level: u32) -> Result<Self> {
        if level > MAX_DYADIC_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "dyadic level {level} exceeds {MAX_DYADIC_LEVEL}"
            )));
        }
        if numerator == 0 || numerator > (1u64 << level) {
            return Err(Error::Domain {
                what: "dyadic rational",
                value: numerator as f64 / (1u64 << level) as f64,
                domain: "(0, 1]",
            });
        }
        let shift = numerator.trailing_zeros().min(level);
        Ok(Self {
            numerator: numerator >> shift,
            level: level - shift,
        })
    }

    pub fn one() -> Self {
        Self {
            numerator: 1,
            level: 0,
        }
    }

    pub fn half() -> Self {
        Self {
            numerator: 1,
            level: 1,
        }
    }

    /// Exact conversion; fails unless `x * 2^max_level` is an integer.
    pub fn from_f64(x: f64, max_level: u32) -> Result<Self> {
        let max_level = max_level.min(MAX_DYADIC_LEVEL);
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::NotDyadic {
                value: x,
                max_level,
            });
        }
        let scaled = x * (1u64 << max_level) as f64;
        if scaled.fract() != 0.0 {
            return Err(Error::NotDyadic {
                value: x,
                max_level,
            });
        }
        Self::new(scaled as u64, max_level)
    }

    /// Rebuilds `sum c_i 2^-i` from binary digits; the last digit must be 1.
    /// The empty digit string denotes 1.
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        if digits.is_empty() {
            return Ok(Self::one());
        }
        if digits.len() > MAX_DYADIC_LEVEL as usize {
            return Err(Error::InvalidArgument("too many binary digits".into()));
        }
        if digits.iter().any(|&c| c > 1) || *digits.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(
                "binary digits must be 0/1 and end in 1".into(),
            ));
        }
        let numerator = digits.iter().fold(0u64, |acc, &c| (acc << 1) | c as u64);
        Self::new(numerator, digits.len() as u32)
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    /// The reduced level `r`; equals the number of binary digits.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / (1u64 << self.level) as f64
    }

    /// Binary digits `c_1..c_r` with `c_r = 1`. The point 1 has `r = 0` and no digits.
    pub fn digits(&self) -> Vec<u8> {
        if self.level == 0 {
            return Vec::new();
        }
        (1..=self.level)
            .map(|q| ((self.numerator >> (self.level - q)) & 1) as u8)
            .collect()
    }

    /// All points `l 2^-level`, `l = 1..=2^level`, in increasing order.
    pub fn grid(level: u32) -> impl Iterator<Item = DyadicRational> {
        let n = 1u64 << level;
        (1..=n).map(move |l| DyadicRational::new(l, level).expect("grid point in range"))
    }
}

/// Binary digits of `s`, see [`DyadicRational::digits`].
pub fn dyadic_digits(s: &DyadicRational) -> Vec<u8> {
    s.digits()
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            write!(f, "1")
        } else {
            write!(f, "{}/{}", self.numerator, 1u64 << self.level)
        }
    }
}

impl FromStr for DyadicRational {
    type Err = Error;

    /// Accepts `p/q` with `q` a power of two, or a decimal that is exactly dyadic.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let bad = || Error::InvalidArgument(format!("cannot parse dyadic rational {s:?}"));
            let num: u64 = num.trim().parse().map_err(|_| bad())?;
            let den: u64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 || !den.is_power_of_two() {
                return Err(bad());
            }
            Self::new(num, den.trailing_zeros())
        } else {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse time {s:?}")))?;
            Self::from_f64(x, MAX_DYADIC_LEVEL)
        }
    }
}

impl TryFrom<String> for DyadicRational {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DyadicRational> for String {
    fn from(s: DyadicRational) -> String {
        s.to_string()
    }
}

/// Flat 1-based basis index together with the dimension it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    index: u64,
    dim: usize,
}

impl BasisIndex {
    pub fn new(index: u64, dim: usize) -> Result<Self> {
        if index == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} / dimension {dim} must be positive"
            )));
        }
        Ok(Self { index, dim })
    }

    pub fn from_rank(rank: u64, direction: usize, dim: usize) -> Result<Self> {
        if rank == 0 || direction == 0 || direction > dim {
            return Err(Error::InvalidArgument(format!(
                "rank {rank}, direction {direction} invalid for dimension {dim}"
            )));
        }
        Self::new(dim as u64 * (rank - 1) + direction as u64, dim)
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Haar rank `r`.
    pub fn rank(&self) -> u64 {
        (self.index - 1) / self.dim as u64 + 1
    }

    /// Coordinate direction `j` in `1..=d`.
    pub fn direction(&self) -> usize {
        ((self.index - 1) % self.dim as u64) as usize + 1
    }

    /// `(m, k)` with `r = 2^m + k`, or `None` for the constant function.
    pub fn haar_level(&self) -> Option<(u32, u64)> {
        haar_split(self.rank())
    }

    /// Grid level on which `g_i` is piecewise constant.
    pub fn resolution(&self) -> u32 {
        rank_resolution(self.rank())
    }

    /// Support of `S_i`, as `(start, end)`.
    pub fn support(&self) -> (f64, f64) {
        match self.haar_level() {
            None => (0.0, 1.0),
            Some((m, k)) => {
                let h = (-(m as f64)).exp2();
                ((k - 1) as f64 * h, k as f64 * h)
            }
        }
    }
}

fn haar_split(rank: u64) -> Option<(u32, u64)> {
    if rank <= 1 {
        return None;
    }
    let m = 63 - (rank - 1).leading_zeros();
    Some((m, rank - (1u64 << m)))
}

/// Grid level on which `H_r` is piecewise constant: 0 for `r = 1`, `m + 1` otherwise.
pub fn rank_resolution(rank: u64) -> u32 {
    haar_split(rank).map_or(0, |(m, _)| m + 1)
}

fn check_unit(what: &'static str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: t,
            domain: "[0, 1]",
        })
    }
}

/// Haar function `H_r(t)`. Right-continuous; at `t = 1` the left limit is used.
pub fn haar_eval(rank: u64, t: f64) -> Result<f64> {
    if rank == 0 {
        return Err(Error::InvalidArgument("Haar rank starts at 1".into()));
    }
    check_unit("t", t)?;
    Ok(haar_unchecked(rank, t))
}

pub(crate) fn haar_unchecked(rank: u64, t: f64) -> f64 {
    let Some((m, k)) = haar_split(rank) else {
        return 1.0;
    };
    let h = (-(m as f64)).exp2();
    let scale = (m as f64 / 2.0).exp2();
    let a = (k - 1) as f64 * h;
    let mid = a + 0.5 * h;
    let b = k as f64 * h;
    if t >= a && t < mid {
        scale
    } else if (t >= mid && t < b) || (t == 1.0 && b == 1.0) {
        -scale
    } else {
        0.0
    }
}

/// Scalar Schauder function `∫_0^s H_r(u) du` in closed form.
pub(crate) fn schauder_scalar(rank: u64, s: f64) -> f64 {
    let Some((m, k)) = haar_split(rank) else {
        return s;
    };
    let h = (-(m as f64)).exp2();
    let scale = (m as f64 / 2.0).exp2();
    let a = (k - 1) as f64 * h;
    let mid = a + 0.5 * h;
    let b = k as f64 * h;
    if s <= a || s >= b {
        0.0
    } else if s <= mid {
        scale * (s - a)
    } else {
        scale * (b - s)
    }
}

/// `⟨S_i(s), e_{direction(i)}⟩`, the only nonzero component of `S_i(s)`.
pub fn schauder_component(index: BasisIndex, s: f64) -> Result<f64> {
    check_unit("s", s)?;
    Ok(schauder_scalar(index.rank(), s))
}

/// The vector `S_i(s) ∈ R^d`.
pub fn schauder_eval(index: BasisIndex, s: f64) -> Result<Vec<f64>> {
    let value = schauder_component(index, s)?;
    let mut out = vec![0.0; index.dim()];
    out[index.direction() - 1] = value;
    Ok(out)
}

/// Piecewise-linear `R^d`-valued path on the uniform grid `l 2^-L`, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    level: u32,
    dim: usize,
    // row-major: grid point l occupies values[l*dim..(l+1)*dim]
    values: Vec<f64>,
}

impl PathSample {
    pub fn zero(level: u32, dim: usize) -> Self {
        assert!(dim > 0, "path dimension must be positive");
        assert!(level <= 30, "grid level {level} too fine");
        Self {
            level,
            dim,
            values: vec![0.0; ((1usize << level) + 1) * dim],
        }
    }

    /// Builds a path from its grid values (row `l` is `γ(l 2^-L)`).
    pub fn from_values(level: u32, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || level > 30 {
            return Err(Error::InvalidArgument(format!(
                "path needs dim >= 1 and level <= 30 (got {dim}, {level})"
            )));
        }
        let expected = ((1usize << level) + 1) * dim;
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "path at level {level}, dim {dim} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("path must start at 0".into()));
        }
        Ok(Self { level, dim, values })
    }

    /// Samples `f` on the grid; `f(0)` is forced to 0.
    pub fn from_fn(level: u32, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let n = 1usize << level;
        let mut values = vec![0.0; (n + 1) * dim];
        for l in 1..=n {
            let v = f(l as f64 / n as f64);
            if v.len() != dim {
                return Err(Error::InvalidArgument("path function has wrong dimension".into()));
            }
            values[l * dim..(l + 1) * dim].copy_from_slice(&v);
        }
        Self::from_values(level, dim, values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    pub fn spacing(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// `γ(l 2^-L)`.
    pub fn point(&self, l: usize) -> &[f64] {
        &self.values[l * self.dim..(l + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        check_unit("t", t)?;
        let n = self.cells();
        let x = t * n as f64;
        let l = (x.floor() as usize).min(n - 1);
        let theta = x - l as f64;
        let (lo, hi) = (self.point(l), self.point(l + 1));
        for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
            *o = if theta == 0.0 { a } else { a + theta * (b - a) };
        }
        Ok(())
    }

    /// `γ + coef * S_i` sampled on the grid. Exact (still piecewise linear on
    /// the grid) when the index resolution does not exceed the grid level.
    pub fn add_schauder(&mut self, index: BasisIndex, coef: f64) {
        let j = index.direction() - 1;
        let rank = index.rank();
        let (a, b) = index.support();
        let n = self.cells();
        let first = (a * n as f64).ceil() as usize;
        let last = ((b * n as f64).floor() as usize).min(n);
        for l in first.max(1)..=last {
            let s = l as f64 / n as f64;
            self.values[l * self.dim + j] += coef * schauder_scalar(rank, s);
        }
    }

    /// Returns `γ + coef * S_i` as a new path.
    pub fn shifted(&self, index: BasisIndex, coef: f64) -> Self {
        let mut out = self.clone();
        out.add_schauder(index, coef);
        out
    }

    /// Overwrites the path with `Σ coeffs[i-1] S_i`, keeping its grid.
    pub fn resynthesize(&mut self, coeffs: &[f64]) -> Result<()> {
        let capacity = self.dim << self.level;
        if coeffs.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients do not fit grid level {} (at most {capacity})",
                coeffs.len(),
                self.level
            )));
        }
        self.values.fill(0.0);
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                self.add_schauder(BasisIndex::new(i as u64 + 1, self.dim)?, c);
            }
        }
        Ok(())
    }
}

/// Wiener coordinate `∫ ⟨g_i, dγ⟩`, exact for the piecewise-linear path.
pub fn wiener_coefficient(path: &PathSample, index: u64) -> Result<f64> {
    let idx = BasisIndex::new(index, path.dim())?;
    let needed = idx.resolution();
    if needed > path.level() {
        return Err(Error::Resolution {
            index,
            needed,
            available: path.level(),
        });
    }
    let j = idx.direction() - 1;
    let n = path.cells();
    let at = |l: usize| path.point(l)[j];
    Ok(match idx.haar_level() {
        None => at(n) - at(0),
        Some((m, k)) => {
            let cells = n >> m;
            let a = (k as usize - 1) * cells;
            let mid = a + cells / 2;
            let b = a + cells;
            (m as f64 / 2.0).exp2() * (2.0 * at(mid) - at(a) - at(b))
        }
    })
}

/// First `n` Wiener coordinates of the path. Never approximates: every
/// requested index must be resolved by the grid.
pub fn wiener_coefficients(path: &PathSample, n: usize) -> Result<Vec<f64>> {
    (1..=n as u64).map(|i| wiener_coefficient(path, i)).collect()
}

/// Lévy–Ciesielski synthesis `γ = Σ coeffs[i-1] S_i` on the grid of level `level`.
pub fn synthesize_path(coeffs: &[f64], level: u32, dim: usize) -> Result<PathSample> {
    if dim == 0 || level > 30 {
        return Err(Error::InvalidArgument(format!(
            "synthesis needs dim >= 1 and level <= 30 (got {dim}, {level})"
        )));
    }
    let mut path = PathSample::zero(level, dim);
    path.resynthesize(coeffs)?;
    Ok(path)
}

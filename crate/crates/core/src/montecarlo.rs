//! Reproducible Monte Carlo over Wiener measure.
//!
//! Sample `k` draws from its own ChaCha stream `(seed, k)`, so results do not
//! depend on how rayon splits the work. Totals are pairwise sums over the
//! per-sample values in index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{synthesize_path, PathSample};
use crate::error::{Error, Result};

/// Independent random stream for sample (or ensemble member) `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Brownian path at grid level `level` from `d 2^level` i.i.d. standard
/// normal Wiener coordinates.
pub fn wiener_path(rng: &mut ChaCha8Rng, level: u32, dim: usize) -> (Vec<f64>, PathSample) {
    let mut coeffs = vec![0.0; dim << level];
    standard_normals(rng, &mut coeffs);
    let path = synthesize_path(&coeffs, level, dim).expect("coefficient count fits the grid");
    (coeffs, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// Grid level of the synthesized paths.
    pub level: u32,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
        }
        if self.level > 20 {
            return Err(Error::InvalidArgument(format!("sampler level {} too fine", self.level)));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 2, "an estimate needs at least two samples");
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// `|mean - target| <= k * std_error`, with an absolute floor for
    /// zero-variance estimates.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + 1e-12 * (1.0 + target.abs())
    }
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Per-sample statistic vectors `h(coeffs, path)`, in sample order.
pub fn sample_rows<F>(cfg: &SamplerConfig, dim: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &PathSample) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, k as u64);
            let (coeffs, path) = wiener_path(&mut rng, cfg.level, dim);
            f(&coeffs, &path)
        })
        .collect()
}

/// Column-wise estimates over rows produced by [`sample_rows`].
pub fn column_estimates(rows: &[Vec<f64>], outputs: usize) -> Vec<Estimate> {
    (0..outputs)
        .map(|o| {
            let column: Vec<f64> = rows.iter().map(|r| r[o]).collect();
            Estimate::from_samples(&column)
        })
        .collect()
}

/// Estimates `E_ν[h]` for each of `outputs` statistics `h(coeffs, path)`.
pub fn estimate<F>(cfg: &SamplerConfig, dim: usize, outputs: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &PathSample) -> Result<Vec<f64>> + Sync,
{
    let rows = sample_rows(cfg, dim, f)?;
    Ok(column_estimates(&rows, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
        assert!(e.within(2.0, 3.0));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut buf = [0.0; 4];
            standard_normals(&mut stream_rng(seed, stream), &mut buf);
            buf
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn wiener_marginal_variance() {
        let cfg = SamplerConfig { samples: 4000, seed: 11, level: 3 };
        let est = estimate(&cfg, 1, 2, |_, p| {
            let x = p.eval(0.5).unwrap()[0];
            Ok(vec![x * x, p.point(p.cells())[0]])
        })
        .unwrap();
        assert!(est[0].within(0.5, 4.0), "{:?}", est[0]);
        assert!(est[1].within(0.0, 4.0), "{:?}", est[1]);
    }
}

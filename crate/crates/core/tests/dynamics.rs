use dirform::basis::{synthesize_path, PathSample};
use dirform::generator::{DriftSign, GeneratorConfig};
use dirform::simulate::{default_ladder, estimate_local_moments, Ensemble, SimConfig};
use dirform::spectral::EigenvalueSequence;
use dirform::weight::WeightModel;
use statrs::distribution::{ContinuousCDF, Normal};

/// Kolmogorov–Smirnov distance to `N(0,1)`.
fn ks_distance(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let c = normal.cdf(x);
            (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn flat_model_relaxes_to_standard_normal_coordinates() {
    let gen = GeneratorConfig::new(EigenvalueSequence::constant(1.0, 1), WeightModel::zero(1)).unwrap();
    let mut cfg = SimConfig::new(gen, PathSample::zero(2, 1), 4);
    cfg.members = 10_000;
    cfg.dt = 1e-2;
    cfg.horizon = 6.0;
    cfg.seed = 31;
    let mut ens = Ensemble::new(&cfg).unwrap();
    ens.run_until(cfg.horizon).unwrap();
    // 1% critical value of the one-sample KS statistic
    let critical = 1.628 / (cfg.members as f64).sqrt();
    for i in 1..=4 {
        let d = ks_distance(ens.coordinate(i));
        assert!(d < critical, "coordinate {i}: KS distance {d} >= {critical}");
    }
}

fn sine_config(truncation: usize, level: u32) -> SimConfig {
    let gen = GeneratorConfig::new(EigenvalueSequence::power(0.5, 1).unwrap(), WeightModel::trig(1.0, vec![1.0]).unwrap())
        .unwrap();
    let mut coeffs = vec![0.0; 2];
    coeffs[1] = 2.0;
    let start = synthesize_path(&coeffs, level, 1).unwrap();
    let mut cfg = SimConfig::new(gen, start, truncation);
    cfg.members = 4000;
    cfg.dt = 1e-3;
    cfg.horizon = 0.1;
    cfg.seed = 17;
    cfg
}

#[test]
fn first_moments_are_stable_under_doubling_the_truncation() {
    let ladder = default_ladder(1e-3);
    let coarse = estimate_local_moments(&sine_config(4, 3), &[1, 2, 3], &ladder).unwrap();
    let fine = estimate_local_moments(&sine_config(8, 3), &[1, 2, 3], &ladder).unwrap();
    for (a, b) in coarse.indices.iter().zip(&fine.indices) {
        let (ea, eb) = (a.first.extrapolated, b.first.extrapolated);
        assert!((ea.mean - eb.mean).abs() < ea.std_error, "index {}: {ea:?} vs {eb:?}", a.index);
    }
}

#[test]
fn moment_reports_do_not_depend_on_worker_count() {
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut cfg = sine_config(4, 3);
            cfg.members = 600;
            estimate_local_moments(&cfg, &[1, 2], &default_ladder(cfg.dt)).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn ensemble_stepping_does_not_depend_on_worker_count() {
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut cfg = sine_config(4, 3);
            cfg.members = 300;
            let mut ens = Ensemble::new(&cfg).unwrap();
            ens.run_until(0.02).unwrap();
            ens.state().to_vec()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn literal_sign_is_simulated_with_a_guard() {
    let mut cfg = sine_config(4, 3);
    cfg.generator = cfg.generator.with_sign(DriftSign::Plus);
    cfg.members = 500;
    let report = estimate_local_moments(&cfg, &[2], &default_ladder(cfg.dt)).unwrap();
    // the drift target flips sign with σ; 𝔊_2(τ) = 2
    let oracle = estimate_local_moments(&sine_config(4, 3), &[2], &default_ladder(1e-3)).unwrap();
    let (p, o) = (report.indices[0].first.target, oracle.indices[0].first.target);
    assert!((p - o - 2.0 * 2.0 * 2f64.sqrt()).abs() < 1e-12, "{p} {o}");
}

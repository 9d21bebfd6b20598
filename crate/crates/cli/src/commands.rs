//! One function per subcommand. Each returns a JSON result, an overall
//! pass flag and the CSV tables to write next to the report.

use dirform::basis::{haar_eval, synthesize_path, wiener_coefficients, DyadicRational};
use dirform::cylindrical::{dirichlet_energy, SampleTime, Truncation};
use dirform::generator::{apply_generator, evaluation_drift, symmetry_oracle};
use dirform::montecarlo::{estimate, standard_normals, stream_rng, SamplerConfig};
use dirform::simulate::{estimate_evaluation_moments, estimate_local_moments, Ensemble, SimConfig};
use dirform::spectral::{closability_report, eigen_sum_brute_force, eigen_sum_closed_form, EigenvalueSequence};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Identity checks of the dyadic sweeps use this absolute tolerance.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Orthonormality and roundtrip tolerance of `basis`.
pub const BASIS_TOLERANCE: f64 = 1e-12;
/// `basis` builds a dense Gram matrix; larger levels are refused.
pub const BASIS_MAX_LEVEL: u32 = 9;

pub struct Table {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub result: Value,
    pub passed: bool,
    pub tables: Vec<Table>,
}

fn table<S: Serialize>(name: &'static str, rows: impl IntoIterator<Item = S>) -> Result<Table, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: name.into(),
        source: e.into_error(),
    })?;
    Ok(Table { name, bytes })
}

fn to_value<S: Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn sampler(cfg: &ExperimentConfig) -> SamplerConfig {
    SamplerConfig {
        samples: cfg.samples,
        seed: cfg.seed,
        level: cfg.grid_level,
    }
}

fn sim_config(cfg: &ExperimentConfig) -> Result<SimConfig, CliError> {
    let mut sim = SimConfig::new(cfg.generator()?, cfg.start_path()?, cfg.truncation);
    sim.dt = cfg.dt;
    sim.horizon = cfg.horizon();
    sim.members = cfg.samples;
    sim.seed = cfg.seed;
    sim.validate()?;
    Ok(sim)
}

fn dyadic_time(text: &str) -> Result<DyadicRational, CliError> {
    match text.parse::<SampleTime>()? {
        SampleTime::Dyadic(q) => Ok(q),
        SampleTime::Real(_) => Err(CliError::Config(format!(
            "eval_time {text} must be dyadic for moment estimation"
        ))),
    }
}

#[derive(Serialize)]
struct CovarianceCheck {
    s: f64,
    t: f64,
    target: f64,
    estimate: f64,
    se: f64,
    pass: bool,
}

pub fn basis(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let top = cfg.max_level;
    if top > BASIS_MAX_LEVEL {
        return Err(CliError::Config(format!(
            "basis checks run up to level {BASIS_MAX_LEVEL}, got max_level = {top}"
        )));
    }
    // Haar functions up to rank 2^top are constant on the cells of that level
    let n = 1usize << top;
    let mut values = vec![0.0; n * n];
    for r in 0..n {
        for l in 0..n {
            values[r * n + l] = haar_eval(r as u64 + 1, (l as f64 + 0.5) / n as f64)?;
        }
    }
    let mut ortho_error = 0.0f64;
    for r in 0..n {
        for q in r..n {
            let inner: f64 = (0..n).map(|l| values[r * n + l] * values[q * n + l]).sum::<f64>() / n as f64;
            let expected = if r == q { 1.0 } else { 0.0 };
            ortho_error = ortho_error.max((inner - expected).abs());
        }
    }

    let d = cfg.dimension;
    let mut roundtrip = Vec::new();
    for level in 0..=top {
        let mut rng = stream_rng(cfg.seed, u64::from(level));
        let mut coeffs = vec![0.0; d << level];
        standard_normals(&mut rng, &mut coeffs);
        let path = synthesize_path(&coeffs, level, d)?;
        let back = wiener_coefficients(&path, coeffs.len())?;
        let err = coeffs.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        roundtrip.push(json!({ "level": level, "max_error": err }));
    }
    let roundtrip_error = roundtrip
        .iter()
        .map(|r| r["max_error"].as_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);

    let times = [0.25, 0.5, 0.75, 1.0];
    let mut pairs = Vec::new();
    for (a, &s) in times.iter().enumerate() {
        for &t in &times[a..] {
            pairs.push((s, t));
        }
    }
    let est = estimate(&sampler(cfg), d, pairs.len() * d, |_, p| {
        let mut out = Vec::with_capacity(pairs.len() * d);
        for &(s, t) in &pairs {
            let (xs, xt) = (p.eval(s)?, p.eval(t)?);
            out.extend(xs.iter().zip(&xt).map(|(a, b)| a * b));
        }
        Ok(out)
    })?;
    let covariance: Vec<CovarianceCheck> = pairs
        .iter()
        .enumerate()
        .flat_map(|(k, &(s, t))| {
            est[k * d..(k + 1) * d].iter().map(move |e| CovarianceCheck {
                s,
                t,
                target: s.min(t),
                estimate: e.mean,
                se: e.std_error,
                pass: e.within(s.min(t), 3.0),
            })
        })
        .collect();

    let passed = ortho_error <= BASIS_TOLERANCE
        && roundtrip_error <= BASIS_TOLERANCE
        && covariance.iter().all(|c| c.pass);
    let result = json!({
        "max_level": top,
        "haar_orthonormality_error": ortho_error,
        "roundtrip": roundtrip,
        "roundtrip_error": roundtrip_error,
        "tolerance": BASIS_TOLERANCE,
        "covariance": to_value(&covariance),
        "covariance_tolerance_se": 3.0,
    });
    Ok(Outcome {
        result,
        passed,
        tables: vec![table("covariance.csv", &covariance)?],
    })
}

#[derive(Serialize)]
struct LemmaRow {
    s: String,
    direction: usize,
    closed_form: f64,
    brute_force: f64,
    abs_error: f64,
    parseval_error: f64,
}

/// Every dyadic point of level at most `max_level`, each once.
fn dyadic_points(max_level: u32) -> Result<Vec<DyadicRational>, CliError> {
    let mut points = vec![DyadicRational::one()];
    for level in 1..=max_level {
        for l in (1..(1u64 << level)).step_by(2) {
            points.push(DyadicRational::new(l, level)?);
        }
    }
    Ok(points)
}

pub fn lemma(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    if cfg.max_level > 16 {
        return Err(CliError::Config(format!("lemma sweeps up to level 16, got {}", cfg.max_level)));
    }
    let lambda = cfg.lambda()?;
    let unit = EigenvalueSequence::constant(1.0, cfg.dimension);
    let mut rows = Vec::new();
    for s in dyadic_points(cfg.max_level)? {
        for j in 1..=cfg.dimension {
            let closed_form = eigen_sum_closed_form(&s, j, &lambda)?;
            let brute_force = eigen_sum_brute_force(&s, j, &lambda)?;
            let parseval = eigen_sum_closed_form(&s, j, &unit)?;
            rows.push(LemmaRow {
                s: s.to_string(),
                direction: j,
                closed_form,
                brute_force,
                abs_error: (closed_form - brute_force).abs(),
                parseval_error: (parseval - s.value()).abs(),
            });
        }
    }
    let max_error = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    let max_parseval = rows.iter().map(|r| r.parseval_error).fold(0.0, f64::max);
    let passed = max_error <= IDENTITY_TOLERANCE && max_parseval <= IDENTITY_TOLERANCE;
    let result = json!({
        "lambda": lambda.to_string(),
        "dimension": cfg.dimension,
        "max_level": cfg.max_level,
        "checks": rows.len(),
        "max_abs_error": max_error,
        "max_parseval_error": max_parseval,
        "tolerance": IDENTITY_TOLERANCE,
    });
    Ok(Outcome {
        result,
        passed,
        tables: vec![table("lemma.csv", &rows)?],
    })
}

#[derive(Serialize)]
struct PartialSumRow {
    direction: usize,
    level: usize,
    index: u64,
    partial_sum: f64,
    second_partial_sum: f64,
}

pub fn closability(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let report = closability_report(&cfg.lambda()?, cfg.probe_depth)?;
    let rows: Vec<PartialSumRow> = report
        .directions
        .iter()
        .flat_map(|dir| {
            dir.worst_chain.iter().enumerate().map(move |(k, &index)| PartialSumRow {
                direction: dir.direction,
                level: k + 1,
                index,
                partial_sum: dir.partial_sums[k],
                second_partial_sum: dir.second_partial_sums[k],
            })
        })
        .collect();
    let passed = report.directions.iter().all(|d| d.sandwich.holds);
    Ok(Outcome {
        result: to_value(&report),
        passed,
        tables: vec![table("partial_sums.csv", &rows)?],
    })
}

pub fn energy(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let report = dirichlet_energy(
        &cfg.f()?,
        &cfg.g()?,
        &cfg.lambda()?,
        &cfg.weight()?,
        &sampler(cfg),
        Truncation {
            level: cfg.truncation_level,
        },
    )?;
    Ok(Outcome {
        result: to_value(&report),
        passed: true,
        tables: Vec::new(),
    })
}

pub fn generator(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let gen = cfg.generator()?;
    let (f, g) = (cfg.f()?, cfg.g()?);
    let start = cfg.start_path()?;
    let at_start = apply_generator(&f, &start, &gen)?;
    let symmetry = symmetry_oracle(&f, &g, &gen, &sampler(cfg))?;
    let drift = match (&cfg.eval_coordinate, &cfg.eval_time) {
        (Some(v), Some(s)) => Some(evaluation_drift(*v, s.parse()?, &start, &gen)?),
        _ => None,
    };
    let passed = symmetry.passes(gen.drift_sign);
    let result = json!({
        "drift_sign": gen.drift_sign,
        "generator_at_start": at_start,
        "symmetry": to_value(&symmetry),
        "evaluation_drift": to_value(&drift),
    });
    Ok(Outcome {
        result,
        passed,
        tables: Vec::new(),
    })
}

#[derive(Serialize)]
struct SummaryRow {
    index: u64,
    mean: f64,
    mean_se: f64,
    second_moment: f64,
    second_moment_se: f64,
    variance: f64,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let sim = sim_config(cfg)?;
    let mut ensemble = Ensemble::new(&sim)?;
    ensemble.run_until(sim.horizon)?;
    let summary = ensemble.summary();
    let rows: Vec<SummaryRow> = summary
        .coordinates
        .iter()
        .map(|c| SummaryRow {
            index: c.index,
            mean: c.mean.mean,
            mean_se: c.mean.std_error,
            second_moment: c.second_moment.mean,
            second_moment_se: c.second_moment.std_error,
            variance: c.variance,
        })
        .collect();
    Ok(Outcome {
        result: to_value(&summary),
        passed: true,
        tables: vec![table("summary.csv", &rows)?],
    })
}

pub fn moments(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let sim = sim_config(cfg)?;
    let ladder = cfg.ladder();
    let report = estimate_local_moments(&sim, &cfg.indices, &ladder)?;
    let evaluation = match (&cfg.eval_coordinate, &cfg.eval_time) {
        (Some(v), Some(s)) => Some(estimate_evaluation_moments(&sim, *v, dyadic_time(s)?, &ladder)?),
        _ => None,
    };
    let passed = report.all_pass() && evaluation.as_ref().is_none_or(|e| e.first.pass && e.second.pass);
    let tables = vec![
        table("first_moments.csv", report.first_moment_rows())?,
        table("second_moments.csv", report.second_moment_rows())?,
    ];
    let result = json!({
        "local": to_value(&report),
        "evaluation": to_value(&evaluation),
    });
    Ok(Outcome { result, passed, tables })
}

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;
use curvlab::curvature::CurvatureOptions;
use curvlab::discriminant::{codim, default_eps_grid, tail_experiment, TailOptions};
use curvlab::estimator::{
    decay_curve, expected_density_above, falling_factorial, theorem_regime, volume_identity, wishart_check, EstimatorOptions,
};
use curvlab::geometry::{empirical_density, write_points_csv, EmpiricalDensity};
use curvlab::jetlaw::{cov_bf, kostlan_jet_covariance};
use curvlab::kostlan::sample_system;
use curvlab::rng::derive_seed;
use curvlab::stats::{loglog_slope, mean_ci};
use curvlab::{Dims, MetricContext};
use serde_json::{json, Value};

/// Result of one experiment: CSV bytes and the experiment-specific part of
/// the JSON summary.
pub struct Output {
    pub csv: Vec<u8>,
    pub results: Value,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Core(curvlab::Error::Csv(e.to_string())))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

fn dims(cfg: &RunConfig, d: u32) -> Result<Dims, CliError> {
    Ok(Dims::new(cfg.n.unwrap(), cfg.r.unwrap(), d)?)
}

fn estimator_options(cfg: &RunConfig) -> EstimatorOptions {
    EstimatorOptions {
        convention: cfg.convention.unwrap(),
        filter: cfg.filter.unwrap_or(true),
        curvature: CurvatureOptions { restarts: cfg.restarts.unwrap_or(32), ..Default::default() },
    }
}

/// Checks every regime condition of the experiment before any work starts.
pub fn preflight(cfg: &RunConfig) -> Result<(), CliError> {
    let (n, r) = (cfg.n.unwrap(), cfg.r.unwrap());
    match cfg.experiment.unwrap() {
        Experiment::Wishart => {
            if r == 0 || r > n {
                return Err(CliError::Config(format!("wishart needs 1 <= r <= n, got n = {n}, r = {r}")));
            }
        }
        Experiment::DiscTail => {
            codim(cfg.case.unwrap(), n, r)?;
        }
        Experiment::Decay => {
            theorem_regime(cfg.curv.unwrap(), n, r)?;
            for d in cfg.degrees() {
                dims(cfg, d)?;
            }
        }
        _ => {
            for d in cfg.degrees() {
                dims(cfg, d)?;
            }
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.experiment.unwrap() {
        Experiment::JetsCov => jets_cov(cfg),
        Experiment::Wishart => wishart(cfg),
        Experiment::Volume => volume(cfg),
        Experiment::DiscTail => disc_tail(cfg),
        Experiment::Decay => decay(cfg),
        Experiment::CrossValidate => cross_validate(cfg),
        Experiment::EmpiricalDensity => single_density(cfg),
    }
}

/// Columns `n, r, d, max_entry_distance`, then a row with d = `slope`.
fn jets_cov(cfg: &RunConfig) -> Result<Output, CliError> {
    let degrees = cfg.degrees();
    let mut dist = Vec::with_capacity(degrees.len());
    for &d in &degrees {
        let dm = dims(cfg, d)?;
        dist.push(kostlan_jet_covariance(dm, d)?.max_entry_distance(&cov_bf(dm)));
    }
    let xs: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    let fit = if degrees.len() >= 2 { loglog_slope(&xs, &dist) } else { None };
    let (n, r) = (cfg.n.unwrap().to_string(), cfg.r.unwrap().to_string());
    let mut w = csv_writer();
    w.write_record(["n", "r", "d", "max_entry_distance"]).map_err(csv_err)?;
    for (d, v) in degrees.iter().zip(&dist) {
        w.write_record([n.clone(), r.clone(), d.to_string(), format!("{v:e}")]).map_err(csv_err)?;
    }
    let slope = fit.map(|f| f.0.to_string()).unwrap_or_default();
    w.write_record([n, r, "slope".into(), slope]).map_err(csv_err)?;
    Ok(Output {
        csv: finish(w)?,
        results: json!({ "slope": fit.map(|f| f.0), "slope_se": fit.map(|f| f.1), "distances": dist }),
    })
}

/// Columns `n, r, estimate, ci95, expected, n_samples, seed`.
fn wishart(cfg: &RunConfig) -> Result<Output, CliError> {
    let (n, r) = (cfg.n.unwrap(), cfg.r.unwrap());
    let est = wishart_check(n, r, cfg.n_samples.unwrap(), cfg.seed.unwrap(), cfg.convention.unwrap())?;
    let expected = falling_factorial(n, r);
    let mut w = csv_writer();
    w.write_record(["n", "r", "estimate", "ci95", "expected", "n_samples", "seed"]).map_err(csv_err)?;
    w.write_record([
        n.to_string(),
        r.to_string(),
        format!("{:e}", est.value),
        format!("{:e}", est.half_width_95),
        expected.to_string(),
        est.n_samples.to_string(),
        est.seed.to_string(),
    ])
    .map_err(csv_err)?;
    Ok(Output { csv: finish(w)?, results: json!({ "estimate": est, "expected": expected }) })
}

/// Columns `n, r, d, volume`.
fn volume(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut w = csv_writer();
    w.write_record(["n", "r", "d", "volume"]).map_err(csv_err)?;
    let mut rows = Vec::new();
    for d in cfg.degrees() {
        let dm = dims(cfg, d)?;
        let v = volume_identity(dm);
        w.write_record([dm.n.to_string(), dm.r.to_string(), d.to_string(), format!("{v:e}")]).map_err(csv_err)?;
        rows.push(json!({ "d": d, "volume": v }));
    }
    Ok(Output { csv: finish(w)?, results: json!({ "rows": rows }) })
}

fn disc_tail(cfg: &RunConfig) -> Result<Output, CliError> {
    let restarts = cfg.restarts.unwrap();
    let mut opts = TailOptions::default();
    opts.min.restarts = restarts;
    opts.screen_restarts = opts.screen_restarts.min(restarts);
    let rep = tail_experiment(
        cfg.case.unwrap(),
        cfg.n.unwrap(),
        cfg.r.unwrap(),
        cfg.n_samples.unwrap(),
        &default_eps_grid(),
        cfg.seed.unwrap(),
        &opts,
    )?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    Ok(Output {
        csv,
        results: json!({
            "case": rep.which,
            "codim": rep.codim,
            "slope": rep.slope,
            "slope_se": rep.slope_se,
            "expected_slope": 2 * rep.codim,
            "fit_range": rep.fit_range,
        }),
    })
}

/// One decay table per threshold, concatenated under a single header.
fn decay(cfg: &RunConfig) -> Result<Output, CliError> {
    let opts = estimator_options(cfg);
    let (curv, n, r) = (cfg.curv.unwrap(), cfg.n.unwrap(), cfg.r.unwrap());
    let mut csv = Vec::new();
    let mut fits = Vec::new();
    for (i, a) in cfg.thresholds().into_iter().enumerate() {
        let rep = decay_curve(curv, n, r, a, &cfg.degrees(), cfg.n_samples.unwrap(), cfg.seed.unwrap(), &opts)?;
        let mut part = Vec::new();
        rep.write_csv(&mut part)?;
        let skip = if i == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(part.len(), |p| p + 1) };
        csv.extend_from_slice(&part[skip..]);
        fits.push(json!({
            "a": a,
            "slope": rep.slope,
            "slope_se": rep.slope_se,
            "fit_points": rep.fit_points,
            "exponent": rep.exponent,
            "bound": -rep.exponent,
        }));
    }
    Ok(Output { csv, results: json!({ "fits": fits }) })
}

/// Samples the system with `system_seed` and slices it with lines derived
/// from the same seed, so each CSV row can be regenerated from its seed.
fn system_density(cfg: &RunConfig, system_seed: u64) -> Result<EmpiricalDensity, CliError> {
    let dm = dims(cfg, cfg.degrees()[0])?;
    let sys = sample_system(dm, cfg.convention.unwrap(), system_seed)?;
    let ctx = MetricContext::fubini_study();
    let (curv, a) = (cfg.curv.unwrap(), cfg.a.unwrap());
    Ok(empirical_density(&sys, system_seed, curv, a, cfg.points.unwrap(), derive_seed(system_seed, 1), &ctx)?)
}

/// Per-point CSV of all systems; the summary compares the mean fraction of
/// points below -a with one minus the Kac–Rice estimate of the fraction above.
fn cross_validate(cfg: &RunConfig) -> Result<Output, CliError> {
    let (curv, a, seed) = (cfg.curv.unwrap(), cfg.a.unwrap(), cfg.seed.unwrap());
    let dm = dims(cfg, cfg.degrees()[0])?;
    let est = expected_density_above(curv, dm, a, cfg.n_samples.unwrap(), seed, &estimator_options(cfg))?;
    let mut fractions = Vec::new();
    let mut rows = Vec::new();
    for i in 0..cfg.systems.unwrap() as u64 {
        let mut density = system_density(cfg, derive_seed(seed, i))?;
        fractions.push(density.estimate.value);
        rows.append(&mut density.rows);
    }
    let (below, half) = mean_ci(&fractions);
    let predicted = 1.0 - est.value;
    let combined = est.half_width_95.hypot(half);
    let mut csv = Vec::new();
    write_points_csv(&mut csv, &rows)?;
    Ok(Output {
        csv,
        results: json!({
            "estimator": est,
            "estimator_below": predicted,
            "geometry_below": below,
            "geometry_ci95": half,
            "difference": (predicted - below).abs(),
            "combined_ci95": combined,
            "agree": (predicted - below).abs() <= combined,
        }),
    })
}

fn single_density(cfg: &RunConfig) -> Result<Output, CliError> {
    let density = system_density(cfg, cfg.seed.unwrap())?;
    let mut csv = Vec::new();
    write_points_csv(&mut csv, &density.rows)?;
    Ok(Output { csv, results: json!({ "estimate": density.estimate }) })
}

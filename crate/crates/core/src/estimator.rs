//! Kac–Rice Monte Carlo: expected volume fractions of the zero locus where a
//! curvature exceeds -a, their decay in the degree, and two closed-form
//! identities used as calibration (the Wishart determinant and the volume).
//!
//! By unitary invariance the Kac–Rice integrand is constant over CP^n, so the
//! expected fraction reduces to E[1_event det(S S^*)] / E[det(S S^*)] with
//! (S, T) drawn from the jet law at one point conditioned on F = 0.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{hb_tilde_filter, Curv, CurvatureOptions, FilterOutcome, KernelForm};
use crate::error::{Error, Result};
use crate::jetlaw::{kostlan_jet_covariance, CovarianceModel, JetSampler};
use crate::kostlan::{Convention, Dims, Jet2, MetricContext};
use crate::linalg::{hermitian_det, right_singular, TRANSVERSE_RATIO};
use crate::rng::{complex_normal, derive_seed, stream};
use crate::stats::{loglog_slope, ratio_estimate, Z95};
use crate::C64;

/// Inputs echoed alongside every estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub kind: String,
    pub curv: Option<Curv>,
    pub n: usize,
    pub r: usize,
    pub d: Option<u32>,
    pub a: Option<f64>,
    pub convention: Convention,
    pub filter: Option<bool>,
    pub in_theorem_regime: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub half_width_95: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub params: EstimateParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub convention: Convention,
    /// Use the hb-tilde certificate before optimising (hbc and hc only).
    pub filter: bool,
    pub curvature: CurvatureOptions,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { convention: Convention::VarTwo, filter: true, curvature: CurvatureOptions::default() }
    }
}

/// Exponent of d in the decay bound for each curvature.
pub fn theorem_exponent(curv: Curv, n: usize, r: usize) -> f64 {
    let (n, r) = (n as f64, r as f64);
    match curv {
        Curv::Hbc => 3.0 * r - 2.0 * n + 2.0,
        Curv::Hc => 2.0 * r - n + 1.0,
        Curv::Ricci => r * (n - r) - (n - r - 1.0),
        Curv::Scal => 0.5 * r * (n - r) * (n - r + 1.0),
    }
}

/// Checks the hypothesis under which the decay bound holds.
pub fn theorem_regime(curv: Curv, n: usize, r: usize) -> Result<()> {
    match curv {
        Curv::Hbc if 3 * r < 2 * n - 1 => Err(Error::Regime(format!(
            "hbc decay needs 3r ≥ 2n−1, got 3r = {} < 2n−1 = {}",
            3 * r,
            2 * n - 1
        ))),
        Curv::Hc if 2 * r < n => {
            Err(Error::Regime(format!("hc decay needs 2r ≥ n, got 2r = {} < n = {n}", 2 * r)))
        }
        _ => Ok(()),
    }
}

fn is_transverse(jet: &Jet2) -> bool {
    let (sv, _) = right_singular(&jet.s);
    let r = jet.r();
    sv[r - 1] > TRANSVERSE_RATIO * sv[0]
}

/// A transverse draw from stream `k`; non-transverse draws (a null event) are
/// replaced by the next draw of the same stream.
fn transverse_draw(sampler: &JetSampler, seed: u64, k: u64) -> Result<Jet2> {
    let mut rng = stream(seed, k);
    for _ in 0..100 {
        let jet = sampler.sample(&mut rng);
        if is_transverse(&jet) {
            return Ok(jet);
        }
    }
    Err(Error::Numerical(format!("sample {k}: 100 consecutive non-transverse jets")))
}

/// Whether sup curv > -a for one rescaled jet of degree d.
pub fn curvature_event(jet: &Jet2, curv: Curv, d: u32, a: f64, ctx: &MetricContext, opts: &EstimatorOptions) -> Result<bool> {
    let c = d as f64;
    if opts.filter && matches!(curv, Curv::Hbc | Curv::Hc) {
        let cert = hb_tilde_filter(&jet.s, &jet.t, a, c, ctx, &opts.curvature)?;
        if cert == FilterOutcome::CertifiedBelow {
            return Ok(false);
        }
    }
    let form = KernelForm::new(&jet.s, &jet.t, ctx, c)?;
    Ok(form.sup(curv, &opts.curvature)? > -a)
}

/// Weighted per-sample outcome of the Kac–Rice ratio.
fn weighted_events(
    cov: &CovarianceModel,
    curv: Curv,
    a: f64,
    n_samples: usize,
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let sampler = JetSampler::new(cov, true)?;
    let d = match cov.label {
        crate::jetlaw::CovLabel::KostlanExact(d) => d,
        crate::jetlaw::CovLabel::BargmannFock => cov.dims.d,
    };
    let ctx = MetricContext::fubini_study();
    let out: Result<Vec<(f64, bool)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let jet = transverse_draw(&sampler, seed, k)?;
            let weight = hermitian_det(&(&jet.s * jet.s.adjoint()));
            let mut o = *opts;
            o.curvature.seed = derive_seed(seed, k);
            Ok((weight, curvature_event(&jet, curv, d, a, &ctx, &o)?))
        })
        .collect();
    Ok(out?.into_iter().unzip())
}

/// Kac–Rice ratio for an arbitrary jet law whose samples are rescaled jets
/// of degree `cov.dims.d`.
pub fn density_above_for_law(
    cov: &CovarianceModel,
    curv: Curv,
    a: f64,
    n_samples: usize,
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    if !(a >= 0.0) {
        return Err(Error::InvalidDims(format!("threshold a must be >= 0, got {a}")));
    }
    if n_samples == 0 {
        return Err(Error::InsufficientSamples("n_samples must be positive".into()));
    }
    let start = Instant::now();
    let (weights, events) = weighted_events(cov, curv, a, n_samples, seed, opts)?;
    let est = ratio_estimate(&weights, &events);
    let dims = cov.dims;
    Ok(EstimateWithCI {
        value: est.value,
        half_width_95: est.half_width_95,
        n_samples,
        seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
        params: EstimateParams {
            kind: "density-above".into(),
            curv: Some(curv),
            n: dims.n,
            r: dims.r,
            d: Some(dims.d),
            a: Some(a),
            convention: opts.convention,
            filter: Some(opts.filter),
            in_theorem_regime: Some(theorem_regime(curv, dims.n, dims.r).is_ok()),
        },
    })
}

/// Expected volume fraction of Z(s) where sup curv > -a, for the Kostlan
/// ensemble of degree `dims.d`.
pub fn expected_density_above(curv: Curv, dims: Dims, a: f64, n_samples: usize, seed: u64, opts: &EstimatorOptions) -> Result<EstimateWithCI> {
    let cov = kostlan_jet_covariance(dims, dims.d)?.with_convention(opts.convention);
    density_above_for_law(&cov, curv, a, n_samples, seed, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterAudit {
    pub n_samples: usize,
    pub certified: usize,
    /// Samples certified below -a whose optimised supremum is above -a.
    pub contradictions: usize,
}

/// Compares the certificate with the full curvature report on every sample.
pub fn filter_audit(curv: Curv, dims: Dims, a: f64, n_samples: usize, seed: u64, opts: &EstimatorOptions) -> Result<FilterAudit> {
    let cov = kostlan_jet_covariance(dims, dims.d)?.with_convention(opts.convention);
    let sampler = JetSampler::new(&cov, true)?;
    let ctx = MetricContext::fubini_study();
    let c = dims.d as f64;
    let rows: Result<Vec<(bool, bool)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let jet = transverse_draw(&sampler, seed, k)?;
            let mut co = opts.curvature;
            co.seed = derive_seed(seed, k);
            let cert = hb_tilde_filter(&jet.s, &jet.t, a, c, &ctx, &co)? == FilterOutcome::CertifiedBelow;
            let above = KernelForm::new(&jet.s, &jet.t, &ctx, c)?.sup(curv, &co)? > -a;
            Ok((cert, cert && above))
        })
        .collect();
    let rows = rows?;
    Ok(FilterAudit {
        n_samples,
        certified: rows.iter().filter(|r| r.0).count(),
        contradictions: rows.iter().filter(|r| r.1).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub curv: Curv,
    pub n: usize,
    pub r: usize,
    pub d: u32,
    pub a: f64,
    pub estimate: f64,
    pub ci95: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub curv: Curv,
    pub n: usize,
    pub r: usize,
    pub a: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of log estimate against log d, if at least two
    /// points exceed ten times their half-width.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub fit_points: usize,
    pub exponent: f64,
}

/// Per-degree seeds are derived from the master seed and the degree.
pub fn decay_curve(
    curv: Curv,
    n: usize,
    r: usize,
    a: f64,
    d_list: &[u32],
    n_samples: usize,
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<DecayReport> {
    theorem_regime(curv, n, r)?;
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let dims = Dims::new(n, r, d)?;
        let row_seed = derive_seed(seed, d as u64);
        let est = expected_density_above(curv, dims, a, n_samples, row_seed, opts)?;
        rows.push(DecayRow {
            curv,
            n,
            r,
            d,
            a,
            estimate: est.value,
            ci95: est.half_width_95,
            n_samples,
            seed: row_seed,
        });
    }
    let fit: Vec<&DecayRow> = rows.iter().filter(|row| row.estimate > 10.0 * row.ci95).collect();
    let xs: Vec<f64> = fit.iter().map(|row| row.d as f64).collect();
    let ys: Vec<f64> = fit.iter().map(|row| row.estimate).collect();
    let (slope, slope_se) = match loglog_slope(&xs, &ys) {
        Some((s, se)) if fit.len() >= 2 => (Some(s), Some(se)),
        _ => (None, None),
    };
    Ok(DecayReport { curv, n, r, a, fit_points: fit.len(), rows, slope, slope_se, exponent: theorem_exponent(curv, n, r) })
}

impl DecayReport {
    /// CSV with columns `curv, n, r, d, a, estimate, ci95, n_samples, seed`:
    /// one row per degree, then a row with d = `slope` holding the fitted
    /// slope in `estimate` and its 95% half-width in `ci95` (both empty when
    /// no fit was possible) and the number of fitted points in `n_samples`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["curv", "n", "r", "d", "a", "estimate", "ci95", "n_samples", "seed"])?;
        for row in &self.rows {
            out.write_record([
                row.curv.name().to_string(),
                row.n.to_string(),
                row.r.to_string(),
                row.d.to_string(),
                row.a.to_string(),
                format!("{:e}", row.estimate),
                format!("{:e}", row.ci95),
                row.n_samples.to_string(),
                row.seed.to_string(),
            ])?;
        }
        let seed = self.rows.first().map(|r| r.seed.to_string()).unwrap_or_default();
        out.write_record([
            self.curv.name().to_string(),
            self.n.to_string(),
            self.r.to_string(),
            "slope".to_string(),
            self.a.to_string(),
            self.slope.map(|s| s.to_string()).unwrap_or_default(),
            self.slope_se.map(|s| (Z95 * s).to_string()).unwrap_or_default(),
            self.fit_points.to_string(),
            seed,
        ])?;
        out.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// E[det(S S^*)] rho_F(0) for S and F with the Bargmann–Fock law of the
/// given convention: S has i.i.d. entries with E|S_ij|^2 = pi v and F has
/// E|F_i|^2 = v, where v is the coefficient variance. r = n is allowed.
pub fn wishart_check(n: usize, r: usize, n_samples: usize, seed: u64, convention: Convention) -> Result<EstimateWithCI> {
    if n == 0 || r == 0 || r > n {
        return Err(Error::InvalidDims(format!("need 1 <= r <= n, got n = {n}, r = {r}")));
    }
    if n_samples < 2 {
        return Err(Error::InsufficientSamples("need at least two samples".into()));
    }
    let start = Instant::now();
    let v = convention.variance();
    let sd = (std::f64::consts::PI * v).sqrt();
    let dets: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k);
            let s = crate::linalg::CMat::from_fn(r, n, |_, _| complex_normal(&mut rng) * sd);
            hermitian_det(&(&s * s.adjoint()))
        })
        .collect();
    let rho = 1.0 / (std::f64::consts::PI * v).powi(r as i32);
    let (mean, half) = crate::stats::mean_ci(&dets);
    Ok(EstimateWithCI {
        value: mean * rho,
        half_width_95: half * rho,
        n_samples,
        seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
        params: EstimateParams {
            kind: "wishart".into(),
            curv: None,
            n,
            r,
            d: None,
            a: None,
            convention,
            filter: None,
            in_theorem_regime: None,
        },
    })
}

/// n! / (n - r)!.
pub fn falling_factorial(n: usize, r: usize) -> f64 {
    ((n - r + 1)..=n).map(|k| k as f64).product()
}

/// Expected volume d^r / (n - r)! of the zero locus in CP^n, total volume 1/n!.
pub fn volume_identity(dims: Dims) -> f64 {
    let fact: f64 = (1..=(dims.n - dims.r)).map(|k| k as f64).product();
    (dims.d as f64).powi(dims.r as i32) / fact
}

/// Scales the second-derivative part of a law by `c`, keeping S and F.
pub fn scale_second_derivative(cov: &CovarianceModel, c: f64) -> CovarianceModel {
    let l = cov.layout();
    let start = l.dim_f() + l.dim_s();
    let mut out = cov.clone();
    for a in 0..l.len() {
        for b in 0..l.len() {
            let f = (if a >= start { c } else { 1.0 }) * (if b >= start { c } else { 1.0 });
            out.matrix[(a, b)] *= C64::from(f);
        }
    }
    out
}

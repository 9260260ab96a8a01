//! Symmetric complex bilinear maps, minima of their Fubini–Study norms and
//! distances to the three discriminants.
//!
//! For T in Sym_C(p, r) (r symmetric p x p matrices) the three minima are
//! * bilinear: min over unit x, y of |T(x, y)|,
//! * quadratic: min over unit x of |T(x, x)|,
//! * linearised: min over unit x of |(T_i(e_j, x))_{i,j}|, the smallest
//!   singular value of the r p x p matrix stacking the T_i.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kostlan::adapted_frame;
use crate::linalg::{hermitian_eigen, right_singular, CMat, CVec};
use crate::rng::{complex_normal, stream, unit_sphere};
use crate::stats::loglog_slope;
use crate::C64;

/// r complex symmetric p x p matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBilinear {
    p: usize,
    mats: Vec<CMat>,
}

impl SymBilinear {
    /// Symmetrises the given matrices.
    pub fn new(mats: Vec<CMat>) -> Result<Self> {
        let p = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if mats.is_empty() || p == 0 || mats.iter().any(|m| m.shape() != (p, p)) {
            return Err(Error::InvalidDims("need r >= 1 square matrices of equal size".into()));
        }
        let half = C64::from(0.5);
        let mats = mats.into_iter().map(|m| (&m + m.transpose()) * half).collect();
        Ok(SymBilinear { p, mats })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.mats.len()
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    /// Gaussian law with independent entries, Var T_jj = 2 and Var T_jk = 1
    /// (j < k), times `variance`.
    pub fn sample_goe<R: Rng + ?Sized>(p: usize, r: usize, variance: f64, rng: &mut R) -> Self {
        let sd = variance.sqrt();
        let mats = (0..r)
            .map(|_| {
                let mut m = CMat::zeros(p, p);
                for j in 0..p {
                    m[(j, j)] = complex_normal(rng) * (2f64.sqrt() * sd);
                    for k in j + 1..p {
                        let z = complex_normal(rng) * sd;
                        m[(j, k)] = z;
                        m[(k, j)] = z;
                    }
                }
                m
            })
            .collect();
        SymBilinear { p, mats }
    }

    /// (x^T T_i y)_i.
    pub fn eval(&self, x: &CVec, y: &CVec) -> CVec {
        CVec::from_iterator(self.r(), self.mats.iter().map(|t| (x.transpose() * t * y)[(0, 0)]))
    }

    /// Frobenius norm over all components and all entries.
    pub fn frobenius(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: C64) -> Self {
        SymBilinear { p: self.p, mats: self.mats.iter().map(|m| m * c).collect() }
    }

    /// (x, y) -> T(U x, U y).
    pub fn compose_unitary(&self, u: &CMat) -> Self {
        SymBilinear { p: self.p, mats: self.mats.iter().map(|m| u.transpose() * m * u).collect() }
    }

    /// The r p x p matrix whose rows are the rows of T_1, ..., T_r.
    pub fn stacked(&self) -> CMat {
        let mut s = CMat::zeros(self.r() * self.p, self.p);
        for (i, m) in self.mats.iter().enumerate() {
            s.view_mut((i * self.p, 0), (self.p, self.p)).copy_from(m);
        }
        s
    }

    /// The r x p matrix y -> T(x, y).
    fn partial(&self, x: &CVec) -> CMat {
        let mut m = CMat::zeros(self.r(), self.p);
        for (i, t) in self.mats.iter().enumerate() {
            let row = t * x; // T_i symmetric: x^T T_i = (T_i x)^T
            for j in 0..self.p {
                m[(i, j)] = row[j];
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscCase {
    Bilinear,
    Quadratic,
    Linearized,
}

/// Complex codimension bound of the discriminant for (n, r).
pub fn codim(which: DiscCase, n: usize, r: usize) -> Result<usize> {
    if r < 1 || r > n {
        return Err(Error::InvalidDims(format!("need 1 <= r <= n, got n = {n}, r = {r}")));
    }
    let (n, r) = (n as i64, r as i64);
    let value = match which {
        DiscCase::Bilinear => {
            if 3 * r <= 2 * n - 2 {
                return Err(Error::Regime(format!("bilinear case needs 3r > 2n-2 (3*{r} <= {})", 2 * n - 2)));
            }
            3 * r - 2 * n + 2
        }
        DiscCase::Quadratic => {
            if 2 * r <= n - 1 {
                return Err(Error::Regime(format!("quadratic case needs 2r > n-1 (2*{r} <= {})", n - 1)));
            }
            2 * r - n + 1
        }
        DiscCase::Linearized => r * (n - r) - (n - r - 1),
    };
    Ok(value as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinOptions {
    pub restarts: usize,
    /// Relative decrease below which an iteration counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for MinOptions {
    fn default() -> Self {
        MinOptions { restarts: 64, tol: 1e-13, max_iter: 500, seed: 0 }
    }
}

/// Outcome of a minimisation with its witness.
#[derive(Debug, Clone, PartialEq)]
pub struct MinResult {
    pub value: f64,
    pub x: CVec,
    pub y: CVec,
    /// Objective after each half-step of the best restart (bilinear only).
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Smallest eigenpair of a Hermitian matrix, closed form for 2 x 2.
fn smallest_eigenpair(m: &CMat) -> (f64, CVec) {
    if m.nrows() == 1 {
        return (m[(0, 0)].re, CVec::from_element(1, C64::from(1.0)));
    }
    if m.nrows() == 2 {
        let a = m[(0, 0)].re;
        let c = m[(1, 1)].re;
        let b = m[(0, 1)];
        let half = 0.5 * (a - c);
        let lam = 0.5 * (a + c) - (half * half + b.norm_sqr()).sqrt();
        let v1 = CVec::from_vec(vec![b, C64::from(lam - a)]);
        let v2 = CVec::from_vec(vec![C64::from(lam - c), b.conj()]);
        let v = if v1.norm_squared() >= v2.norm_squared() { v1 } else { v2 };
        let nv = v.norm();
        let v = if nv > 0.0 {
            v / C64::from(nv)
        } else if a <= c {
            CVec::from_vec(vec![C64::from(1.0), C64::from(0.0)])
        } else {
            CVec::from_vec(vec![C64::from(0.0), C64::from(1.0)])
        };
        return (lam.max(0.0), v);
    }
    let (vals, vecs) = hermitian_eigen(m);
    (vals[0].max(0.0), vecs.column(0).into_owned())
}

/// min over unit y of |T(x, y)| and its minimiser.
fn best_partner(t: &SymBilinear, x: &CVec) -> (f64, CVec) {
    let m = t.partial(x);
    if m.nrows() < m.ncols() {
        // wide: a null vector exists
        let (_, v) = right_singular(&m);
        let y = v.column(m.ncols() - 1).into_owned();
        return ((&m * &y).norm(), y);
    }
    let (_, y) = smallest_eigenpair(&(m.adjoint() * &m));
    ((&m * &y).norm(), y)
}

fn minimize_bilinear(t: &SymBilinear, opts: &MinOptions) -> MinResult {
    let mut rng = stream(opts.seed, 0);
    let mut best: Option<MinResult> = None;
    for _ in 0..opts.restarts.max(1) {
        let mut x = unit_sphere(&mut rng, t.p);
        let (mut val, mut y) = best_partner(t, &x);
        let mut trace = vec![val];
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let (vx, nx) = best_partner(t, &y);
            x = nx;
            let (vy, ny) = best_partner(t, &x);
            y = ny;
            trace.push(vx);
            trace.push(vy);
            let decrease = val - vy;
            val = vy;
            if decrease <= opts.tol * val || val < 1e-300 {
                converged = true;
                break;
            }
        }
        let val = t.eval(&x, &y).norm();
        if best.as_ref().is_none_or(|b| val < b.value) {
            best = Some(MinResult { value: val, x, y, trace, converged });
        }
    }
    best.expect("at least one restart")
}

fn quad_residual(t: &SymBilinear, x: &CVec) -> CVec {
    CVec::from_iterator(t.r(), t.mats.iter().map(|m| (x.transpose() * m * x)[(0, 0)]))
}

/// Levenberg–Marquardt on q(x) = (x^T T_i x)_i, with steps restricted to the
/// complex orthogonal complement of x and renormalisation after each step.
fn minimize_quadratic(t: &SymBilinear, opts: &MinOptions) -> MinResult {
    let mut rng = stream(opts.seed, 1);
    let mut best: Option<MinResult> = None;
    let p = t.p;
    for _ in 0..opts.restarts.max(1) {
        let mut x = unit_sphere(&mut rng, p);
        let mut q = quad_residual(t, &x);
        let mut g = q.norm_squared();
        let mut lambda = -1.0;
        let mut converged = p == 1;
        for _ in 0..opts.max_iter {
            if converged || g < 1e-300 {
                converged = true;
                break;
            }
            let basis = adapted_frame(x.as_slice()).expect("unit vector").columns(1, p - 1).into_owned();
            let mut jac = CMat::zeros(t.r(), p);
            for (i, m) in t.mats.iter().enumerate() {
                let row = m * &x * C64::from(2.0);
                for j in 0..p {
                    jac[(i, j)] = row[j];
                }
            }
            let jt = jac * &basis;
            let normal = jt.adjoint() * &jt;
            let rhs = -(jt.adjoint() * &q);
            if lambda < 0.0 {
                lambda = 1e-3 * normal.diagonal().iter().map(|z| z.re).fold(0.0, f64::max).max(1e-300);
            }
            let mut accepted = false;
            for _ in 0..40 {
                let damped = &normal + CMat::identity(p - 1, p - 1) * C64::from(lambda);
                let Some(c) = damped.lu().solve(&rhs) else {
                    lambda *= 4.0;
                    continue;
                };
                let cand = &x + &basis * c;
                let cand = &cand / C64::from(cand.norm());
                let qc = quad_residual(t, &cand);
                let gc = qc.norm_squared();
                if gc < g {
                    let decrease = g - gc;
                    x = cand;
                    q = qc;
                    g = gc;
                    lambda = (lambda / 3.0).max(1e-300);
                    accepted = true;
                    if decrease <= opts.tol * g {
                        converged = true;
                    }
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                converged = true;
            }
        }
        let val = g.sqrt();
        if best.as_ref().is_none_or(|b| val < b.value) {
            best = Some(MinResult { value: val, x: x.clone(), y: x, trace: Vec::new(), converged });
        }
    }
    best.expect("at least one restart")
}

fn minimize_linearized(t: &SymBilinear) -> MinResult {
    let s = t.stacked();
    let (sv, v) = right_singular(&s);
    let k = t.p - 1;
    let x = v.column(k).into_owned();
    MinResult { value: sv[k], x: x.clone(), y: x, trace: Vec::new(), converged: true }
}

/// Minimiser and minimum of the sphere norm for the given case.
pub fn minimize(t: &SymBilinear, which: DiscCase, opts: &MinOptions) -> MinResult {
    match which {
        DiscCase::Bilinear => minimize_bilinear(t, opts),
        DiscCase::Quadratic => minimize_quadratic(t, opts),
        DiscCase::Linearized => minimize_linearized(t),
    }
}

pub fn min_sphere_norm(t: &SymBilinear, which: DiscCase, opts: &MinOptions) -> f64 {
    minimize(t, which, opts).value
}

/// (n - r)^{-1} times the sphere minimum, with n = p + r. Bilinear and
/// quadratic distances are only defined when 3r > 2n - 2.
pub fn dist_to_discriminant(t: &SymBilinear, which: DiscCase, opts: &MinOptions) -> Result<f64> {
    let (p, r) = (t.p(), t.r());
    let n = p + r;
    if matches!(which, DiscCase::Bilinear | DiscCase::Quadratic) && 3 * r <= 2 * n - 2 {
        return Err(Error::Regime(format!("distance formula needs 3r > 2n-2 (3*{r} <= {})", 2 * n - 2)));
    }
    Ok(min_sphere_norm(t, which, opts) / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub eps: f64,
    pub count: u64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub which: DiscCase,
    pub n: usize,
    pub r: usize,
    pub codim: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<TailRow>,
    pub slope: f64,
    pub slope_se: f64,
    /// eps range used by the fit.
    pub fit_range: (f64, f64),
}

/// Minimum count for a grid point to enter the slope fit.
pub const TAIL_MIN_COUNT: u64 = 100;

/// Log-spaced grid 10^{-4} .. 1 with 16 points per decade.
pub fn default_eps_grid() -> Vec<f64> {
    (0..=64).map(|k| 10f64.powf(-4.0 + k as f64 / 16.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailOptions {
    pub min: MinOptions,
    /// Restarts of the screening pass over all samples.
    pub screen_restarts: usize,
    /// Samples whose screened statistic is at most `refine_factor` times the
    /// upper end of the fit window are minimised again with `min.restarts`.
    pub refine_factor: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            min: MinOptions { tol: 1e-10, ..MinOptions::default() },
            screen_restarts: 2,
            refine_factor: 2.0,
        }
    }
}

fn sample_statistic(which: DiscCase, p: usize, r: usize, seed: u64, k: u64, restarts: usize, opts: &TailOptions) -> f64 {
    let mut rng = stream(seed, k);
    let t = SymBilinear::sample_goe(p, r, 1.0, &mut rng);
    let mut mo = opts.min;
    mo.seed = crate::rng::derive_seed(seed, k);
    mo.restarts = restarts.max(1);
    min_sphere_norm(&t, which, &mo) / (p as f64 * t.frobenius())
}

/// dist(T) / |T|_F for the samples `0..n_samples` of the GOE-weighted law.
pub fn tail_statistics(which: DiscCase, p: usize, r: usize, n_samples: usize, seed: u64, restarts: usize, opts: &TailOptions) -> Vec<f64> {
    (0..n_samples as u64)
        .into_par_iter()
        .map(|k| sample_statistic(which, p, r, seed, k, restarts, opts))
        .collect()
}

fn tail_rows(stats: &[f64], grid: &[f64]) -> Vec<TailRow> {
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&eps| {
            let count = sorted.partition_point(|&s| s <= eps) as u64;
            TailRow { eps, count, prob: count as f64 / stats.len() as f64 }
        })
        .collect()
}

/// Grid rows from the first one with [`TAIL_MIN_COUNT`] counts up to one
/// decade of probability above it.
fn fit_window(rows: &[TailRow]) -> Result<&[TailRow]> {
    let first = rows
        .iter()
        .position(|row| row.count >= TAIL_MIN_COUNT)
        .ok_or_else(|| Error::InsufficientSamples(format!("no grid point reaches {TAIL_MIN_COUNT} counts")))?;
    let p_lo = rows[first].prob;
    let len = rows[first..].iter().take_while(|row| row.prob <= 10.0 * p_lo).count();
    if len < 2 {
        return Err(Error::InsufficientSamples("fewer than two grid points in the fit window".into()));
    }
    Ok(&rows[first..first + len])
}

/// Empirical law of dist(T) / |T|_F under the GOE-weighted Gaussian on
/// Sym_C(n - r, r), with a log-log slope fitted over the first probability
/// decade whose counts reach [`TAIL_MIN_COUNT`].
pub fn tail_experiment(
    which: DiscCase,
    n: usize,
    r: usize,
    n_samples: usize,
    eps_grid: &[f64],
    seed: u64,
    opts: &TailOptions,
) -> Result<TailReport> {
    let codim = codim(which, n, r)?;
    if r >= n {
        return Err(Error::InvalidDims("tail experiment needs r < n".into()));
    }
    let p = n - r;
    let mut grid = eps_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut stats = tail_statistics(which, p, r, n_samples, seed, opts.screen_restarts, opts);
    if which != DiscCase::Linearized && opts.screen_restarts < opts.min.restarts {
        let hi = fit_window(&tail_rows(&stats, &grid))?.last().unwrap().eps;
        let cut = opts.refine_factor * hi;
        let refined: Vec<(usize, f64)> = stats
            .par_iter()
            .enumerate()
            .filter(|(_, &s)| s <= cut)
            .map(|(k, &s)| (k, s.min(sample_statistic(which, p, r, seed, k as u64, opts.min.restarts, opts))))
            .collect();
        for (k, s) in refined {
            stats[k] = s;
        }
    }
    let rows = tail_rows(&stats, &grid);
    let window = fit_window(&rows)?;
    let xs: Vec<f64> = window.iter().map(|r| r.eps).collect();
    let ys: Vec<f64> = window.iter().map(|r| r.prob).collect();
    let (slope, slope_se) = loglog_slope(&xs, &ys).ok_or_else(|| Error::Numerical("degenerate fit".into()))?;
    let fit_range = (xs[0], *xs.last().unwrap());
    Ok(TailReport { which, n, r, codim, n_samples, seed, rows, slope, slope_se, fit_range })
}

impl TailReport {
    /// CSV with columns `eps, count, prob, codim, slope_fit`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["eps", "count", "prob", "codim", "slope_fit"])?;
        for row in &self.rows {
            out.write_record([
                format!("{:e}", row.eps),
                row.count.to_string(),
                format!("{:e}", row.prob),
                self.codim.to_string(),
                format!("{}", self.slope),
            ])?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

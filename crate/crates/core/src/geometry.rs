//! Ground truth on actual zero loci of single polynomials (r = 1): points
//! sampled by slicing with random projective lines, and an independent
//! finite-difference curvature for curves in CP^2.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{Curv, CurvatureOptions, KernelForm};
use crate::error::{Error, Result};
use crate::estimator::{EstimateParams, EstimateWithCI};
use crate::kostlan::{adapted_frame, monomial_count, physical_jet, MetricContext, PolySystem};
use crate::linalg::{right_singular, CMat, CVec, TRANSVERSE_RATIO};
use crate::rng::{complex_normal, derive_seed, stream};
use crate::stats::mean_ci;
use crate::C64;

/// Relative residual accepted for a point of Z(s).
pub const RESIDUAL_TOL: f64 = 1e-10;

/// A point of Z(s) found on a projective line.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLocusPoint {
    /// Unit representative in C^{n+1}.
    pub x: CVec,
    /// Orthonormal pair spanning the line.
    pub source_line: (CVec, CVec),
    /// |s(x)| divided by the sup-norm proxy of s.
    pub newton_residual: f64,
    /// Set when refinement merged this root with another one.
    pub multiple: bool,
}

/// Upper bound for sup over the unit sphere of |s_i|, from Cauchy–Schwarz
/// in the unitary basis.
pub fn sup_proxy(sys: &PolySystem) -> f64 {
    let dims = sys.dims();
    let norm = sys.coeffs().iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max);
    norm * (monomial_count(dims.n, dims.d) as f64).sqrt()
}

fn require_hypersurface(sys: &PolySystem) -> Result<()> {
    if sys.dims().r != 1 {
        return Err(Error::InvalidDims(format!("slicing needs r = 1, got r = {}", sys.dims().r)));
    }
    Ok(())
}

/// Coefficients c_0..c_d of t -> s(u + t v) by interpolation at the
/// (d+1)-th roots of unity.
fn restriction_coeffs(sys: &PolySystem, u: &CVec, v: &CVec) -> Vec<C64> {
    let d = sys.dims().d as usize;
    let m = d + 1;
    let vals: Vec<C64> = (0..m)
        .map(|k| {
            let t = C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64);
            sys.eval((u + v * t).as_slice())[0]
        })
        .collect();
    (0..m)
        .map(|j| {
            vals.iter()
                .enumerate()
                .map(|(k, &p)| p * C64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / m as f64))
                .sum::<C64>()
                / m as f64
        })
        .collect()
}

/// Roots of c_0 + c_1 t + ... + c_d t^d from the companion matrix.
fn polynomial_roots(c: &[C64]) -> Result<Vec<C64>> {
    let d = c.len() - 1;
    let lead = c[d];
    if lead.norm() == 0.0 {
        return Err(Error::Numerical("restricted polynomial drops degree".into()));
    }
    let mut comp = CMat::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = C64::from(1.0);
    }
    for i in 0..d {
        comp[(i, d - 1)] = -c[i] / lead;
    }
    let eig = comp
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("companion eigenvalues did not converge".into()))?;
    Ok(eig.iter().copied().collect())
}

/// Newton refinement of a root of s on the line through u and v, in the
/// affine coordinate where the root has modulus at most one.
fn refine_on_line(sys: &PolySystem, u: &CVec, v: &CVec, t: C64) -> CVec {
    let (base, dir, mut t) = if t.norm() <= 1.0 { (u, v, t) } else { (v, u, t.inv()) };
    for _ in 0..50 {
        let z = base + dir * t;
        let (val, grad, _) = sys.eval_derivs(z.as_slice());
        let deriv = (grad.row(0) * dir)[(0, 0)];
        if deriv.norm() == 0.0 {
            break;
        }
        let step = val[0] / deriv;
        t -= step;
        if step.norm() <= 1e-15 * (1.0 + t.norm()) {
            break;
        }
    }
    let z = base + dir * t;
    &z / C64::from(z.norm())
}

/// Haar-random orthonormal pair in C^{n+1}.
fn haar_line(nv: usize, seed: u64) -> (CVec, CVec) {
    let mut rng = stream(seed, 0);
    let g = CMat::from_fn(nv, 2, |_, _| complex_normal(&mut rng));
    let q = g.qr().q();
    (q.column(0).into_owned(), q.column(1).into_owned())
}

/// The d points of Z(s) on the line spanned by the orthonormal pair (u, v).
pub fn slice_line(sys: &PolySystem, u: &CVec, v: &CVec) -> Result<Vec<ZeroLocusPoint>> {
    require_hypersurface(sys)?;
    let proxy = sup_proxy(sys);
    let roots = polynomial_roots(&restriction_coeffs(sys, u, v))?;
    let mut points: Vec<ZeroLocusPoint> = roots
        .into_iter()
        .map(|t| {
            let x = refine_on_line(sys, u, v, t);
            let residual = sys.eval(x.as_slice())[0].norm() / proxy;
            ZeroLocusPoint { x, source_line: (u.clone(), v.clone()), newton_residual: residual, multiple: false }
        })
        .collect();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let overlap = points[i].x.dotc(&points[j].x).norm();
            if overlap > 1.0 - 1e-14 {
                points[i].multiple = true;
                points[j].multiple = true;
            }
        }
    }
    if let Some(bad) = points.iter().find(|p| p.newton_residual > RESIDUAL_TOL) {
        return Err(Error::Numerical(format!("root refinement residual {:e}", bad.newton_residual)));
    }
    Ok(points)
}

fn is_transverse_at(sys: &PolySystem, x: &CVec) -> bool {
    let u = adapted_frame(x.as_slice()).expect("unit representative");
    let n = sys.dims().n;
    let (_, grad, _) = sys.eval_derivs(x.as_slice());
    let scale = grad.norm().max(f64::MIN_POSITIVE);
    let (sv, _) = right_singular(&(grad * u.columns(1, n)));
    sv[0] > TRANSVERSE_RATIO * scale
}

/// The d intersection points of Z(s) with a Haar-random projective line.
/// Lines meeting Z(s) non-transversally or failing refinement are replaced
/// by the next line drawn from the seed.
pub fn slice_points(sys: &PolySystem, seed: u64) -> Result<Vec<ZeroLocusPoint>> {
    require_hypersurface(sys)?;
    let nv = sys.dims().n + 1;
    let mut last_err = None;
    for attempt in 0..20u64 {
        let (u, v) = haar_line(nv, derive_seed(seed, attempt));
        match slice_line(sys, &u, &v) {
            Ok(points) if points.iter().all(|p| !p.multiple && is_transverse_at(sys, &p.x)) => return Ok(points),
            Ok(_) => last_err = Some(Error::NotTransverse { sigma_min: 0.0, sigma_max: 1.0 }),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Numerical("slicing failed".into())))
}

/// -e^{-2u} (u_aa + u_bb) at the origin by the five-point Laplacian at steps
/// h and h/2, combined by Richardson extrapolation.
pub fn conformal_curvature(log_factor: impl Fn(f64, f64) -> Result<f64>, h: f64) -> Result<f64> {
    let u0 = log_factor(0.0, 0.0)?;
    let lap = |h: f64| -> Result<f64> {
        let s = log_factor(h, 0.0)? + log_factor(-h, 0.0)? + log_factor(0.0, h)? + log_factor(0.0, -h)?;
        Ok((s - 4.0 * u0) / (h * h))
    };
    let (l1, l2) = (lap(h)?, lap(0.5 * h)?);
    let lap = (4.0 * l2 - l1) / 3.0;
    Ok(-(-2.0 * u0).exp() * lap)
}

/// Gaussian curvature at 0 of the graph w = f(z) in flat C^2, from its
/// conformal factor e^{2u} = 1 + |f'(z)|^2.
pub fn fd_curvature_graph(df: impl Fn(C64) -> C64, step: f64) -> Result<f64> {
    conformal_curvature(|a, b| Ok(0.5 * (1.0 + df(C64::new(a, b)).norm_sqr()).ln()), step)
}

/// Fubini–Study metric of CP^2 in the affine chart z -> [1 : z], normalised
/// so that lines have area 1, applied to (V, V).
fn chart_metric(z: &CVec, v: &CVec) -> f64 {
    let q = 1.0 + z.norm_squared();
    (v.norm_squared() / q - z.dotc(v).norm_sqr() / (q * q)) / PI
}

/// Holomorphic sectional (= Gaussian) curvature of the curve Z(s) in CP^2 at
/// `point`, computed without jets: Z(s) is parametrised near the point by the
/// implicit function theorem in the chart z -> [U(1, z)], the Fubini–Study
/// metric is pulled back to a conformal factor, and its Laplacian is taken by
/// finite differences with relative step `step`.
pub fn fd_curvature(sys: &PolySystem, point: &ZeroLocusPoint, step: f64) -> Result<f64> {
    require_hypersurface(sys)?;
    if sys.dims().n != 2 {
        return Err(Error::InvalidDims("finite-difference curvature is implemented for plane curves".into()));
    }
    let u = adapted_frame(point.x.as_slice())?;
    let lift = |z: &CVec| -> CVec { &u * CVec::from_vec(vec![C64::from(1.0), z[0], z[1]]) };
    let chart = |z: &CVec| -> (C64, CVec, CMat) {
        let (val, grad, hess) = sys.eval_derivs(lift(z).as_slice());
        let tangent = u.columns(1, 2);
        let g = (grad * tangent).transpose();
        let h = tangent.transpose() * &hess[0] * tangent;
        (val[0], CVec::from_iterator(2, g.iter().copied()), h)
    };
    let origin = CVec::zeros(2);
    let (_, g0, h0) = chart(&origin);
    let gnorm = g0.norm();
    if gnorm == 0.0 {
        return Err(Error::NotTransverse { sigma_min: 0.0, sigma_max: 1.0 });
    }
    let normal = g0.map(|z| z.conj()) / C64::from(gnorm);
    let tangent_dir = CVec::from_vec(vec![g0[1], -g0[0]]) / C64::from(gnorm);
    let length = (gnorm / h0.norm().max(f64::MIN_POSITIVE)).min(1.0);
    let h = step * length;
    let log_factor = |a: f64, b: f64| -> Result<f64> {
        let zeta = C64::new(a, b);
        let mut w = C64::from(0.0);
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let z = &tangent_dir * zeta + &normal * w;
            let (val, grad, _) = chart(&z);
            let delta = val / (grad.transpose() * &normal)[(0, 0)];
            w -= delta;
            last = delta.norm();
            if last <= 1e-16 * (1.0 + w.norm()) {
                break;
            }
        }
        if !(last <= 1e-13 * (1.0 + w.norm())) {
            return Err(Error::Numerical("implicit parametrisation did not converge".into()));
        }
        let z = &tangent_dir * zeta + &normal * w;
        let (_, grad, _) = chart(&z);
        let dw = -(grad.transpose() * &tangent_dir)[(0, 0)] / (grad.transpose() * &normal)[(0, 0)];
        let velocity = &tangent_dir + &normal * dw;
        Ok(0.5 * chart_metric(&z, &velocity).ln())
    };
    conformal_curvature(log_factor, h)
}

/// Per-point curvature values for one system, grouped by line.
pub fn point_curvatures(
    sys: &PolySystem,
    curv: Curv,
    n_points: usize,
    seed: u64,
    ctx: &MetricContext,
) -> Result<Vec<Vec<f64>>> {
    require_hypersurface(sys)?;
    let d = sys.dims().d as usize;
    let n_lines = n_points.div_ceil(d).max(1);
    let opts = CurvatureOptions { seed, ..Default::default() };
    (0..n_lines as u64)
        .into_par_iter()
        .map(|l| {
            let points = slice_points(sys, derive_seed(seed, l))?;
            points
                .iter()
                .map(|p| {
                    let jet = physical_jet(sys, p.x.as_slice(), ctx)?;
                    KernelForm::new(&jet.s, &jet.t, ctx, 1.0)?.sup(curv, &opts)
                })
                .collect()
        })
        .collect()
}

/// Row of the per-point CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub system_seed: u64,
    pub point_idx: usize,
    pub curv_value: f64,
    pub below_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDensity {
    pub estimate: EstimateWithCI,
    pub rows: Vec<PointRow>,
}

/// Fraction of the volume of Z(s) where sup curv < -a, from slice points.
/// Every point of each sampled line is used (ceil(n_points / d) lines); the
/// 95% half-width treats lines as independent clusters.
pub fn empirical_density(
    sys: &PolySystem,
    system_seed: u64,
    curv: Curv,
    a: f64,
    n_points: usize,
    seed: u64,
    ctx: &MetricContext,
) -> Result<EmpiricalDensity> {
    let start = Instant::now();
    let lines = point_curvatures(sys, curv, n_points, seed, ctx)?;
    let per_line: Vec<f64> = lines
        .iter()
        .map(|vals| vals.iter().filter(|&&v| v < -a).count() as f64 / vals.len() as f64)
        .collect();
    let (value, half) = mean_ci(&per_line);
    let rows: Vec<PointRow> = lines
        .iter()
        .flatten()
        .enumerate()
        .map(|(point_idx, &v)| PointRow { system_seed, point_idx, curv_value: v, below_threshold: v < -a })
        .collect();
    let dims = sys.dims();
    Ok(EmpiricalDensity {
        estimate: EstimateWithCI {
            value,
            half_width_95: half,
            n_samples: rows.len(),
            seed,
            runtime_seconds: start.elapsed().as_secs_f64(),
            params: EstimateParams {
                kind: "empirical-density-below".into(),
                curv: Some(curv),
                n: dims.n,
                r: dims.r,
                d: Some(dims.d),
                a: Some(a),
                convention: sys.convention(),
                filter: None,
                in_theorem_regime: None,
            },
        },
        rows,
    })
}

/// CSV with columns `system_seed, point_idx, curv_value, below_threshold`.
pub fn write_points_csv<W: std::io::Write>(w: W, rows: &[PointRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

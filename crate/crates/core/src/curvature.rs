//! Curvatures of a transverse zero locus Z(s) at a point, from the 2-jet (S, T).
//!
//! In a g-orthonormal frame the Gauss equation reads
//!
//! hbc_Z(X, Y) = hbc_M(X, Y) - 2 c T(X, Y)^* (S S^*)^{-1} T(X, Y)
//!
//! for unit X, Y in ker S, with c = 1 for physical jets and c = d for jets
//! rescaled by sqrt(d) and d.

use serde::{Deserialize, Serialize};

use crate::discriminant::{minimize, DiscCase, MinOptions, SymBilinear};
use crate::error::{Error, Result};
use crate::kostlan::{Jet2, JetScale, MetricContext};
use crate::linalg::{hermitian_eigen, inverse_cholesky_factor, kernel_basis, op_norm, CMat, CVec};
use crate::rng::{stream, unit_sphere};
use crate::C64;

const UNIT_TOL: f64 = 1e-10;
const KERNEL_TOL: f64 = 1e-10;

fn check_unit(v: &CVec) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// S G S^* in a g-orthonormal frame, where G is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    a: CMat,
}

impl GramMatrix {
    pub fn new(a: CMat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidDims("Gram matrix must be square".into()));
        }
        let scale = a.norm().max(f64::MIN_POSITIVE);
        if (&a - a.adjoint()).norm() > 1e-12 * scale {
            return Err(Error::Numerical("Gram matrix is not Hermitian".into()));
        }
        let a = (&a + a.adjoint()) * C64::from(0.5);
        Ok(GramMatrix { a })
    }

    pub fn from_jacobian(s: &CMat) -> Self {
        let a = s * s.adjoint();
        GramMatrix { a: (&a + a.adjoint()) * C64::from(0.5) }
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }
}

/// Holomorphic bisectional curvature of the ambient space on unit X, Y.
pub fn ambient_hbc(x: &CVec, y: &CVec, ctx: &MetricContext) -> Result<f64> {
    check_unit(x)?;
    check_unit(y)?;
    Ok(0.5 * ctx.hbc_bound * (1.0 + x.dotc(y).norm_sqr()))
}

/// v^* A^{-1} v.
pub fn sff_quadratic(a: &GramMatrix, v: &CVec) -> Result<f64> {
    let w = inverse_cholesky_factor(&a.a)?;
    Ok((w * v).norm_squared())
}

/// (X^T T_i Y)_i.
pub fn apply_second(t: &[CMat], x: &CVec, y: &CVec) -> CVec {
    CVec::from_iterator(t.len(), t.iter().map(|ti| (x.transpose() * ti * y)[(0, 0)]))
}

/// The curvature multiplier c of a jet: 1 when physical, d when rescaled.
pub fn d_scale(jet: &Jet2, d: u32) -> f64 {
    match jet.scale {
        JetScale::Physical => 1.0,
        JetScale::Rescaled => d as f64,
    }
}

/// hbc of Z(s) on unit X, Y in ker S.
pub fn hbc_at(s: &CMat, t: &[CMat], x: &CVec, y: &CVec, ctx: &MetricContext, d_scale: f64) -> Result<f64> {
    let gram = GramMatrix::from_jacobian(s);
    let scale = op_norm(s).max(f64::MIN_POSITIVE);
    for v in [x, y] {
        let residual = (s * v).norm() / scale;
        if residual > KERNEL_TOL {
            return Err(Error::NotInKernel { residual });
        }
    }
    let ambient = ambient_hbc(x, y, ctx)?;
    Ok(ambient - 2.0 * d_scale * sff_quadratic(&gram, &apply_second(t, x, y))?)
}

/// The four curvatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curv {
    Hbc,
    Hc,
    Ricci,
    Scal,
}

impl Curv {
    pub const ALL: [Curv; 4] = [Curv::Hbc, Curv::Hc, Curv::Ricci, Curv::Scal];

    pub fn name(self) -> &'static str {
        match self {
            Curv::Hbc => "hbc",
            Curv::Hc => "hc",
            Curv::Ricci => "ricci",
            Curv::Scal => "scal",
        }
    }
}

impl std::str::FromStr for Curv {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hbc" => Ok(Curv::Hbc),
            "hc" => Ok(Curv::Hc),
            "ricci" => Ok(Curv::Ricci),
            "scal" => Ok(Curv::Scal),
            other => Err(Error::InvalidDims(format!("unknown curvature '{other}'"))),
        }
    }
}

impl std::fmt::Display for Curv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        CurvatureOptions { restarts: 32, tol: 1e-8, max_iter: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerMeta {
    pub restarts: usize,
    pub converged: bool,
    /// Maximisers in the coordinates of S's domain.
    pub hbc_witness: (CVec, CVec),
    pub hc_witness: CVec,
    pub ricci_witness: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub sup_hbc: f64,
    pub sup_hc: f64,
    pub sup_ricci: f64,
    pub scal: f64,
    pub meta: OptimizerMeta,
}

impl CurvatureReport {
    pub fn get(&self, which: Curv) -> f64 {
        match which {
            Curv::Hbc => self.sup_hbc,
            Curv::Hc => self.sup_hc,
            Curv::Ricci => self.sup_ricci,
            Curv::Scal => self.scal,
        }
    }
}

/// The second fundamental form whitened by the Gram matrix and written in an
/// orthonormal basis K of ker S: hbc(X, Y) = alpha (1 + |X^* Y|^2)
/// - 2 c sum_k |X^T W_k Y|^2 for unit X, Y in C^m.
#[derive(Debug, Clone)]
pub struct KernelForm {
    pub basis: CMat,
    pub w: Vec<CMat>,
    pub alpha: f64,
    pub c: f64,
}

impl KernelForm {
    pub fn new(s: &CMat, t: &[CMat], ctx: &MetricContext, d_scale: f64) -> Result<Self> {
        let (basis, _, _) = kernel_basis(s)?;
        let white = inverse_cholesky_factor(&GramMatrix::from_jacobian(s).a)?;
        let t_ker: Vec<CMat> = t.iter().map(|ti| basis.transpose() * ti * &basis).collect();
        let m = basis.ncols();
        let w = (0..t.len())
            .map(|k| {
                let mut acc = CMat::zeros(m, m);
                for (i, ti) in t_ker.iter().enumerate() {
                    acc += ti * white[(k, i)];
                }
                acc
            })
            .collect();
        Ok(KernelForm { basis, w, alpha: 0.5 * ctx.hbc_bound, c: d_scale })
    }

    pub fn m(&self) -> usize {
        self.basis.ncols()
    }

    pub fn hbc(&self, x: &CVec, y: &CVec) -> f64 {
        let sff: f64 = self.w.iter().map(|wk| (x.transpose() * wk * y)[(0, 0)].norm_sqr()).sum();
        self.alpha * (1.0 + x.dotc(y).norm_sqr()) - 2.0 * self.c * sff
    }

    /// Y -> Y^* H_X Y + alpha equals hbc(X, Y) on the unit sphere.
    fn partial_form(&self, x: &CVec) -> CMat {
        let mut h = (x * x.adjoint()) * C64::from(self.alpha);
        for wk in &self.w {
            let b = wk * x;
            h -= (b.map(|z| z.conj()) * b.transpose()) * C64::from(2.0 * self.c);
        }
        (&h + h.adjoint()) * C64::from(0.5)
    }

    fn best_partner(&self, x: &CVec) -> (f64, CVec) {
        let (vals, vecs) = hermitian_eigen(&self.partial_form(x));
        let y = vecs.column(self.m() - 1).into_owned();
        (self.alpha + vals[self.m() - 1], y)
    }

    /// Alternating maximisation of hbc over pairs of unit vectors.
    pub fn sup_hbc(&self, opts: &CurvatureOptions) -> (f64, CVec, CVec, bool) {
        let m = self.m();
        if m == 1 {
            let e = CVec::from_element(1, C64::from(1.0));
            return (self.hbc(&e, &e), e.clone(), e, true);
        }
        let mut rng = stream(opts.seed, 2);
        let mut best = (f64::NEG_INFINITY, CVec::zeros(m), CVec::zeros(m), false);
        for _ in 0..opts.restarts.max(1) {
            let mut x = unit_sphere(&mut rng, m);
            let (mut val, mut y) = self.best_partner(&x);
            let mut converged = false;
            for _ in 0..opts.max_iter {
                let (_, nx) = self.best_partner(&y);
                x = nx;
                let (v, ny) = self.best_partner(&x);
                y = ny;
                let gain = v - val;
                val = v;
                if gain <= opts.tol * val.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            let val = self.hbc(&x, &y);
            if val > best.0 {
                best = (val, x, y, converged);
            }
        }
        best
    }

    /// max hc = 2 alpha - 2 c min_X |(X^T W_k X)_k|^2.
    pub fn sup_hc(&self, opts: &CurvatureOptions) -> Result<(f64, CVec, bool)> {
        let form = SymBilinear::new(self.w.clone())?;
        let mo = MinOptions { restarts: opts.restarts, tol: opts.tol, max_iter: opts.max_iter, seed: opts.seed };
        let res = minimize(&form, DiscCase::Quadratic, &mo);
        Ok((self.hbc(&res.x, &res.x), res.x, res.converged))
    }

    /// max Ricci = alpha (m + 1) - 2 c lambda_min(sum_k W_k^* W_k).
    pub fn sup_ricci(&self) -> (f64, CVec) {
        let m = self.m();
        let mut gram = CMat::zeros(m, m);
        for wk in &self.w {
            gram += wk.adjoint() * wk;
        }
        let (vals, vecs) = hermitian_eigen(&gram);
        (self.alpha * (m as f64 + 1.0) - 2.0 * self.c * vals[0], vecs.column(0).into_owned())
    }

    /// Ricci(X) = sum_i hbc(X, e_i).
    pub fn ricci(&self, x: &CVec) -> f64 {
        let m = self.m();
        (0..m)
            .map(|i| {
                let mut e = CVec::zeros(m);
                e[i] = C64::from(1.0);
                self.hbc(x, &e)
            })
            .sum()
    }

    /// scal = alpha (m^2 + m) - 2 c sum_k |W_k|_F^2.
    pub fn scal(&self) -> f64 {
        let m = self.m() as f64;
        self.alpha * (m * m + m) - 2.0 * self.c * self.w.iter().map(|wk| wk.norm_squared()).sum::<f64>()
    }

    /// The supremum (or value, for scal) of one curvature.
    pub fn sup(&self, which: Curv, opts: &CurvatureOptions) -> Result<f64> {
        if self.m() == 1 {
            let e = CVec::from_element(1, C64::from(1.0));
            return Ok(self.hbc(&e, &e));
        }
        Ok(match which {
            Curv::Hbc => {
                let hc = self.sup_hc(opts)?.0;
                self.sup_hbc(opts).0.max(hc)
            }
            Curv::Hc => self.sup_hc(opts)?.0,
            Curv::Ricci => self.sup_ricci().0,
            Curv::Scal => self.scal(),
        })
    }
}

pub fn curvature_report(s: &CMat, t: &[CMat], ctx: &MetricContext, d_scale: f64, opts: &CurvatureOptions) -> Result<CurvatureReport> {
    let form = KernelForm::new(s, t, ctx, d_scale)?;
    let lift = |v: &CVec| &form.basis * v;
    let (hbc, hx, hy, hbc_conv) = form.sup_hbc(opts);
    let (sup_hc, cx, hc_conv) = form.sup_hc(opts)?;
    let (sup_ricci, rx) = form.sup_ricci();
    let (sup_hbc, hbc_witness) = if sup_hc > hbc { (sup_hc, (lift(&cx), lift(&cx))) } else { (hbc, (lift(&hx), lift(&hy))) };
    Ok(CurvatureReport {
        sup_hbc,
        sup_hc,
        sup_ricci,
        scal: form.scal(),
        meta: OptimizerMeta {
            restarts: opts.restarts,
            converged: hbc_conv && hc_conv,
            hbc_witness,
            hc_witness: lift(&cx),
            ricci_witness: lift(&rx),
        },
    })
}

/// [`curvature_report`] for a jet, with c read off its scale.
pub fn report_for_jet(jet: &Jet2, d: u32, ctx: &MetricContext, opts: &CurvatureOptions) -> Result<CurvatureReport> {
    curvature_report(&jet.s, &jet.t, ctx, d_scale(jet, d), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOutcome {
    CertifiedBelow,
    Undecided,
}

/// Certifies sup_hbc < -a from the bound v^* A^{-1} v >= |v|^2 / |S|^2:
/// with mu the minimum of |T(X, Y)| over unit X, Y in ker S, every hbc is at
/// most h - 2 c mu^2 / |S|^2.
pub fn hb_tilde_filter(
    s: &CMat,
    t: &[CMat],
    a: f64,
    d_scale: f64,
    ctx: &MetricContext,
    opts: &CurvatureOptions,
) -> Result<FilterOutcome> {
    let (basis, _, sigma_max) = kernel_basis(s)?;
    let t_ker: Vec<CMat> = t.iter().map(|ti| basis.transpose() * ti * &basis).collect();
    let form = SymBilinear::new(t_ker)?;
    let mo = MinOptions { restarts: opts.restarts, tol: opts.tol.min(1e-10), max_iter: opts.max_iter, seed: opts.seed };
    let mu = minimize(&form, DiscCase::Bilinear, &mo).value;
    let bound = ctx.hbc_bound - 2.0 * d_scale * mu * mu / (sigma_max * sigma_max);
    Ok(if bound < -a { FilterOutcome::CertifiedBelow } else { FilterOutcome::Undecided })
}

//! Kostlan (Fubini–Study) random polynomial systems on CP^n and their 2-jets.
//!
//! A system is an r-tuple of degree-d homogeneous polynomials in n+1 complex
//! variables, written in the unitary monomial basis
//! `sqrt((n+d)! / (n! a_0! ... a_n!)) Z^a`. Coefficients are stored densely,
//! one block of `binomial(n+d, n)` entries per component, in the order
//! produced by [`multi_indices`].

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{complex_normal, stream};
use crate::C64;

/// Ambient dimension `n`, codimension `r` and degree `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub r: usize,
    pub d: u32,
}

impl Dims {
    pub fn new(n: usize, r: usize, d: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDims(format!("n = {n} must be at least 2")));
        }
        if r < 1 || r > n - 1 {
            return Err(Error::InvalidDims(format!("r = {r} must satisfy 1 <= r <= n-1 = {}", n - 1)));
        }
        if d < 1 {
            return Err(Error::InvalidDims("degree must be at least 1".into()));
        }
        Ok(Dims { n, r, d })
    }

    /// Complex dimension of the zero locus.
    pub fn m(&self) -> usize {
        self.n - self.r
    }

    pub fn with_degree(&self, d: u32) -> Result<Self> {
        Dims::new(self.n, self.r, d)
    }
}

/// Variance convention for the Gaussian coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// E|a|^2 = 2: real and imaginary parts have variance 1.
    #[default]
    VarTwo,
    /// E|a|^2 = 1: real and imaginary parts have variance 1/2.
    VarOne,
}

impl Convention {
    /// E|a|^2 of a single coefficient.
    pub fn variance(self) -> f64 {
        match self {
            Convention::VarTwo => 2.0,
            Convention::VarOne => 1.0,
        }
    }
}

/// Metric data of the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    /// Factor converting a chart-Euclidean derivative at the chart centre into
    /// a derivative along a g-unit vector.
    pub frame_scale: f64,
    /// max |hbc| of the ambient manifold.
    pub hbc_bound: f64,
}

impl MetricContext {
    /// CP^n with the Fubini–Study form normalised to total area 1 on a line.
    pub fn fubini_study() -> Self {
        MetricContext { frame_scale: PI.sqrt(), hbc_bound: 4.0 * PI }
    }

    /// Flat C^n with the Euclidean metric.
    pub fn flat() -> Self {
        MetricContext { frame_scale: 1.0, hbc_bound: 0.0 }
    }
}

impl Default for MetricContext {
    fn default() -> Self {
        Self::fubini_study()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JetScale {
    Physical,
    /// S divided by sqrt(d), T divided by d.
    Rescaled,
}

/// Value, first and second covariant derivative of a section at a point, in a
/// g-orthonormal frame of the tangent space and a unit frame of the fibre.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    /// r-vector.
    pub f: CVec,
    /// r x n.
    pub s: CMat,
    /// r complex symmetric n x n matrices.
    pub t: Vec<CMat>,
    pub scale: JetScale,
}

/// Relative asymmetry tolerated before symmetrisation.
const ASYMMETRY_TOL: f64 = 1e-10;

impl Jet2 {
    /// Builds a jet, symmetrising each T_i. Fails if some T_i is visibly
    /// non-symmetric.
    pub fn new(f: CVec, s: CMat, t: Vec<CMat>, scale: JetScale) -> Result<Self> {
        let r = f.len();
        let n = s.ncols();
        if s.nrows() != r || t.len() != r || t.iter().any(|ti| ti.shape() != (n, n)) {
            return Err(Error::InvalidDims("inconsistent jet shapes".into()));
        }
        let t = t
            .into_iter()
            .map(|ti| {
                let asym = (&ti - ti.transpose()).norm();
                let size = ti.norm();
                if asym > ASYMMETRY_TOL * size.max(f64::MIN_POSITIVE) && asym > 0.0 {
                    return Err(Error::Numerical(format!("second derivative asymmetric ({asym:e})")));
                }
                Ok((&ti + ti.transpose()) * C64::from(0.5))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Jet2 { f, s, t, scale })
    }

    pub fn zeros(r: usize, n: usize, scale: JetScale) -> Self {
        Jet2 { f: CVec::zeros(r), s: CMat::zeros(r, n), t: vec![CMat::zeros(n, n); r], scale }
    }

    pub fn r(&self) -> usize {
        self.f.len()
    }

    pub fn n(&self) -> usize {
        self.s.ncols()
    }

    /// Multiplies the whole jet by `c` (the jet of `c * s`).
    pub fn scaled(&self, c: C64) -> Self {
        Jet2 {
            f: &self.f * c,
            s: &self.s * c,
            t: self.t.iter().map(|t| t * c).collect(),
            scale: self.scale,
        }
    }
}

/// All multi-indices of length `nvars` and total degree `d`, with the
/// exponent of Z_0 decreasing first.
pub fn multi_indices(nvars: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: u32, remaining_vars: usize, out: &mut Vec<Vec<u32>>) {
        if remaining_vars == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(prefix, left - e, remaining_vars - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars > 0 {
        rec(&mut Vec::with_capacity(nvars), d, nvars, &mut out);
    }
    out
}

/// binomial(n + d, n), the number of monomials per component.
pub fn monomial_count(n: usize, d: u32) -> usize {
    let mut c: u128 = 1;
    for k in 1..=n as u128 {
        c = c * (d as u128 + k) / k;
    }
    c as usize
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Weight `sqrt((n+d)! / (n! a_0! ... a_n!))` of the unitary monomial basis,
/// evaluated in log-space. `alpha` has n+1 entries summing to `d`.
pub fn kostlan_basis_coeff(n: usize, d: u32, alpha: &[u32]) -> Result<f64> {
    if alpha.len() != n + 1 {
        return Err(Error::InvalidDims(format!("multi-index of length {} for n = {n}", alpha.len())));
    }
    let total: u32 = alpha.iter().sum();
    if total != d {
        return Err(Error::DegreeMismatch { expected: d, got: total });
    }
    let ln = ln_factorial(n as u32 + d) - ln_factorial(n as u32) - alpha.iter().map(|&a| ln_factorial(a)).sum::<f64>();
    Ok((0.5 * ln).exp())
}

/// An r-tuple of homogeneous polynomials, stored by coordinates in the
/// unitary Kostlan basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    dims: Dims,
    convention: Convention,
    monomials: Vec<Vec<u32>>,
    weights: Vec<f64>,
    /// coeffs[i][k]: coordinate of component i on basis monomial k.
    coeffs: Vec<Vec<C64>>,
}

impl PolySystem {
    /// Builds a system from its coordinates in the unitary basis.
    pub fn from_coefficients(dims: Dims, convention: Convention, coeffs: Vec<Vec<C64>>) -> Result<Self> {
        let monomials = multi_indices(dims.n + 1, dims.d);
        if coeffs.len() != dims.r || coeffs.iter().any(|c| c.len() != monomials.len()) {
            return Err(Error::InvalidDims(format!(
                "expected {} components of {} coefficients",
                dims.r,
                monomials.len()
            )));
        }
        let weights = monomials
            .iter()
            .map(|a| kostlan_basis_coeff(dims.n, dims.d, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolySystem { dims, convention, monomials, weights, coeffs })
    }

    /// Builds a system from plain monomial terms `(component, alpha, c)`
    /// meaning `c * Z^alpha` in component `component` (0-based).
    pub fn from_monomials(dims: Dims, terms: &[(usize, Vec<u32>, C64)]) -> Result<Self> {
        let mut sys = Self::from_coefficients(dims, Convention::VarOne, vec![vec![C64::from(0.0); monomial_count(dims.n, dims.d)]; dims.r])?;
        let index: HashMap<&[u32], usize> = sys.monomials.iter().enumerate().map(|(k, a)| (a.as_slice(), k)).collect();
        let mut updates = Vec::with_capacity(terms.len());
        for (i, alpha, c) in terms {
            if *i >= dims.r {
                return Err(Error::InvalidDims(format!("component {i} out of range")));
            }
            let total: u32 = alpha.iter().sum();
            if alpha.len() != dims.n + 1 || total != dims.d {
                return Err(Error::DegreeMismatch { expected: dims.d, got: total });
            }
            let k = index[alpha.as_slice()];
            updates.push((*i, k, *c));
        }
        for (i, k, c) in updates {
            let w = sys.weights[k];
            sys.coeffs[i][k] += c / w;
        }
        Ok(sys)
    }

    /// Draws a system with i.i.d. centred complex Gaussian coordinates.
    pub fn sample<R: Rng + ?Sized>(dims: Dims, convention: Convention, rng: &mut R) -> Result<Self> {
        let count = monomial_count(dims.n, dims.d);
        let sd = convention.variance().sqrt();
        let coeffs = (0..dims.r)
            .map(|_| (0..count).map(|_| complex_normal(rng) * sd).collect())
            .collect();
        Self::from_coefficients(dims, convention, coeffs)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn coeffs(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    /// Coordinate of component `i` (0-based) on the basis monomial `alpha`.
    pub fn coefficient(&self, i: usize, alpha: &[u32]) -> Option<C64> {
        let k = self.monomials.iter().position(|a| a.as_slice() == alpha)?;
        self.coeffs.get(i).map(|c| c[k])
    }

    /// The system `c * self`.
    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().flatten().for_each(|a| *a *= c);
        out
    }

    /// The system `self + other` (same dims).
    pub fn add(&self, other: &PolySystem) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::InvalidDims("adding systems of different dims".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().flatten().zip(other.coeffs.iter().flatten()) {
            *a += b;
        }
        Ok(out)
    }

    fn powers(&self, z: &[C64]) -> Vec<Vec<C64>> {
        let d = self.dims.d as usize;
        z.iter()
            .map(|&zk| {
                let mut p = Vec::with_capacity(d + 1);
                let mut acc = C64::from(1.0);
                for _ in 0..=d {
                    p.push(acc);
                    acc *= zk;
                }
                p
            })
            .collect()
    }

    /// Values of the r components at `z` in C^{n+1}.
    pub fn eval(&self, z: &[C64]) -> CVec {
        let pw = self.powers(z);
        let mut out = CVec::zeros(self.dims.r);
        for (k, alpha) in self.monomials.iter().enumerate() {
            let mono: C64 = alpha.iter().enumerate().map(|(j, &e)| pw[j][e as usize]).product::<C64>() * self.weights[k];
            for i in 0..self.dims.r {
                out[i] += self.coeffs[i][k] * mono;
            }
        }
        out
    }

    /// Value (r), gradient (r x (n+1)) and holomorphic Hessians (r matrices of
    /// size (n+1) x (n+1)) at `z` in C^{n+1}.
    pub fn eval_derivs(&self, z: &[C64]) -> (CVec, CMat, Vec<CMat>) {
        let nv = self.dims.n + 1;
        let r = self.dims.r;
        let pw = self.powers(z);
        let mut val = CVec::zeros(r);
        let mut grad = CMat::zeros(r, nv);
        let mut hess = vec![CMat::zeros(nv, nv); r];
        let one = C64::from(1.0);
        // exponent-shifted monomial: prod_j z_j^(alpha_j - shift_j) * falling factors
        let term = |alpha: &[u32], k: Option<usize>, l: Option<usize>| -> C64 {
            let mut coef = 1.0;
            let mut prod = one;
            for (j, &e) in alpha.iter().enumerate() {
                let shift = k.map_or(0, |k| (k == j) as u32) + l.map_or(0, |l| (l == j) as u32);
                if shift > e {
                    return C64::from(0.0);
                }
                for s in 0..shift {
                    coef *= (e - s) as f64;
                }
                prod *= pw[j][(e - shift) as usize];
            }
            prod * coef
        };
        for (idx, alpha) in self.monomials.iter().enumerate() {
            let w = self.weights[idx];
            let v = term(alpha, None, None) * w;
            let g: Vec<C64> = (0..nv).map(|k| if alpha[k] > 0 { term(alpha, Some(k), None) * w } else { C64::from(0.0) }).collect();
            let mut h = CMat::zeros(nv, nv);
            for k in 0..nv {
                if alpha[k] == 0 {
                    continue;
                }
                for l in k..nv {
                    if alpha[l] == 0 || (k == l && alpha[k] < 2) {
                        continue;
                    }
                    let x = term(alpha, Some(k), Some(l)) * w;
                    h[(k, l)] = x;
                    h[(l, k)] = x;
                }
            }
            for i in 0..r {
                let a = self.coeffs[i][idx];
                if a == C64::from(0.0) {
                    continue;
                }
                val[i] += a * v;
                for k in 0..nv {
                    grad[(i, k)] += a * g[k];
                }
                hess[i] += &h * a;
            }
        }
        (val, grad, hess)
    }
}

/// Draws a system deterministically from `seed`.
pub fn sample_system(dims: Dims, convention: Convention, seed: u64) -> Result<PolySystem> {
    PolySystem::sample(dims, convention, &mut stream(seed, 0))
}

const UNIT_TOL: f64 = 1e-12;

fn check_unit(x: &[C64]) -> Result<()> {
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// Unitary U with U e_0 = x, built from one Householder reflection.
///
/// With theta the phase of x_0, H reflects along v = x + theta e_0 and
/// U = H diag(-theta, 1, ..., 1). For x = e_0 this gives the identity.
pub fn adapted_frame(x: &[C64]) -> Result<CMat> {
    check_unit(x)?;
    let dim = x.len();
    let x0 = x[0];
    let theta = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::from(1.0) };
    let mut v = CVec::from_column_slice(x);
    v[0] += theta;
    let vv = v.norm_squared();
    let h = CMat::identity(dim, dim) - (&v * v.adjoint()) * C64::from(2.0 / vv);
    let mut u = h;
    let c0 = u.column(0) * (-theta);
    u.set_column(0, &c0);
    Ok(u)
}

/// The physical 2-jet of `sys` at the unit vector `x`.
///
/// The chart is z -> [U(1, z)] with U = adapted_frame(x), trivialised by the
/// holomorphic frame Z_0'^d whose Chern connection form vanishes at the centre.
/// There the covariant derivatives are the plain holomorphic ones, and each
/// derivative order picks up one factor of `ctx.frame_scale`.
pub fn physical_jet(sys: &PolySystem, x: &[C64], ctx: &MetricContext) -> Result<Jet2> {
    let u = adapted_frame(x)?;
    let n = sys.dims.n;
    let (val, grad, hess) = sys.eval_derivs(x);
    let tangent = u.columns(1, n);
    let s = &grad * tangent * C64::from(ctx.frame_scale);
    let fs2 = C64::from(ctx.frame_scale * ctx.frame_scale);
    let t = hess.iter().map(|h| tangent.transpose() * h * tangent * fs2).collect();
    Jet2::new(val, s, t, JetScale::Physical)
}

/// Jet of the rescaled field: S / sqrt(d), T / d, F unchanged.
pub fn rescale_jet(jet: &Jet2, d: u32) -> Result<Jet2> {
    if jet.scale != JetScale::Physical {
        return Err(Error::WrongScale { expected: "Physical" });
    }
    let sd = (d as f64).sqrt();
    Ok(Jet2 {
        f: jet.f.clone(),
        s: &jet.s / C64::from(sd),
        t: jet.t.iter().map(|t| t / C64::from(d as f64)).collect(),
        scale: JetScale::Rescaled,
    })
}

/// Inverse of [`rescale_jet`].
pub fn unrescale_jet(jet: &Jet2, d: u32) -> Result<Jet2> {
    if jet.scale != JetScale::Rescaled {
        return Err(Error::WrongScale { expected: "Rescaled" });
    }
    let sd = (d as f64).sqrt();
    Ok(Jet2 {
        f: jet.f.clone(),
        s: &jet.s * C64::from(sd),
        t: jet.t.iter().map(|t| t * C64::from(d as f64)).collect(),
        scale: JetScale::Physical,
    })
}
